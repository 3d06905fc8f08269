#include "diff2dist/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace d2d {

namespace {

constexpr int kMaxSweeps = 64;

double offdiag_norm(const Matrix& a) {
    const int n = a.rows();
    double s = 0.0;
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
}

double worst_offdiag(const Matrix& a) {
    const int n = a.rows();
    double worst = 0.0;
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) worst = std::max(worst, std::fabs(a(p, q)));
    return worst;
}

}  // namespace

Spectrum eigh_sym(const Matrix& sym) {
    const int n = sym.rows();
    if (n != sym.cols()) throw std::runtime_error("eigh: matrix is not square");
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (sym(i, j) != sym(j, i))
                throw std::runtime_error("eigh: matrix is not symmetric at (" +
                                         std::to_string(i) + "," + std::to_string(j) + ")");

    Matrix a = sym;
    Matrix v = Matrix::identity(n);
    const double scale = frobenius_norm(a);
    const double tol = std::max(n, 4) * std::numeric_limits<double>::epsilon() * scale;

    bool converged = (scale == 0.0) || (offdiag_norm(a) <= tol);
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        int rotations = 0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                ++rotations;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t;
                if (std::fabs(theta) > 1e150) {
                    t = 0.5 / theta;  // avoids theta^2 overflow
                } else {
                    t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) t = -t;
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A <- J^T A J with J the (p,q) rotation
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = (rotations == 0) || (offdiag_norm(a) <= tol);
    }
    if (!converged)
        throw std::runtime_error("eigh: no convergence after " + std::to_string(kMaxSweeps) +
                                 " sweeps, worst off-diagonal " + std::to_string(worst_offdiag(a)));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&a](int i, int j) {
        if (a(i, i) != a(j, j)) return a(i, i) < a(j, j);
        return i < j;
    });

    Spectrum out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (int k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]);
        for (int i = 0; i < n; ++i) out.eigenvectors(i, k) = v(i, order[k]);
    }
    return out;
}

Spectrum eigh(const WeightedLaplacian& L) { return eigh_sym(L.m); }

Matrix loss_grad_wrt_laplacian(const Spectrum& s, std::span<const double> eigenvalue_grads) {
    const int n = static_cast<int>(s.eigenvalues.size());
    if (static_cast<int>(eigenvalue_grads.size()) != n)
        throw std::runtime_error("loss_grad_wrt_laplacian: expected " + std::to_string(n) +
                                 " eigenvalue gradients, got " +
                                 std::to_string(eigenvalue_grads.size()));
    for (double g : eigenvalue_grads)
        if (!std::isfinite(g))
            throw std::runtime_error("loss_grad_wrt_laplacian: non-finite eigenvalue gradient");

    Matrix out(n, n);
    const Matrix& v = s.eigenvectors;
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += eigenvalue_grads[k] * v(i, k) * v(j, k);
            out(i, j) = out(j, i) = acc;
        }
    }
    return out;
}

}  // namespace d2d
