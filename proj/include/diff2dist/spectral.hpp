#pragma once

#include <span>
#include <vector>

#include "diff2dist/graph.hpp"
#include "diff2dist/matrix.hpp"

namespace d2d {

// Eigenvalues ascending; eigenvectors column k pairs with eigenvalues[k].
struct Spectrum {
    std::vector<double> eigenvalues;
    Matrix eigenvectors;
};

// Cyclic Jacobi diagonalization of a symmetric matrix. Deterministic: fixed
// sweep order, eigenvalue sort ties broken by original column index.
// Throws on non-convergence, reporting the worst remaining off-diagonal.
Spectrum eigh_sym(const Matrix& sym);

Spectrum eigh(const WeightedLaplacian& L);

// Assembles sum_k g_k v_k v_k^T: the gradient of a loss that depends on the
// matrix only through its eigenvalues, with respect to the matrix entries.
// Symmetric by construction. At a numerically repeated eigenvalue this is a
// subgradient for the basis the solver returned, which is all an
// eigenvalue-only loss needs.
Matrix loss_grad_wrt_laplacian(const Spectrum& s, std::span<const double> eigenvalue_grads);

}  // namespace d2d
