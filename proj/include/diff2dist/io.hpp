#pragma once

#include <cstdint>
#include <string>

namespace d2d {

inline constexpr const char* kToolVersion = "diff2dist 0.1.0";

uint64_t fnv1a64(const std::string& s);
std::string hash_hex(uint64_t h);

// Content goes to a temp file first and is renamed into place, so a failed
// run never leaves a partial output behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// "%.*g" with the given number of significant digits
std::string format_sig(double v, int digits = 12);

// "# key=value" header lines shared by every CSV the tool writes
std::string csv_provenance(uint64_t seed, const std::string& config_hash);

}  // namespace d2d
