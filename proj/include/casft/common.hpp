#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace casft {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Thrown for malformed inputs, dimension mismatches and configuration errors.
struct CasftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void fnv1a_update(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<std::uint64_t>(p[i]);
    h *= 0x100000001b3ULL;
  }
}

}  // namespace detail

/// FNV-1a 64-bit hash of a byte string, as a fixed-width hex string.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  detail::fnv1a_update(h, bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Hash of a matrix's shape and raw coefficients. Used for cache keys and
/// parameter-identity checks; not stable across float formats.
inline std::string hash_matrix(const Mat& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::int64_t r = m.rows(), c = m.cols();
  detail::fnv1a_update(h, &r, sizeof(r));
  detail::fnv1a_update(h, &c, sizeof(c));
  if (m.size() > 0) detail::fnv1a_update(h, m.data(), sizeof(double) * m.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline bool approx_eq(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace casft
