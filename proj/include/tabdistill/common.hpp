#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabdistill {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Read-only view of one row, strided so matrix rows bind without a copy.
using RowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// A set of feature indices, kept sorted ascending and duplicate free.
using Subset = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Subset canonical(Subset s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

inline std::uint64_t subset_bits(const Subset& s) {
  std::uint64_t bits = 0;
  for (int j : s) {
    if (j < 0 || j >= 64) throw Error("feature index out of range: " + std::to_string(j));
    bits |= std::uint64_t{1} << j;
  }
  return bits;
}

inline Subset bits_subset(std::uint64_t bits) {
  Subset s;
  for (int j = 0; bits != 0; ++j, bits >>= 1)
    if (bits & 1U) s.push_back(j);
  return s;
}

std::string subset_string(const Subset& s);

/// Lexicographic comparison used for every deterministic tie-break.
inline bool subset_less(const Subset& a, const Subset& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Mixes a seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// 64-bit FNV-1a, stable across platforms; used for content digests.
std::uint64_t fnv1a(const std::string& text);
std::string hex_digest(const std::string& text);

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots so the outcome is independent of scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

/// Default worker count: TABDISTILL_JOBS if set, else hardware concurrency.
int default_jobs();

/// Binomial coefficient as a double (exact for the sizes used here).
double binomial(int n, int k);

/// All subsets of {0..p-1} with size <= max_order, ordered by size then
/// lexicographically; the empty set comes first.
std::vector<Subset> enumerate_subsets(int p, int max_order);

}  // namespace tabdistill
