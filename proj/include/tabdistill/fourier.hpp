#pragma once

#include "tabdistill/common.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <functional>
#include <vector>

namespace tabdistill {

/// Bit vector over the features of one sample: bit j set means feature j is
/// kept, clear means it is masked out.
class Mask {
 public:
  Mask() = default;
  Mask(std::uint64_t bits, int size) : bits_(bits), size_(size) {
    if (size < 0 || size > 64) throw Error("mask size out of range: " + std::to_string(size));
    if (size < 64 && (bits >> size) != 0) throw Error("mask has bits beyond its size");
  }
  static Mask ones(int size) { return {size == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << size) - 1, size}; }
  static Mask zeros(int size) { return {0, size}; }

  bool operator[](int j) const { return (bits_ >> j) & 1U; }
  std::uint64_t bits() const { return bits_; }
  int size() const { return size_; }
  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::uint64_t bits_ = 0;
  int size_ = 0;
};

/// (-1)^{|S ∩ m|} for subset and mask given as bit sets.
inline double parity_bits(std::uint64_t subset, std::uint64_t mask) {
  return (std::popcount(subset & mask) & 1) ? -1.0 : 1.0;
}

/// Parity basis function evaluated at a mask; throws if S leaves the mask.
double parity(const Subset& s, const Mask& m);

struct SurrogateDiagnostics {
  double holdout_r2 = 0.0;
  int queries = 0;  ///< distinct masks sent to the value function
  int budget = 0;
};

/// Sparse Boolean Fourier expansion: f(m) ≈ Σ_k coef_k · χ_{S_k}(m).
struct FourierSurrogate {
  int p = 0;
  int max_order = 0;
  std::vector<Subset> support;
  Vector coefficients;
  SurrogateDiagnostics diagnostics;

  double operator()(const Mask& m) const;
};

double eval_surrogate(const FourierSurrogate& s, const Mask& m);

using ValueFn = std::function<double(const Mask&)>;
/// Batched value function: one value per mask, in order.
using BatchValueFn = std::function<Vector(const std::vector<Mask>&)>;

struct SurrogateOptions {
  int p = 0;
  int max_order = 3;
  int budget = 500;
  int max_support = 20;
  double ridge = 1e-6;
  double residual_tol = 1e-8;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

inline constexpr int kMaxSurrogateFeatures = 30;

FourierSurrogate fit_surrogate(const BatchValueFn& value_fn, const SurrogateOptions& opts);
FourierSurrogate fit_surrogate(const ValueFn& value_fn, const SurrogateOptions& opts);

/// The masks fit_surrogate will query (distinct, anchors first).
std::vector<Mask> draw_masks(const SurrogateOptions& opts);

inline constexpr int kMaxWhtFeatures = 14;

/// Exact transform F(S) = 2^{-p} Σ_m f(m) χ_S(m); the table index of both
/// input and output is the bit set (mask or subset).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> brute_force_wht(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& values) {
  const auto n = values.size();
  if (n == 0 || (n & (n - 1)) != 0) throw Error("WHT table size must be a power of two");
  const int p = std::countr_zero(static_cast<std::uint64_t>(n));
  if (p > kMaxWhtFeatures) throw Error("WHT limited to p <= 14, got p = " + std::to_string(p));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> a = values;
  for (Eigen::Index h = 1; h < n; h <<= 1)
    for (Eigen::Index i = 0; i < n; i += 2 * h)
      for (Eigen::Index j = i; j < i + h; ++j) {
        const Scalar x = a(j), y = a(j + h);
        a(j) = x + y;
        a(j + h) = x - y;
      }
  return a / static_cast<Scalar>(n);
}

/// f(m) = Σ_S F(S) χ_S(m).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inverse_wht(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& coefs) {
  return brute_force_wht<Scalar>(coefs) * static_cast<Scalar>(coefs.size());
}

nlohmann::json to_json(const FourierSurrogate& s);
FourierSurrogate surrogate_from_json(const nlohmann::json& j);

}  // namespace tabdistill
