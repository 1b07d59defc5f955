#pragma once

#include "tabdistill/common.hpp"
#include "tabdistill/fourier.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tabdistill {

/// Tabulated set function over the subsets of an active feature set A.
/// values(t) is f at the subset whose local bit i stands for active[i].
struct SetFunction {
  std::vector<int> active;
  Vector values;

  int n() const { return static_cast<int>(active.size()); }
  /// Local bit set for a global subset; throws if the subset leaves A.
  std::uint64_t local(const Subset& global) const;
  Subset global(std::uint64_t local_bits) const;
  double operator()(std::uint64_t local_bits) const { return values(static_cast<Eigen::Index>(local_bits)); }
};

inline constexpr int kMaxTabulated = 16;
inline constexpr int kMaxFsiiFeatures = 12;

SetFunction make_set_function(std::vector<int> active, Vector values);

enum class IndexKind { fbii, fsii, stii, bii, sii, mobius, fourier };

std::string to_string(IndexKind k);
IndexKind index_from_string(const std::string& s);
const std::vector<IndexKind>& all_index_kinds();

struct ScoredSubset {
  Subset subset;
  double score = 0.0;
};

struct IndexScores {
  IndexKind kind = IndexKind::fbii;
  int order = 0;
  std::vector<ScoredSubset> entries;

  std::optional<double> score(const Subset& s) const;
  /// Entries ordered by descending |score|, ties lexicographic.
  std::vector<ScoredSubset> ranked() const;
  /// Keeps only subsets with at least `min_size` features.
  IndexScores filtered(std::size_t min_size) const;
};

double discrete_derivative(const SetFunction& f, const Subset& s, const Subset& t);

/// In-place transforms over a 2^n table indexed by bit set.
Vector mobius_transform(const Vector& values);
Vector zeta_transform(const Vector& mobius);

IndexScores mobius(const SetFunction& f);
IndexScores fbii_from_fourier(const FourierSurrogate& s, int k);
IndexScores mobius_from_fourier(const FourierSurrogate& s);
double bii(const SetFunction& f, const Subset& s);
double sii(const SetFunction& f, const Subset& s);
IndexScores stii(const SetFunction& f, int k);
IndexScores fsii(const SetFunction& f, int k);
IndexScores fourier_index(const FourierSurrogate& s);

/// Table of all subsets of A with size <= k for the per-subset indices.
IndexScores bii_scores(const SetFunction& f, int k);
IndexScores sii_scores(const SetFunction& f, int k);

SetFunction restrict_surrogate(const FourierSurrogate& s);

/// Computes `kind` of order k for a surrogate: coefficient-based kinds
/// directly, the others through the restricted set function.
IndexScores compute_index(IndexKind kind, const FourierSurrogate& s, int k);

nlohmann::json to_json(const IndexScores& s);

}  // namespace tabdistill
