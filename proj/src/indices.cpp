#include "tabdistill/indices.hpp"

#include <cmath>
#include <iostream>
#include <map>

namespace tabdistill {

namespace {

int popcount(std::uint64_t b) { return std::popcount(b); }

double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Calls fn(sub) for every sub-bitset of `bits`, including 0 and bits.
template <typename Fn>
void for_each_subset(std::uint64_t bits, Fn&& fn) {
  std::uint64_t sub = bits;
  for (;;) {
    fn(sub);
    if (sub == 0) break;
    sub = (sub - 1) & bits;
  }
}

double derivative_local(const SetFunction& f, std::uint64_t s, std::uint64_t t) {
  const int size = popcount(s);
  double total = 0.0;
  for_each_subset(s, [&](std::uint64_t w) { total += ((size - popcount(w)) & 1 ? -1.0 : 1.0) * f(t | w); });
  return total;
}

std::vector<std::uint64_t> local_subsets_upto(int n, int k) {
  std::vector<std::uint64_t> out;
  for (const auto& s : enumerate_subsets(n, k)) out.push_back(subset_bits(s));
  return out;
}

IndexScores per_subset(const SetFunction& f, int k, IndexKind kind, double (*fn)(const SetFunction&, std::uint64_t)) {
  IndexScores out{kind, k, {}};
  for (auto s : local_subsets_upto(f.n(), k)) {
    if (s == 0) continue;
    out.entries.push_back({f.global(s), fn(f, s)});
  }
  return out;
}

double bii_local(const SetFunction& f, std::uint64_t s) {
  const std::uint64_t full = (std::uint64_t{1} << f.n()) - 1;
  const std::uint64_t rest = full & ~s;
  double total = 0.0;
  for_each_subset(rest, [&](std::uint64_t t) { total += derivative_local(f, s, t); });
  return total / std::ldexp(1.0, f.n() - popcount(s));
}

double sii_local(const SetFunction& f, std::uint64_t s) {
  const int n = f.n(), size = popcount(s);
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  const double denom = factorial(n - size + 1);
  double total = 0.0;
  for_each_subset(full & ~s, [&](std::uint64_t t) {
    const int tsize = popcount(t);
    total += factorial(n - tsize - size) * factorial(tsize) / denom * derivative_local(f, s, t);
  });
  return total;
}

}  // namespace

std::uint64_t SetFunction::local(const Subset& g) const {
  std::uint64_t bits = 0;
  for (int j : g) {
    auto it = std::find(active.begin(), active.end(), j);
    if (it == active.end()) throw Error("feature " + std::to_string(j) + " is not in the active set");
    bits |= std::uint64_t{1} << (it - active.begin());
  }
  return bits;
}

Subset SetFunction::global(std::uint64_t local_bits) const {
  Subset s;
  for (int i = 0; i < n(); ++i)
    if ((local_bits >> i) & 1U) s.push_back(active[static_cast<std::size_t>(i)]);
  return canonical(s);
}

SetFunction make_set_function(std::vector<int> active, Vector values) {
  if (static_cast<int>(active.size()) > kMaxTabulated)
    throw Error("active set of size " + std::to_string(active.size()) + " exceeds the tabulation limit of 16");
  if (values.size() != (Eigen::Index{1} << active.size())) throw Error("set function table must have 2^|A| entries");
  if (!values.allFinite()) throw Error("set function values must be finite");
  return {std::move(active), std::move(values)};
}

std::string to_string(IndexKind k) {
  switch (k) {
    case IndexKind::fbii: return "FBII";
    case IndexKind::fsii: return "FSII";
    case IndexKind::stii: return "STII";
    case IndexKind::bii: return "BII";
    case IndexKind::sii: return "SII";
    case IndexKind::mobius: return "Mobius";
    case IndexKind::fourier: return "Fourier";
  }
  return "FBII";
}

IndexKind index_from_string(const std::string& raw) {
  std::string s = raw;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto k : all_index_kinds()) {
    std::string name = to_string(k);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == s) return k;
  }
  throw Error("unknown interaction index: " + raw);
}

const std::vector<IndexKind>& all_index_kinds() {
  static const std::vector<IndexKind> kinds{IndexKind::fbii, IndexKind::fsii, IndexKind::stii, IndexKind::bii,
                                            IndexKind::sii, IndexKind::mobius, IndexKind::fourier};
  return kinds;
}

std::optional<double> IndexScores::score(const Subset& s) const {
  for (const auto& e : entries)
    if (e.subset == s) return e.score;
  return std::nullopt;
}

std::vector<ScoredSubset> IndexScores::ranked() const {
  auto out = entries;
  // magnitudes are compared on a 1e-10 relative grid so rounding noise ties
  double top = 0.0;
  for (const auto& e : out) top = std::max(top, std::abs(e.score));
  auto mag = [top](double v) { return top > 0 ? std::round(std::abs(v) / top * 1e10) : 0.0; };
  std::stable_sort(out.begin(), out.end(), [&](const ScoredSubset& a, const ScoredSubset& b) {
    const double fa = mag(a.score), fb = mag(b.score);
    if (fa != fb) return fa > fb;
    return subset_less(a.subset, b.subset);
  });
  return out;
}

IndexScores IndexScores::filtered(std::size_t min_size) const {
  IndexScores out{kind, order, {}};
  for (const auto& e : entries)
    if (e.subset.size() >= min_size) out.entries.push_back(e);
  return out;
}

double discrete_derivative(const SetFunction& f, const Subset& s, const Subset& t) {
  const auto sb = f.local(s), tb = f.local(t);
  if (sb & tb) throw Error("discrete derivative needs disjoint S and T");
  return derivative_local(f, sb, tb);
}

Vector mobius_transform(const Vector& values) {
  Vector a = values;
  const auto size = a.size();
  for (Eigen::Index bit = 1; bit < size; bit <<= 1)
    for (Eigen::Index m = 0; m < size; ++m)
      if (m & bit) a(m) -= a(m ^ bit);
  return a;
}

Vector zeta_transform(const Vector& mob) {
  Vector f = mob;
  const auto size = f.size();
  for (Eigen::Index bit = 1; bit < size; bit <<= 1)
    for (Eigen::Index m = 0; m < size; ++m)
      if (m & bit) f(m) += f(m ^ bit);
  return f;
}

IndexScores mobius(const SetFunction& f) {
  if (f.n() > kMaxTabulated) throw Error("active set too large for Mobius transform: " + std::to_string(f.n()));
  const Vector a = mobius_transform(f.values);
  IndexScores out{IndexKind::mobius, f.n(), {}};
  for (auto s : local_subsets_upto(f.n(), f.n())) out.entries.push_back({f.global(s), a(static_cast<Eigen::Index>(s))});
  return out;
}

namespace {
IndexScores multilinear_from_fourier(const FourierSurrogate& s, int k, IndexKind kind) {
  std::map<Subset, double, decltype(&subset_less)> scores(&subset_less);
  for (std::size_t i = 0; i < s.support.size(); ++i) {
    const auto& sup = s.support[i];
    if (static_cast<int>(sup.size()) > k) continue;
    const double c = s.coefficients(static_cast<Eigen::Index>(i));
    const std::uint64_t bits = subset_bits(sup);
    for_each_subset(bits, [&](std::uint64_t w) {
      scores[bits_subset(w)] += std::ldexp(c, popcount(w)) * (popcount(w) & 1 ? -1.0 : 1.0);
    });
  }
  IndexScores out{kind, k, {}};
  for (auto& [sub, v] : scores) out.entries.push_back({sub, v});
  return out;
}
}  // namespace

IndexScores fbii_from_fourier(const FourierSurrogate& s, int k) {
  if (k > s.max_order) throw Error("FBII order " + std::to_string(k) + " exceeds surrogate order " + std::to_string(s.max_order));
  return multilinear_from_fourier(s, k, IndexKind::fbii);
}

IndexScores mobius_from_fourier(const FourierSurrogate& s) {
  int k = 0;
  for (const auto& sup : s.support) k = std::max(k, static_cast<int>(sup.size()));
  auto out = multilinear_from_fourier(s, k, IndexKind::mobius);
  out.order = std::max(k, s.max_order);
  return out;
}

double bii(const SetFunction& f, const Subset& s) { return bii_local(f, f.local(s)); }
double sii(const SetFunction& f, const Subset& s) { return sii_local(f, f.local(s)); }

IndexScores bii_scores(const SetFunction& f, int k) { return per_subset(f, k, IndexKind::bii, &bii_local); }
IndexScores sii_scores(const SetFunction& f, int k) { return per_subset(f, k, IndexKind::sii, &sii_local); }

IndexScores stii(const SetFunction& f, int k) {
  const int n = f.n();
  if (k < 1 || k > n) throw Error("STII order " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  IndexScores out{IndexKind::stii, k, {}};
  for (auto s : local_subsets_upto(n, k)) {
    if (s == 0) continue;
    double v = 0.0;
    if (popcount(s) < k) {
      v = derivative_local(f, s, 0);
    } else {
      for_each_subset(full & ~s, [&](std::uint64_t t) { v += derivative_local(f, s, t) / binomial(n - 1, popcount(t)); });
      v *= static_cast<double>(k) / n;
    }
    out.entries.push_back({f.global(s), v});
  }
  return out;
}

IndexScores fsii(const SetFunction& f, int k) {
  const int n = f.n();
  if (n > kMaxFsiiFeatures) throw Error("FSII limited to |A| <= 12, got " + std::to_string(n));
  if (k < 1) throw Error("FSII order must be >= 1");
  k = std::min(k, n);
  const auto basis = local_subsets_upto(n, k);
  const auto m = static_cast<Eigen::Index>(basis.size());
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;

  // Weighted normal equations over the interior coalitions, then the two
  // boundary coalitions as equality constraints (KKT system).
  Matrix gram = Matrix::Zero(m, m);
  Vector rhs = Vector::Zero(m);
  Vector row(m);
  for (std::uint64_t t = 1; t < full; ++t) {
    const int size = popcount(t);
    const double mu = (n - 1) / (binomial(n, size) * size * (n - size));
    for (Eigen::Index c = 0; c < m; ++c) row(c) = (basis[static_cast<std::size_t>(c)] & ~t) == 0 ? 1.0 : 0.0;
    gram.noalias() += mu * row * row.transpose();
    rhs.noalias() += mu * f(t) * row;
  }
  Matrix kkt = Matrix::Zero(m + 2, m + 2);
  Vector b = Vector::Zero(m + 2);
  kkt.topLeftCorner(m, m) = gram;
  rhs = rhs.eval();
  b.head(m) = rhs;
  for (int side = 0; side < 2; ++side) {
    const std::uint64_t t = side == 0 ? 0 : full;
    for (Eigen::Index c = 0; c < m; ++c) {
      const double v = (basis[static_cast<std::size_t>(c)] & ~t) == 0 ? 1.0 : 0.0;
      kkt(m + side, c) = v;
      kkt(c, m + side) = v;
    }
    b(m + side) = f(t);
  }
  if (n == 0) {
    // single coalition: the two constraints coincide
    kkt.conservativeResize(m + 1, m + 1);
    b.conservativeResize(m + 1);
  }
  Eigen::FullPivLU<Matrix> lu(kkt);
  if (lu.rank() < kkt.rows()) {
    std::cerr << "warning: FSII normal system is singular; applying 1e-10 ridge\n";
    kkt.topLeftCorner(m, m) += 1e-10 * Matrix::Identity(m, m);
    lu.compute(kkt);
  }
  const Vector sol = lu.solve(b);
  IndexScores out{IndexKind::fsii, k, {}};
  for (Eigen::Index c = 0; c < m; ++c) out.entries.push_back({f.global(basis[static_cast<std::size_t>(c)]), sol(c)});
  return out;
}

IndexScores fourier_index(const FourierSurrogate& s) {
  IndexScores out{IndexKind::fourier, s.max_order, {}};
  for (std::size_t i = 0; i < s.support.size(); ++i)
    out.entries.push_back({s.support[i], std::abs(s.coefficients(static_cast<Eigen::Index>(i)))});
  return out;
}

SetFunction restrict_surrogate(const FourierSurrogate& s) {
  std::uint64_t union_bits = 0;
  for (const auto& sup : s.support) union_bits |= subset_bits(sup);
  const Subset active = bits_subset(union_bits);
  if (static_cast<int>(active.size()) > kMaxTabulated)
    throw Error("surrogate active set of size " + std::to_string(active.size()) + " exceeds the tabulation limit of 16");
  const auto n = static_cast<int>(active.size());
  const std::uint64_t outside = Mask::ones(s.p).bits() & ~union_bits;
  Vector values(Eigen::Index{1} << n);
  for (std::uint64_t t = 0; t < (std::uint64_t{1} << n); ++t) {
    std::uint64_t bits = outside;
    for (int i = 0; i < n; ++i)
      if ((t >> i) & 1U) bits |= std::uint64_t{1} << active[static_cast<std::size_t>(i)];
    values(static_cast<Eigen::Index>(t)) = eval_surrogate(s, Mask(bits, s.p));
  }
  return {active, values};
}

IndexScores compute_index(IndexKind kind, const FourierSurrogate& s, int k) {
  switch (kind) {
    case IndexKind::fbii: return fbii_from_fourier(s, std::min(k, s.max_order));
    case IndexKind::fourier: return fourier_index(s);
    case IndexKind::mobius: return mobius_from_fourier(s);
    default: break;
  }
  const SetFunction f = restrict_surrogate(s);
  const int order = std::min(k, f.n());
  if (order < 1) return {kind, k, {}};
  switch (kind) {
    case IndexKind::bii: return bii_scores(f, order);
    case IndexKind::sii: return sii_scores(f, order);
    case IndexKind::stii: return stii(f, order);
    case IndexKind::fsii: return fsii(f, order);
    default: break;
  }
  throw Error("unhandled index kind");
}

nlohmann::json to_json(const IndexScores& s) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : s.ranked()) entries.push_back({{"subset", e.subset}, {"score", e.score}});
  return {{"kind", to_string(s.kind)}, {"k", s.order}, {"entries", entries}};
}

}  // namespace tabdistill
