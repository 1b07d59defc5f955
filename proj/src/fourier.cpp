#include "tabdistill/fourier.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

namespace tabdistill {

double parity(const Subset& s, const Mask& m) {
  for (int j : s)
    if (j < 0 || j >= m.size()) throw Error("subset index " + std::to_string(j) + " out of range for mask of size " + std::to_string(m.size()));
  return parity_bits(subset_bits(s), m.bits());
}

double FourierSurrogate::operator()(const Mask& m) const { return eval_surrogate(*this, m); }

double eval_surrogate(const FourierSurrogate& s, const Mask& m) {
  if (m.size() != s.p) throw Error("mask length " + std::to_string(m.size()) + " does not match surrogate p = " + std::to_string(s.p));
  double total = 0.0;
  for (std::size_t k = 0; k < s.support.size(); ++k)
    total += s.coefficients(static_cast<Eigen::Index>(k)) * parity_bits(subset_bits(s.support[k]), m.bits());
  return total;
}

std::vector<Mask> draw_masks(const SurrogateOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  const std::uint64_t full = Mask::ones(opts.p).bits();
  std::vector<Mask> masks{Mask::ones(opts.p), Mask::zeros(opts.p)};
  std::unordered_set<std::uint64_t> seen{full, 0};
  for (int i = 2; i < opts.budget; ++i) {
    const std::uint64_t bits = rng() & full;
    if (seen.insert(bits).second) masks.emplace_back(bits, opts.p);
  }
  return masks;
}

namespace {

Matrix design(const std::vector<Mask>& masks, const std::vector<std::uint64_t>& basis) {
  Matrix phi(static_cast<Eigen::Index>(masks.size()), static_cast<Eigen::Index>(basis.size()));
  for (std::size_t c = 0; c < basis.size(); ++c)
    for (std::size_t r = 0; r < masks.size(); ++r)
      phi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parity_bits(basis[c], masks[r].bits());
  return phi;
}

Matrix gather_columns(const Matrix& phi, const std::vector<Eigen::Index>& cols) {
  Matrix out(phi.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = phi.col(cols[k]);
  return out;
}

/// Ridge solve with the constant column (if present) unpenalized.
Vector ridge_solve(const Matrix& a, const Vector& y, const std::vector<bool>& penalized, double ridge) {
  Matrix gram = a.transpose() * a;
  for (Eigen::Index k = 0; k < gram.rows(); ++k)
    if (penalized[static_cast<std::size_t>(k)]) gram(k, k) += ridge;
  Vector rhs = a.transpose() * y;
  Eigen::LDLT<Matrix> ldlt(gram);
  Vector c = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !c.allFinite()) c = gram.completeOrthogonalDecomposition().solve(rhs);
  return c;
}

/// Greedy orthogonal matching pursuit; returns selected column indices.
std::vector<Eigen::Index> omp(const Matrix& phi, const Vector& y, int max_terms, double tol) {
  std::vector<Eigen::Index> selected;
  std::vector<bool> used(static_cast<std::size_t>(phi.cols()), false);
  Vector residual = y;
  double norm = residual.norm();
  const double floor = 1e-12 * std::max(1.0, y.norm());
  while (static_cast<int>(selected.size()) < max_terms && norm > floor) {
    Vector corr = (phi.transpose() * residual).cwiseAbs();
    Eigen::Index best = -1;
    for (Eigen::Index c = 0; c < corr.size(); ++c)
      if (!used[static_cast<std::size_t>(c)] && (best < 0 || corr(c) > corr(best) * (1 + 1e-12))) best = c;
    if (best < 0) break;
    selected.push_back(best);
    used[static_cast<std::size_t>(best)] = true;
    Matrix a = gather_columns(phi, selected);
    Vector coef = a.colPivHouseholderQr().solve(y);
    Vector next = y - a * coef;
    const double next_norm = next.norm();
    if (norm - next_norm < tol) {
      selected.pop_back();
      break;
    }
    residual = std::move(next);
    norm = next_norm;
  }
  return selected;
}

}  // namespace

FourierSurrogate fit_surrogate(const BatchValueFn& value_fn, const SurrogateOptions& opts) {
  if (opts.p < 1 || opts.p > kMaxSurrogateFeatures)
    throw Error("surrogate fitting supports 1 <= p <= 30, got p = " + std::to_string(opts.p));
  if (opts.max_order < 1) throw Error("max order must be >= 1, got " + std::to_string(opts.max_order));
  if (opts.budget < 2 * opts.max_support)
    throw Error("query budget " + std::to_string(opts.budget) + " is below 2 x max_support = " + std::to_string(2 * opts.max_support));

  const auto masks = draw_masks(opts);
  const Vector values = value_fn(masks);
  if (values.size() != static_cast<Eigen::Index>(masks.size())) throw Error("value function returned the wrong number of values");
  if (!values.allFinite()) throw Error("value function returned non-finite values");

  std::vector<std::uint64_t> basis;
  std::vector<Subset> basis_sets = enumerate_subsets(opts.p, opts.max_order);
  for (const auto& s : basis_sets) basis.push_back(subset_bits(s));
  const Matrix phi = design(masks, basis);

  // holdout: never the two anchor masks
  std::vector<Eigen::Index> order(masks.size() - 2);
  std::iota(order.begin(), order.end(), 2);
  std::mt19937_64 rng(derive_seed(opts.seed, 1));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = static_cast<std::size_t>(std::floor(opts.holdout_fraction * static_cast<double>(masks.size())));
  std::vector<Eigen::Index> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_hold, order.size())));
  std::vector<bool> is_hold(masks.size(), false);
  for (auto r : hold) is_hold[static_cast<std::size_t>(r)] = true;
  std::vector<Eigen::Index> fit_rows;
  for (std::size_t r = 0; r < masks.size(); ++r)
    if (!is_hold[r]) fit_rows.push_back(static_cast<Eigen::Index>(r));

  Matrix phi_fit(static_cast<Eigen::Index>(fit_rows.size()), phi.cols());
  Vector y_fit(static_cast<Eigen::Index>(fit_rows.size()));
  for (std::size_t i = 0; i < fit_rows.size(); ++i) {
    phi_fit.row(static_cast<Eigen::Index>(i)) = phi.row(fit_rows[i]);
    y_fit(static_cast<Eigen::Index>(i)) = values(fit_rows[i]);
  }

  const auto selected = omp(phi_fit, y_fit, opts.max_support, opts.residual_tol);
  std::vector<bool> penalized;
  for (auto c : selected) penalized.push_back(basis[static_cast<std::size_t>(c)] != 0);

  FourierSurrogate s;
  s.p = opts.p;
  s.max_order = opts.max_order;
  s.diagnostics.queries = static_cast<int>(masks.size());
  s.diagnostics.budget = opts.budget;

  if (!hold.empty()) {
    Vector coef = selected.empty() ? Vector() : ridge_solve(gather_columns(phi_fit, selected), y_fit, penalized, opts.ridge);
    double ss_res = 0, ss_tot = 0, mean = 0;
    for (auto r : hold) mean += values(r);
    mean /= static_cast<double>(hold.size());
    for (auto r : hold) {
      double pred = 0;
      for (std::size_t k = 0; k < selected.size(); ++k) pred += coef(static_cast<Eigen::Index>(k)) * phi(r, selected[k]);
      ss_res += (values(r) - pred) * (values(r) - pred);
      ss_tot += (values(r) - mean) * (values(r) - mean);
    }
    s.diagnostics.holdout_r2 = ss_tot > 1e-300 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-18 ? 1.0 : 0.0);
  }

  // final coefficients use every queried mask
  Vector coef = selected.empty() ? Vector() : ridge_solve(gather_columns(phi, selected), values, penalized, opts.ridge);
  std::vector<std::size_t> idx(selected.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return selected[a] < selected[b]; });
  s.coefficients.resize(static_cast<Eigen::Index>(selected.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    s.support.push_back(basis_sets[static_cast<std::size_t>(selected[idx[k]])]);
    s.coefficients(static_cast<Eigen::Index>(k)) = coef(static_cast<Eigen::Index>(idx[k]));
  }
  return s;
}

FourierSurrogate fit_surrogate(const ValueFn& value_fn, const SurrogateOptions& opts) {
  return fit_surrogate(
      BatchValueFn([&](const std::vector<Mask>& masks) {
        Vector v(static_cast<Eigen::Index>(masks.size()));
        for (std::size_t i = 0; i < masks.size(); ++i) v(static_cast<Eigen::Index>(i)) = value_fn(masks[i]);
        return v;
      }),
      opts);
}

nlohmann::json to_json(const FourierSurrogate& s) {
  nlohmann::json j;
  j["p"] = s.p;
  j["K"] = s.max_order;
  j["support"] = s.support;
  j["coefficients"] = std::vector<double>(s.coefficients.data(), s.coefficients.data() + s.coefficients.size());
  j["diagnostics"] = {{"holdout_r2", s.diagnostics.holdout_r2}, {"queries", s.diagnostics.queries}, {"budget", s.diagnostics.budget}};
  return j;
}

FourierSurrogate surrogate_from_json(const nlohmann::json& j) {
  FourierSurrogate s;
  s.p = j.at("p").get<int>();
  s.max_order = j.at("K").get<int>();
  s.support = j.at("support").get<std::vector<Subset>>();
  auto c = j.at("coefficients").get<std::vector<double>>();
  if (c.size() != s.support.size()) throw Error("surrogate JSON: support/coefficient length mismatch");
  s.coefficients = Eigen::Map<Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    s.diagnostics.holdout_r2 = d.value("holdout_r2", 0.0);
    s.diagnostics.queries = d.value("queries", 0);
    s.diagnostics.budget = d.value("budget", 0);
  }
  return s;
}

}  // namespace tabdistill
