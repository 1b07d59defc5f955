#include "tabdistill/gam.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace tabdistill {

std::string to_string(Link l) {
  switch (l) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::softmax: return "softmax";
  }
  return "?";
}

namespace {

Link link_from_string(const std::string& s) {
  if (s == "identity") return Link::identity;
  if (s == "logit") return Link::logit;
  if (s == "softmax") return Link::softmax;
  throw Error("unknown link '" + s + "'");
}

constexpr double kHessFloor = 1e-12;
constexpr double kClip = 1e-6;

int bin_of(const std::vector<double>& cuts, double v) {
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
}

/// Row-major N x S score buffer with the loss-specific gradient logic.
struct Scores {
  Task task;
  int n_classes;
  int s;  // score columns
  std::vector<double> f;

  double* row(Eigen::Index i) { return f.data() + i * s; }
  const double* row(Eigen::Index i) const { return f.data() + i * s; }

  void probs(Eigen::Index i, double* p) const {
    const double* r = row(i);
    if (task == Task::binary) {
      p[0] = 1.0 / (1.0 + std::exp(-r[0]));
      return;
    }
    double mx = r[0];
    for (int c = 1; c < s; ++c) mx = std::max(mx, r[c]);
    double z = 0;
    for (int c = 0; c < s; ++c) z += (p[c] = std::exp(r[c] - mx));
    for (int c = 0; c < s; ++c) p[c] /= z;
  }

  /// Per-row loss: squared error, or log loss of the true class.
  double loss(Eigen::Index i, double y) const {
    if (task == Task::regression) {
      const double e = row(i)[0] - y;
      return e * e;
    }
    double p[256];
    probs(i, p);
    const double py = task == Task::binary ? (y > 0.5 ? p[0] : 1.0 - p[0]) : p[static_cast<int>(y)];
    return -std::log(std::max(py, 1e-15));
  }

  void grad(Eigen::Index i, double y, double* g, double* h) const {
    if (task == Task::regression) {
      g[0] = row(i)[0] - y;
      h[0] = 1.0;
      return;
    }
    double p[256];
    probs(i, p);
    if (task == Task::binary) {
      g[0] = p[0] - y;
      h[0] = p[0] * (1.0 - p[0]);
      return;
    }
    const int label = static_cast<int>(y);
    for (int c = 0; c < s; ++c) {
      g[c] = p[c] - (c == label ? 1.0 : 0.0);
      h[c] = p[c] * (1.0 - p[c]);
    }
  }
};

Eigen::RowVectorXd initial_intercept(const Dataset& d) {
  if (d.task == Task::regression) return Eigen::RowVectorXd::Constant(1, d.target.mean());
  std::vector<double> freq(static_cast<std::size_t>(d.n_classes), 0.0);
  for (Eigen::Index i = 0; i < d.rows(); ++i) freq[static_cast<std::size_t>(d.target(i))] += 1.0 / static_cast<double>(d.rows());
  if (d.task == Task::binary) {
    const double p = std::clamp(freq[1], kClip, 1 - kClip);
    return Eigen::RowVectorXd::Constant(1, std::log(p / (1 - p)));
  }
  Eigen::RowVectorXd b(d.n_classes);
  for (int c = 0; c < d.n_classes; ++c) b(c) = std::log(std::clamp(freq[static_cast<std::size_t>(c)], kClip, 1.0));
  return b;
}

/// Train/validation partition of row indices, stratified for classification.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> holdout(const Dataset& d, double frac, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<int, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < d.rows(); ++i) groups[is_classification(d.task) ? static_cast<int>(d.target(i)) : 0].push_back(i);
  std::vector<Eigen::Index> fit, val;
  for (auto& [g, rows] : groups) {
    std::shuffle(rows.begin(), rows.end(), rng);
    auto nv = static_cast<std::size_t>(std::llround(frac * static_cast<double>(rows.size())));
    if (rows.size() < 2) nv = 0;
    nv = std::min(nv, rows.size() - 1);
    val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(nv));
    fit.insert(fit.end(), rows.begin() + static_cast<std::ptrdiff_t>(nv), rows.end());
  }
  if (val.empty() && fit.size() >= 2) {
    val.push_back(fit.back());
    fit.pop_back();
  }
  std::sort(fit.begin(), fit.end());
  std::sort(val.begin(), val.end());
  return {fit, val};
}

/// Greedy box partition of a term's bin grid fitted to per-cell gradient
/// sums; returns the per-cell step (leaf Newton value scaled by lr).
Matrix grid_tree_update(const Matrix& gs, const Matrix& hs, const Vector& cnt, const std::vector<int>& dims,
                        int max_leaves, double min_leaf, double lr) {
  const auto cells = gs.rows();
  const auto s = gs.cols();
  const auto nd = dims.size();
  std::vector<Eigen::Index> stride(nd, 1);
  for (std::size_t d = 1; d < nd; ++d) stride[d] = stride[d - 1] * dims[d - 1];
  auto coord = [&](Eigen::Index c, std::size_t d) { return static_cast<int>((c / stride[d]) % dims[d]); };

  struct Box {
    std::vector<int> lo, hi;  // [lo, hi) per dimension
  };
  std::vector<Box> leaves{{std::vector<int>(nd, 0), dims}};
  std::vector<int> leaf_of(static_cast<std::size_t>(cells), 0);

  auto score = [&](const Matrix& g, const Matrix& h, Eigen::Index i) {
    double v = 0;
    for (Eigen::Index k = 0; k < s; ++k)
      if (h(i, k) > kHessFloor) v += g(i, k) * g(i, k) / h(i, k);
    return v;
  };

  while (static_cast<int>(leaves.size()) < max_leaves) {
    double best_gain = 1e-12;
    std::size_t best_leaf = 0, best_dim = 0;
    int best_cut = -1;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      const Box& box = leaves[l];
      for (std::size_t d = 0; d < nd; ++d) {
        const int width = box.hi[d] - box.lo[d];
        if (width < 2) continue;
        Matrix g = Matrix::Zero(width, s), h = Matrix::Zero(width, s);
        Vector n = Vector::Zero(width);
        for (Eigen::Index c = 0; c < cells; ++c) {
          if (leaf_of[static_cast<std::size_t>(c)] != static_cast<int>(l)) continue;
          const int at = coord(c, d) - box.lo[d];
          g.row(at) += gs.row(c);
          h.row(at) += hs.row(c);
          n(at) += cnt(c);
        }
        Matrix tg(1, s), th(1, s);
        tg = g.colwise().sum();
        th = h.colwise().sum();
        const double total_n = n.sum(), parent = score(tg, th, 0);
        Matrix lg = Matrix::Zero(1, s), lh = Matrix::Zero(1, s);
        double ln = 0;
        for (int cut = 1; cut < width; ++cut) {
          lg += g.row(cut - 1);
          lh += h.row(cut - 1);
          ln += n(cut - 1);
          if (ln < min_leaf || total_n - ln < min_leaf) continue;
          Matrix rg = tg - lg, rh = th - lh;
          const double gain = score(lg, lh, 0) + score(rg, rh, 0) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_leaf = l;
            best_dim = d;
            best_cut = box.lo[d] + cut;
          }
        }
      }
    }
    if (best_cut < 0) break;
    Box right = leaves[best_leaf];
    right.lo[best_dim] = best_cut;
    leaves[best_leaf].hi[best_dim] = best_cut;
    const int id = static_cast<int>(leaves.size());
    leaves.push_back(right);
    for (Eigen::Index c = 0; c < cells; ++c)
      if (leaf_of[static_cast<std::size_t>(c)] == static_cast<int>(best_leaf) && coord(c, best_dim) >= best_cut)
        leaf_of[static_cast<std::size_t>(c)] = id;
  }

  Matrix lg = Matrix::Zero(static_cast<Eigen::Index>(leaves.size()), s), lh = lg;
  for (Eigen::Index c = 0; c < cells; ++c) {
    lg.row(leaf_of[static_cast<std::size_t>(c)]) += gs.row(c);
    lh.row(leaf_of[static_cast<std::size_t>(c)]) += hs.row(c);
  }
  Matrix step(cells, s);
  for (Eigen::Index c = 0; c < cells; ++c)
    for (Eigen::Index k = 0; k < s; ++k) {
      const auto l = leaf_of[static_cast<std::size_t>(c)];
      step(c, k) = lh(l, k) > kHessFloor ? -lr * lg(l, k) / lh(l, k) : 0.0;
    }
  return step;
}

struct BagResult {
  std::vector<Matrix> tables;
  BagLog log;
};

BagResult train_bag(const Dataset& d, const std::vector<GamTerm>& shapes, const std::vector<std::vector<int>>& cells,
                    const Eigen::RowVectorXd& intercept, const GamTrainConfig& cfg, std::uint64_t seed) {
  const Eigen::Index n = d.rows();
  const int s = static_cast<int>(intercept.size());
  auto [fit_rows, val_rows] = holdout(d, cfg.validation_fraction, derive_seed(seed, 1));

  std::vector<double> w(static_cast<std::size_t>(n), 0.0);
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, fit_rows.size() - 1);
  for (std::size_t k = 0; k < fit_rows.size(); ++k) w[static_cast<std::size_t>(fit_rows[pick(rng)])] += 1.0;
  std::vector<Eigen::Index> active;
  for (auto r : fit_rows)
    if (w[static_cast<std::size_t>(r)] > 0) active.push_back(r);
  double wsum = 0;
  for (auto r : active) wsum += w[static_cast<std::size_t>(r)];

  Scores sc{d.task, d.n_classes, s, std::vector<double>(static_cast<std::size_t>(n * s))};
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < s; ++c) sc.row(i)[c] = intercept(c);

  std::vector<Matrix> tables, best;
  for (const auto& t : shapes) tables.emplace_back(Matrix::Zero(t.table.rows(), s));
  best = tables;

  auto train_loss = [&] {
    double l = 0;
    for (auto r : active) l += w[static_cast<std::size_t>(r)] * sc.loss(r, d.target(r));
    return l / wsum;
  };
  auto val_loss = [&] {
    if (val_rows.empty()) return train_loss();
    double l = 0;
    for (auto r : val_rows) l += sc.loss(r, d.target(r));
    return l / static_cast<double>(val_rows.size());
  };

  std::vector<std::vector<int>> dims;
  for (const auto& t : shapes) {
    std::vector<int> nb;
    for (std::size_t k = 0; k < t.features.size(); ++k) nb.push_back(t.n_bins(k));
    dims.push_back(std::move(nb));
  }

  BagResult out;
  double best_val = val_loss();
  int since = 0;
  std::vector<double> g(static_cast<std::size_t>(s)), h(static_cast<std::size_t>(s));
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    for (std::size_t t = 0; t < shapes.size(); ++t) {
      const auto& cell = cells[t];
      Matrix gs = Matrix::Zero(tables[t].rows(), s), hs = Matrix::Zero(tables[t].rows(), s);
      Vector cnt = Vector::Zero(tables[t].rows());
      for (auto r : active) {
        sc.grad(r, d.target(r), g.data(), h.data());
        const double wr = w[static_cast<std::size_t>(r)];
        const auto c = cell[static_cast<std::size_t>(r)];
        cnt(c) += wr;
        for (int k = 0; k < s; ++k) {
          gs(c, k) += wr * g[static_cast<std::size_t>(k)];
          hs(c, k) += wr * h[static_cast<std::size_t>(k)];
        }
      }
      const Matrix step = grid_tree_update(gs, hs, cnt, dims[t], cfg.max_leaves, cfg.min_samples_leaf, cfg.learning_rate);
      tables[t] += step;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = cell[static_cast<std::size_t>(i)];
        for (int k = 0; k < s; ++k) sc.row(i)[k] += step(c, k);
      }
    }
    out.log.train_loss.push_back(train_loss());
    const double v = val_loss();
    out.log.validation_loss.push_back(v);
    if (v < best_val - 1e-12 * std::max(1.0, std::abs(best_val))) {
      best_val = v;
      best = tables;
      out.log.best_round = round;
      since = 0;
    } else if (++since >= cfg.patience) {
      break;
    }
  }
  out.tables = std::move(best);
  return out;
}

}  // namespace

void GamTrainConfig::validate() const {
  if (max_bins < 2 || pair_bins < 2 || triple_bins < 2) throw Error("bin counts must be >= 2");
  if (outer_bags < 1) throw Error("outer_bags must be >= 1");
  if (!(learning_rate > 0 && learning_rate <= 1)) throw Error("learning_rate must lie in (0, 1], got " + std::to_string(learning_rate));
  if (max_rounds < 1) throw Error("max_rounds must be >= 1");
  if (max_leaves < 1) throw Error("max_leaves must be >= 1");
  if (min_samples_leaf < 0) throw Error("min_samples_leaf must be >= 0");
  if (patience < 1) throw Error("patience must be >= 1");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) throw Error("validation_fraction must lie in [0, 1)");
}

nlohmann::json to_json(const GamTrainConfig& c) {
  return {{"max_bins", c.max_bins},
          {"pair_bins", c.pair_bins},
          {"triple_bins", c.triple_bins},
          {"outer_bags", c.outer_bags},
          {"learning_rate", c.learning_rate},
          {"max_rounds", c.max_rounds},
          {"patience", c.patience},
          {"max_leaves", c.max_leaves},
          {"min_samples_leaf", c.min_samples_leaf},
          {"validation_fraction", c.validation_fraction},
          {"seed", c.seed}};
}

GamTrainConfig gam_config_from_json(const nlohmann::json& j, GamTrainConfig c) {
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key) && key != "jobs") throw Error("unknown key '" + key + "' in gam config");
  c.max_bins = j.value("max_bins", c.max_bins);
  c.pair_bins = j.value("pair_bins", c.pair_bins);
  c.triple_bins = j.value("triple_bins", c.triple_bins);
  c.outer_bags = j.value("outer_bags", c.outer_bags);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.patience = j.value("patience", c.patience);
  c.max_leaves = j.value("max_leaves", c.max_leaves);
  c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  return c;
}

Eigen::Index GamTerm::cell(RowRef row) const {
  Eigen::Index idx = 0, stride = 1;
  for (std::size_t d = 0; d < features.size(); ++d) {
    idx += bin_of(cuts[d], row(features[d])) * stride;
    stride *= n_bins(d);
  }
  return idx;
}

const GamTerm& GamModel::term(const Subset& s) const {
  const Subset key = canonical(s);
  for (const auto& t : terms)
    if (t.features == key) return t;
  throw Error("model has no term " + subset_string(key));
}

std::vector<Subset> GamModel::interactions() const {
  std::vector<Subset> out;
  for (const auto& t : terms)
    if (t.features.size() >= 2) out.push_back(t.features);
  return out;
}

GamModel fit_gam(const Dataset& train, const std::vector<Subset>& interactions, const GamTrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = train.rows();
  const int p = static_cast<int>(train.cols());
  if (n < 2) throw Error("GAM training needs at least 2 rows, got " + std::to_string(n));
  if (is_classification(train.task) && (train.n_classes < 2 || train.n_classes > 256))
    throw Error("classification GAM needs 2..256 classes, got " + std::to_string(train.n_classes));

  std::vector<Subset> inter;
  std::set<Subset> seen;
  for (const auto& raw : interactions) {
    Subset s = canonical(raw);
    if (s.size() != raw.size() || s.size() < 2 || s.size() > 3)
      throw Error("interaction " + subset_string(raw) + " must name 2 or 3 distinct features");
    for (int j : s)
      if (j < 0 || j >= p) throw Error("interaction " + subset_string(raw) + " has a feature outside [0, " + std::to_string(p) + ")");
    if (seen.insert(s).second) inter.push_back(s);
  }

  GamModel m;
  m.task = train.task;
  m.n_classes = train.n_classes;
  m.link = train.task == Task::regression ? Link::identity : train.task == Task::binary ? Link::logit : Link::softmax;
  m.n_features = p;
  m.config = cfg;
  m.intercept = initial_intercept(train);
  const int s = m.n_scores();

  auto column = [&](int j) { return std::vector<double>(train.features.col(j).data(), train.features.col(j).data() + n); };
  std::vector<std::vector<double>> uni_cuts;
  for (int j = 0; j < p; ++j) uni_cuts.push_back(quantile_cuts(column(j), cfg.max_bins));
  std::map<int, std::vector<std::vector<double>>> inter_cuts;
  for (int bins : {cfg.pair_bins, cfg.triple_bins})
    if (!inter_cuts.count(bins))
      for (int j = 0; j < p; ++j) inter_cuts[bins].push_back(quantile_cuts(column(j), bins));

  for (int j = 0; j < p; ++j) m.terms.push_back({{j}, {uni_cuts[static_cast<std::size_t>(j)]}, {}});
  for (const auto& sub : inter) {
    GamTerm t{sub, {}, {}};
    const int bins = sub.size() == 2 ? cfg.pair_bins : cfg.triple_bins;
    for (int j : sub) t.cuts.push_back(inter_cuts[bins][static_cast<std::size_t>(j)]);
    m.terms.push_back(std::move(t));
  }
  std::vector<std::vector<int>> cells;
  for (auto& t : m.terms) {
    Eigen::Index total = 1;
    for (std::size_t d = 0; d < t.features.size(); ++d) total *= t.n_bins(d);
    t.table = Matrix::Zero(total, s);
    std::vector<int> c(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = static_cast<int>(t.cell(train.features.row(i)));
    cells.push_back(std::move(c));
  }

  std::vector<BagResult> bags(static_cast<std::size_t>(cfg.outer_bags));
  parallel_for(bags.size(), cfg.jobs > 0 ? cfg.jobs : default_jobs(), [&](std::size_t b) {
    bags[b] = train_bag(train, m.terms, cells, m.intercept, cfg, derive_seed(cfg.seed, b + 1));
  });
  for (std::size_t t = 0; t < m.terms.size(); ++t) {
    for (const auto& b : bags) m.terms[t].table += b.tables[t];
    m.terms[t].table /= static_cast<double>(bags.size());
  }
  for (auto& b : bags) m.logs.push_back(std::move(b.log));

  // center every term on the training rows; the intercept absorbs the means
  for (std::size_t t = 0; t < m.terms.size(); ++t) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(s);
    for (Eigen::Index i = 0; i < n; ++i) mean += m.terms[t].table.row(cells[t][static_cast<std::size_t>(i)]);
    mean /= static_cast<double>(n);
    m.terms[t].table.rowwise() -= mean;
    m.intercept += mean;
  }
  return m;
}

Matrix gam_scores(const GamModel& m, const Matrix& rows) {
  if (rows.cols() != m.n_features)
    throw Error("GAM expects " + std::to_string(m.n_features) + " features, got " + std::to_string(rows.cols()));
  Matrix out = m.intercept.replicate(rows.rows(), 1);
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (const auto& t : m.terms) out.row(i) += t.table.row(t.cell(rows.row(i)));
  return out;
}

Matrix predict_gam(const GamModel& m, const Matrix& rows) {
  Matrix f = gam_scores(m, rows);
  if (m.link == Link::identity) return f;
  if (m.link == Link::logit) {
    Matrix p(f.rows(), 2);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      p(i, 1) = 1.0 / (1.0 + std::exp(-f(i, 0)));
      p(i, 0) = 1.0 - p(i, 1);
    }
    return p;
  }
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    f.row(i).array() -= f.row(i).maxCoeff();
    f.row(i) = f.row(i).array().exp().matrix();
    f.row(i) /= f.row(i).sum();
  }
  return f;
}

Eigen::RowVectorXd term_contribution(const GamModel& m, const Subset& s, const Eigen::RowVectorXd& x) {
  if (x.size() != m.n_features) throw Error("row width does not match the model");
  const auto& t = m.term(s);
  return t.table.row(t.cell(x));
}

std::vector<ScoredPair> fast_select_pairs(const Dataset& train, const GamModel& additive, int n_pairs, int bins_per_dim) {
  if (n_pairs < 1) throw Error("n_pairs must be >= 1");
  if (bins_per_dim < 2) throw Error("bins_per_dim must be >= 2");
  const Eigen::Index n = train.rows();
  const int p = static_cast<int>(train.cols());
  const Matrix pred = predict_gam(additive, train.features);

  // residuals: y - prediction, or indicator - probability per class
  Matrix r;
  if (train.task == Task::regression) {
    r = train.target - pred.col(0);
  } else if (train.task == Task::binary) {
    r = train.target - pred.col(1);
  } else {
    r = -pred;
    for (Eigen::Index i = 0; i < n; ++i) r(i, static_cast<Eigen::Index>(train.target(i))) += 1.0;
  }

  std::vector<std::vector<int>> bins(static_cast<std::size_t>(p));
  std::vector<int> nb(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    auto cuts = quantile_cuts(std::vector<double>(train.features.col(j).data(), train.features.col(j).data() + n), bins_per_dim);
    nb[static_cast<std::size_t>(j)] = static_cast<int>(cuts.size()) + 1;
    for (Eigen::Index i = 0; i < n; ++i) bins[static_cast<std::size_t>(j)].push_back(bin_of(cuts, train.features(i, j)));
  }
  // explained sum of squares of a binned per-cell mean; RSS = total - ESS
  auto explained = [&](const std::function<int(Eigen::Index)>& cell, int cells) {
    Matrix sum = Matrix::Zero(cells, r.cols());
    Vector count = Vector::Zero(cells);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(cell(i)) += r.row(i);
      count(cell(i)) += 1;
    }
    double e = 0;
    for (int c = 0; c < cells; ++c)
      if (count(c) > 0) e += sum.row(c).squaredNorm() / count(c);
    return e;
  };
  std::vector<double> single(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j)
    single[static_cast<std::size_t>(j)] = explained([&](Eigen::Index i) { return bins[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]; }, nb[static_cast<std::size_t>(j)]);

  std::vector<ScoredPair> out;
  for (int a = 0; a < p; ++a)
    for (int b = a + 1; b < p; ++b) {
      const auto& ba = bins[static_cast<std::size_t>(a)];
      const auto& bb = bins[static_cast<std::size_t>(b)];
      const int na = nb[static_cast<std::size_t>(a)];
      const double pair = explained([&](Eigen::Index i) { return ba[static_cast<std::size_t>(i)] + na * bb[static_cast<std::size_t>(i)]; },
                                    na * nb[static_cast<std::size_t>(b)]);
      const double gain = pair - std::max(single[static_cast<std::size_t>(a)], single[static_cast<std::size_t>(b)]);
      out.push_back({{a, b}, std::max(0.0, gain)});
    }
  std::stable_sort(out.begin(), out.end(), [](const ScoredPair& x, const ScoredPair& y) {
    if (x.score != y.score) return x.score > y.score;
    return subset_less(x.pair, y.pair);
  });
  if (out.size() > static_cast<std::size_t>(n_pairs)) out.resize(static_cast<std::size_t>(n_pairs));
  return out;
}

nlohmann::json to_json(const GamModel& m) {
  auto terms = nlohmann::json::array();
  for (const auto& t : m.terms) {
    auto table = nlohmann::json::array();
    for (Eigen::Index c = 0; c < t.table.rows(); ++c) {
      std::vector<double> row(static_cast<std::size_t>(t.table.cols()));
      for (Eigen::Index k = 0; k < t.table.cols(); ++k) row[static_cast<std::size_t>(k)] = t.table(c, k);
      table.push_back(row);
    }
    terms.push_back({{"features", t.features}, {"cuts", t.cuts}, {"table", table}});
  }
  auto logs = nlohmann::json::array();
  for (const auto& l : m.logs)
    logs.push_back({{"best_round", l.best_round}, {"rounds", l.train_loss.size()}, {"train_loss", l.train_loss}, {"validation_loss", l.validation_loss}});
  return {{"task", to_string(m.task)},
          {"n_classes", m.n_classes},
          {"link", to_string(m.link)},
          {"n_features", m.n_features},
          {"intercept", std::vector<double>(m.intercept.data(), m.intercept.data() + m.intercept.size())},
          {"terms", terms},
          {"config", to_json(m.config)},
          {"training", logs}};
}

GamModel gam_from_json(const nlohmann::json& j) {
  GamModel m;
  m.task = task_from_string(j.at("task").get<std::string>());
  m.n_classes = j.at("n_classes").get<int>();
  m.link = link_from_string(j.at("link").get<std::string>());
  m.n_features = j.at("n_features").get<int>();
  auto b = j.at("intercept").get<std::vector<double>>();
  m.intercept = Eigen::Map<Eigen::RowVectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  for (const auto& jt : j.at("terms")) {
    GamTerm t;
    t.features = jt.at("features").get<Subset>();
    t.cuts = jt.at("cuts").get<std::vector<std::vector<double>>>();
    const auto& tab = jt.at("table");
    t.table.resize(static_cast<Eigen::Index>(tab.size()), m.n_scores());
    for (std::size_t c = 0; c < tab.size(); ++c)
      for (int k = 0; k < m.n_scores(); ++k) t.table(static_cast<Eigen::Index>(c), k) = tab[c][static_cast<std::size_t>(k)].get<double>();
    Eigen::Index cells = 1;
    for (std::size_t d = 0; d < t.features.size(); ++d) cells *= t.n_bins(d);
    if (t.cuts.size() != t.features.size() || cells != t.table.rows()) throw Error("GAM JSON: term table does not match its bins");
    m.terms.push_back(std::move(t));
  }
  if (j.contains("config")) m.config = gam_config_from_json(j["config"]);
  return m;
}

std::string term_csv(const GamModel& m, const GamTerm& t, const std::vector<Column>& columns) {
  std::ostringstream os;
  os.precision(17);
  auto name = [&](int j) {
    return static_cast<std::size_t>(j) < columns.size() ? columns[static_cast<std::size_t>(j)].name : "x" + std::to_string(j);
  };
  for (int j : t.features) os << name(j) << "_bin," << name(j) << "_lo," << name(j) << "_hi,";
  for (int k = 0; k < m.n_scores(); ++k) os << (m.n_scores() == 1 ? std::string("value") : "value_" + std::to_string(k)) << (k + 1 < m.n_scores() ? "," : "\n");
  for (Eigen::Index c = 0; c < t.table.rows(); ++c) {
    Eigen::Index rest = c;
    for (std::size_t d = 0; d < t.features.size(); ++d) {
      const int nbins = t.n_bins(d);
      const int b = static_cast<int>(rest % nbins);
      rest /= nbins;
      const auto& cuts = t.cuts[d];
      os << b << ',';
      if (b == 0) os << "-inf"; else os << cuts[static_cast<std::size_t>(b - 1)];
      os << ',';
      if (b == nbins - 1) os << "inf"; else os << cuts[static_cast<std::size_t>(b)];
      os << ',';
    }
    for (int k = 0; k < m.n_scores(); ++k) os << t.table(c, k) << (k + 1 < m.n_scores() ? "," : "\n");
  }
  return os.str();
}

}  // namespace tabdistill
