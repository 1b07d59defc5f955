#include "tabdistill/distill.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace tabdistill {

std::string to_string(MaskingPolicy m) { return m == MaskingPolicy::baseline ? "baseline" : "marginal"; }

MaskingPolicy masking_from_string(const std::string& s) {
  if (s == "baseline") return MaskingPolicy::baseline;
  if (s == "marginal") return MaskingPolicy::marginal;
  throw Error("unknown masking policy '" + s + "' (expected baseline or marginal)");
}

void DistillConfig::validate() const {
  if (max_order < 2) throw Error("max_order must be >= 2 to discover interactions, got " + std::to_string(max_order));
  if (budget < 50) throw Error("query budget must be >= 50, got " + std::to_string(budget));
  if (per_sample_top < 1) throw Error("per_sample_top must be >= 1");
  if (n_interactions < 1) throw Error("n_interactions must be >= 1");
  if (min_abs_score < 0) throw Error("min_abs_score must be >= 0");
  if (masking == MaskingPolicy::marginal && background_size < 1) throw Error("background_size must be >= 1");
}

nlohmann::json to_json(const DistillConfig& c) {
  return {{"max_order", c.max_order},
          {"budget", c.budget},
          {"max_support", c.max_support},
          {"n_explain", c.n_explain},
          {"per_sample_top", c.per_sample_top},
          {"min_abs_score", c.min_abs_score},
          {"index", to_string(c.index)},
          {"n_interactions", c.n_interactions},
          {"masking", to_string(c.masking)},
          {"background_size", c.background_size},
          {"seed", c.seed}};
}

DistillConfig distill_config_from_json(const nlohmann::json& j, DistillConfig c) {
  const auto known = to_json(c);
  for (const auto& [key, value] : j.items())
    if (!known.contains(key) && key != "jobs") throw Error("unknown key '" + key + "' in distill config");
  c.max_order = j.value("max_order", c.max_order);
  c.budget = j.value("budget", c.budget);
  c.max_support = j.value("max_support", c.max_support);
  c.n_explain = j.value("n_explain", c.n_explain);
  c.per_sample_top = j.value("per_sample_top", c.per_sample_top);
  c.min_abs_score = j.value("min_abs_score", c.min_abs_score);
  if (j.contains("index")) c.index = index_from_string(j["index"].get<std::string>());
  c.n_interactions = j.value("n_interactions", c.n_interactions);
  if (j.contains("masking")) c.masking = masking_from_string(j["masking"].get<std::string>());
  c.background_size = j.value("background_size", c.background_size);
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  return c;
}

MaskingContext MaskingContext::from_training(const Dataset& train, MaskingPolicy policy, int background_size,
                                             std::uint64_t seed) {
  if (train.rows() < 1) throw Error("cannot build a masking context from an empty training set");
  MaskingContext ctx;
  ctx.task = train.task;
  ctx.n_classes = train.n_classes;
  ctx.policy = policy;
  ctx.baseline = baseline_vector(train);
  if (train.task == Task::regression) {
    ctx.target_mean = train.target.mean();
    const double var = (train.target.array() - ctx.target_mean).square().mean();
    ctx.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  if (policy == MaskingPolicy::marginal) {
    const auto rows = explained_rows(train.rows(), background_size, derive_seed(seed, 0xB6));
    ctx.background.resize(static_cast<Eigen::Index>(rows.size()), train.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) ctx.background.row(static_cast<Eigen::Index>(i)) = train.features.row(rows[i]);
  }
  return ctx;
}

double value_of(const MaskingContext& ctx, RowRef out, int label) {
  if (ctx.task == Task::regression) return (out(0) - ctx.target_mean) / ctx.target_scale;
  const double p = std::clamp(out(label), kProbClip, 1.0 - kProbClip);
  return std::log(p / (1.0 - p));
}

BatchValueFn value_function(const Predictor& teacher, const Eigen::RowVectorXd& x, double y, const MaskingContext& ctx) {
  const Eigen::Index p = x.size();
  if (teacher.n_features() != p) throw Error("sample has " + std::to_string(p) + " features, teacher expects " + std::to_string(teacher.n_features()));
  if (ctx.baseline.size() != p) throw Error("baseline length does not match the sample");
  int label = 0;
  if (is_classification(ctx.task)) {
    label = static_cast<int>(std::llround(y));
    if (label < 0 || label >= ctx.n_classes || static_cast<double>(label) != y)
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(ctx.n_classes) + ")");
  }
  const bool marginal = ctx.policy == MaskingPolicy::marginal;
  if (marginal && ctx.background.cols() != p) throw Error("background width does not match the sample");
  const Eigen::Index reps = marginal ? ctx.background.rows() : 1;

  return [&teacher, x, label, &ctx, marginal, reps, p](const std::vector<Mask>& masks) {
    Matrix rows(static_cast<Eigen::Index>(masks.size()) * reps, p);
    for (std::size_t m = 0; m < masks.size(); ++m) {
      if (masks[m].size() != p) throw Error("mask length does not match the sample");
      for (Eigen::Index b = 0; b < reps; ++b) {
        auto row = rows.row(static_cast<Eigen::Index>(m) * reps + b);
        for (Eigen::Index j = 0; j < p; ++j)
          row(j) = masks[m][static_cast<int>(j)] ? x(j) : (marginal ? ctx.background(b, j) : ctx.baseline(j));
      }
    }
    // the teacher only sees distinct rows; masked rows repeat often
    std::unordered_map<std::string, Eigen::Index> seen;
    std::vector<Eigen::Index> slot(static_cast<std::size_t>(rows.rows()));
    std::vector<Eigen::Index> unique;
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const Eigen::RowVectorXd row = rows.row(r);
      std::string key(reinterpret_cast<const char*>(row.data()), static_cast<std::size_t>(p) * sizeof(double));
      auto [it, fresh] = seen.emplace(std::move(key), static_cast<Eigen::Index>(unique.size()));
      if (fresh) unique.push_back(r);
      slot[static_cast<std::size_t>(r)] = it->second;
    }
    Matrix distinct(static_cast<Eigen::Index>(unique.size()), p);
    for (std::size_t u = 0; u < unique.size(); ++u) distinct.row(static_cast<Eigen::Index>(u)) = rows.row(unique[u]);
    const Matrix out = teacher.predict(distinct);
    Vector values(static_cast<Eigen::Index>(masks.size()));
    for (std::size_t m = 0; m < masks.size(); ++m) {
      double total = 0.0;
      for (Eigen::Index b = 0; b < reps; ++b)
        total += value_of(ctx, out.row(slot[static_cast<std::size_t>(static_cast<Eigen::Index>(m) * reps + b)]), label);
      values(static_cast<Eigen::Index>(m)) = total / static_cast<double>(reps);
    }
    return values;
  };
}

namespace {

bool needs_tabulation(IndexKind k) {
  return k == IndexKind::bii || k == IndexKind::sii || k == IndexKind::stii || k == IndexKind::fsii;
}

int active_size(const FourierSurrogate& s) {
  std::uint64_t bits = 0;
  for (const auto& sup : s.support) bits |= subset_bits(sup);
  return std::popcount(bits);
}

}  // namespace

SampleExplanation explain_sample_multi(const Predictor& teacher, const Eigen::RowVectorXd& x, double y,
                                       const MaskingContext& ctx, const DistillConfig& cfg,
                                       const std::vector<IndexKind>& kinds, std::uint64_t sample_seed) {
  const int p = static_cast<int>(x.size());
  if (p > kMaxSurrogateFeatures) throw Error("explanation supports at most 30 features, got " + std::to_string(p));
  SurrogateOptions so;
  so.p = p;
  so.max_order = std::min(cfg.max_order, p);
  so.budget = cfg.budget;
  so.max_support = cfg.max_support;
  so.seed = sample_seed;
  SampleExplanation ex;
  ex.surrogate = fit_surrogate(value_function(teacher, x, y, ctx), so);
  ex.diagnostics.holdout_r2 = ex.surrogate.diagnostics.holdout_r2;
  ex.diagnostics.queries = ex.surrogate.diagnostics.queries;
  ex.diagnostics.support_size = static_cast<int>(ex.surrogate.support.size());
  ex.diagnostics.active_size = active_size(ex.surrogate);
  for (IndexKind kind : kinds) {
    const int limit = kind == IndexKind::fsii ? kMaxFsiiFeatures : kMaxTabulated;
    IndexKind used = kind;
    if (needs_tabulation(kind) && ex.diagnostics.active_size > limit) {
      used = IndexKind::fbii;
      ex.diagnostics.fell_back = true;
    }
    IndexScores s = compute_index(used, ex.surrogate, so.max_order).filtered(2);
    s.kind = kind;
    ex.scores[kind] = std::move(s);
  }
  return ex;
}

IndexScores explain_sample(const Predictor& teacher, const Eigen::RowVectorXd& x, double y, const MaskingContext& ctx,
                           const DistillConfig& cfg, std::uint64_t sample_seed) {
  return explain_sample_multi(teacher, x, y, ctx, cfg, {cfg.index}, sample_seed).scores.at(cfg.index);
}

std::vector<Subset> InteractionRanking::subsets() const {
  std::vector<Subset> out;
  for (const auto& e : interactions) out.push_back(e.subset);
  return out;
}

InteractionRanking InteractionRanking::truncated(std::size_t n) const {
  InteractionRanking out = *this;
  if (out.interactions.size() > n) out.interactions.resize(n);
  return out;
}

InteractionRanking aggregate(const std::vector<IndexScores>& per_sample, int r, double min_abs_score) {
  if (r < 1) throw Error("per-sample top r must be >= 1");
  std::map<Subset, RankedInteraction> acc;
  for (const auto& scores : per_sample) {
    const auto ranked = scores.ranked();
    int kept = 0;
    for (const auto& e : ranked) {
      if (kept >= r) break;
      if (e.subset.size() < 2) continue;
      const double mag = std::abs(e.score);
      if (mag <= min_abs_score || mag == 0.0) continue;
      auto& slot = acc[e.subset];
      slot.subset = e.subset;
      slot.count += 1;
      slot.mass += mag;
      ++kept;
    }
  }
  InteractionRanking out;
  for (auto& [s, e] : acc) out.interactions.push_back(e);
  std::stable_sort(out.interactions.begin(), out.interactions.end(), [](const auto& a, const auto& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.mass != b.mass) return a.mass > b.mass;
    return subset_less(a.subset, b.subset);
  });
  return out;
}

std::vector<Eigen::Index> explained_rows(Eigen::Index n_rows, int n_explain, std::uint64_t seed) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n_rows));
  std::iota(rows.begin(), rows.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  if (n_explain > 0 && static_cast<Eigen::Index>(n_explain) < n_rows) rows.resize(static_cast<std::size_t>(n_explain));
  return rows;
}

std::string teacher_digest(const Predictor& teacher, const Dataset& train) {
  const Eigen::Index n = std::min<Eigen::Index>(train.rows(), 32);
  const Matrix out = teacher.predict(train.features.topRows(n));
  std::ostringstream os;
  os.precision(17);
  os << teacher.name() << ';' << teacher.n_features() << ';' << teacher.n_classes() << ';';
  for (Eigen::Index i = 0; i < out.size(); ++i) os << out(i) << ',';
  return hex_digest(os.str());
}

std::map<IndexKind, InteractionRanking> distill_multi(const Dataset& train, const Predictor& teacher,
                                                      const DistillConfig& cfg, const std::vector<IndexKind>& kinds) {
  cfg.validate();
  if (kinds.empty()) throw Error("no index kinds requested");
  if (teacher.n_features() != train.cols()) throw Error("teacher was not fitted on this training set (feature count differs)");
  const MaskingContext ctx = MaskingContext::from_training(train, cfg.masking, cfg.background_size, cfg.seed);
  const auto rows = explained_rows(train.rows(), cfg.n_explain, derive_seed(cfg.seed, 0x5A));

  std::vector<SampleExplanation> per(rows.size());
  parallel_for(rows.size(), cfg.jobs > 0 ? cfg.jobs : default_jobs(), [&](std::size_t i) {
    const auto r = rows[i];
    per[i] = explain_sample_multi(teacher, train.features.row(r), train.target(r), ctx, cfg, kinds,
                                  derive_seed(cfg.seed, static_cast<std::uint64_t>(r) + 1));
    per[i].diagnostics.row = r;
  });

  const std::string cdigest = hex_digest(to_json(cfg).dump());
  const std::string tdigest = teacher_digest(teacher, train);
  std::map<IndexKind, InteractionRanking> out;
  for (IndexKind kind : kinds) {
    std::vector<IndexScores> scores;
    for (auto& e : per) scores.push_back(e.scores.at(kind));
    auto ranking = aggregate(scores, cfg.per_sample_top, cfg.min_abs_score).truncated(static_cast<std::size_t>(cfg.n_interactions));
    ranking.index = kind;
    ranking.config_digest = cdigest;
    ranking.teacher_digest = tdigest;
    for (auto& e : per) ranking.diagnostics.push_back(e.diagnostics);
    out[kind] = std::move(ranking);
  }
  return out;
}

InteractionRanking distill(const Dataset& train, const Predictor& teacher, const DistillConfig& cfg) {
  return distill_multi(train, teacher, cfg, {cfg.index}).at(cfg.index);
}

nlohmann::json to_json(const InteractionRanking& r, const Dataset& train, const DistillConfig& cfg) {
  auto items = nlohmann::json::array();
  for (const auto& e : r.interactions) {
    std::vector<std::string> names;
    for (int j : e.subset)
      names.push_back(static_cast<std::size_t>(j) < train.columns.size() ? train.columns[static_cast<std::size_t>(j)].name
                                                                         : "x" + std::to_string(j));
    items.push_back({{"features", names}, {"indices", e.subset}, {"count", e.count}, {"mass", e.mass}});
  }
  auto diag = nlohmann::json::array();
  double r2 = 0;
  long queries = 0;
  int fallbacks = 0;
  for (const auto& d : r.diagnostics) {
    diag.push_back({{"row", d.row}, {"holdout_r2", d.holdout_r2}, {"queries", d.queries}, {"support", d.support_size},
                    {"active", d.active_size}, {"fallback_fbii", d.fell_back}});
    r2 += d.holdout_r2;
    queries += d.queries;
    fallbacks += d.fell_back ? 1 : 0;
  }
  auto config = to_json(cfg);
  config["index"] = to_string(r.index);
  return {{"config", config},
          {"provenance", {{"config_digest", r.config_digest}, {"teacher_digest", r.teacher_digest}}},
          {"interactions", items},
          {"diagnostics",
           {{"samples", diag},
            {"mean_holdout_r2", r.diagnostics.empty() ? 0.0 : r2 / static_cast<double>(r.diagnostics.size())},
            {"total_queries", queries},
            {"fbii_fallbacks", fallbacks},
            {"note", "all index kinds are computed from the per-sample Fourier surrogate"}}}};
}

}  // namespace tabdistill
