#include "tabdistill/harness.hpp"

#include "tabdistill/external.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace tabdistill {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---------------------------------------------------------------- metrics

std::optional<double> auroc(const Vector& score, const Vector& positive) {
  if (score.size() != positive.size()) throw Error("auroc: score and label lengths differ");
  const Eigen::Index n = score.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return score(a) < score(b); });
  double n_pos = 0, rank_sum = 0;
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j < n && score(order[j]) == score(order[i])) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of 1-based ranks i+1..j
    for (Eigen::Index t = i; t < j; ++t)
      if (positive(order[t]) > 0.5) {
        rank_sum += mid;
        n_pos += 1;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

std::vector<std::string> metric_names(Task task) {
  if (task == Task::regression) return {"mse", "mae", "r2"};
  return {"accuracy", "f1", "auroc"};
}

bool lower_is_better(const std::string& metric) { return metric == "mse" || metric == "mae"; }

MetricMap metrics(const Matrix& pred, const Vector& truth, Task task, int n_classes) {
  if (pred.rows() != truth.size())
    throw Error("metrics: " + std::to_string(pred.rows()) + " predictions for " + std::to_string(truth.size()) + " targets");
  if (truth.size() == 0) throw Error("metrics: empty evaluation set");
  MetricMap m;
  if (task == Task::regression) {
    if (pred.cols() != 1) throw Error("metrics: regression predictions must have one column");
    const Vector err = pred.col(0) - truth;
    const double ss_res = err.squaredNorm();
    const double ss_tot = (truth.array() - truth.mean()).square().sum();
    m["mse"] = ss_res / static_cast<double>(truth.size());
    m["mae"] = err.cwiseAbs().mean();
    // A constant target has no variance to explain.
    m["r2"] = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
    return m;
  }

  const int c = task == Task::binary ? 2 : n_classes;
  if (pred.cols() != c) throw Error("metrics: expected " + std::to_string(c) + " probability columns, got " + std::to_string(pred.cols()));
  const Vector labels = predicted_labels(pred);
  m["accuracy"] = (labels.array() == truth.array()).cast<double>().mean();

  auto f1_of = [&](int k) -> std::optional<double> {
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
      const bool t = truth(i) == k, p = labels(i) == k;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    if (tp + fp + fn == 0) return std::nullopt;
    return 2 * tp / (2 * tp + fp + fn);
  };
  if (task == Task::binary) {
    // Neither truth nor prediction names the positive class: full agreement.
    m["f1"] = f1_of(1).value_or(1.0);
  } else {
    double sum = 0;
    int used = 0;
    for (int k = 0; k < c; ++k)
      if (auto f = f1_of(k)) {
        sum += *f;
        ++used;
      }
    m["f1"] = sum / used;
  }

  if (task == Task::binary) {
    if (auto a = auroc(pred.col(1), (truth.array() == 1).cast<double>().matrix())) m["auroc"] = *a;
  } else {
    double sum = 0;
    bool all = true;
    for (int k = 0; k < c && all; ++k) {
      auto a = auroc(pred.col(k), (truth.array() == k).cast<double>().matrix());
      if (a) sum += *a;
      else all = false;
    }
    if (all) m["auroc"] = sum / c;
  }
  return m;
}

// ---------------------------------------------------------------- reports

void MetricReport::append(const MetricReport& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
  for (const auto& [k, v] : other.timings) timings[k] += v;
  for (const auto& n : other.notes)
    if (std::find(notes.begin(), notes.end(), n) == notes.end()) notes.push_back(n);
}

void MetricReport::sort() {
  std::stable_sort(records.begin(), records.end(), [](const MetricRecord& a, const MetricRecord& b) {
    return std::tie(a.dataset, a.axis, a.param, a.method, a.n_int, a.metric, a.seed) <
           std::tie(b.dataset, b.axis, b.param, b.method, b.n_int, b.metric, b.seed);
  });
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  for (const auto& n : notes) os << "# " << n << "\n";
  os << "dataset,method,metric,n_int,seed,value,axis,param\n";
  for (const auto& r : records)
    os << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << r.metric << ',' << r.n_int << ',' << r.seed << ','
       << format_double(r.value) << ',' << csv_field(r.axis) << ',' << (r.axis.empty() ? "" : format_double(r.param)) << "\n";
  return os.str();
}

MetricReport MetricReport::from_csv(const std::string& text) {
  MetricReport rep;
  std::string body;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# ", 0) == 0) rep.notes.push_back(line.substr(2));
    else body += line + "\n";
  }
  auto rows = parse_csv(body);
  if (rows.empty()) return rep;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != 8) throw Error("report row " + std::to_string(i) + ": expected 8 fields, got " + std::to_string(f.size()));
    MetricRecord r{f[0], f[1], f[2], std::stoi(f[3]), std::stoull(f[4]), std::stod(f[5]), f[6], f[7].empty() ? 0.0 : std::stod(f[7])};
    rep.records.push_back(r);
  }
  return rep;
}

namespace {

nlohmann::json records_json(const std::vector<MetricRecord>& rs) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rs)
    arr.push_back({r.dataset, r.method, r.metric, r.n_int, r.seed, r.value, r.axis, r.param});
  return arr;
}

std::vector<MetricRecord> records_from_json(const nlohmann::json& arr) {
  std::vector<MetricRecord> rs;
  for (const auto& a : arr)
    rs.push_back({a[0].get<std::string>(), a[1].get<std::string>(), a[2].get<std::string>(), a[3].get<int>(),
                  a[4].get<std::uint64_t>(), a[5].get<double>(), a[6].get<std::string>(), a[7].get<double>()});
  return rs;
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values, bool lower_better) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) { return lower_better ? values[a] < values[b] : values[a] > values[b]; };
  std::sort(order.begin(), order.end(), better);
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = mid;
    i = j;
  }
  return ranks;
}

RankTable rank_methods(const MetricReport& report) {
  // (dataset, metric, n_int) -> method -> seed values
  std::map<std::tuple<std::string, std::string, int>, std::map<std::string, std::vector<double>>> cells;
  std::set<std::string> methods;
  for (const auto& r : report.records) {
    cells[{r.dataset, r.metric, r.n_int}][r.method].push_back(r.value);
    methods.insert(r.method);
  }

  RankTable table;
  table.methods.assign(methods.begin(), methods.end());
  std::set<std::string> datasets;
  std::map<std::pair<std::string, int>, int> counts;
  std::vector<std::string> missing;
  for (const auto& [key, by_method] : cells) {
    const auto& [dataset, metric, n_int] = key;
    for (const auto& m : table.methods)
      if (!by_method.count(m))
        missing.push_back("dataset=" + dataset + " metric=" + metric + " n_int=" + std::to_string(n_int) + " method=" + m);
  }
  if (!missing.empty()) {
    std::string msg = "rank_methods: " + std::to_string(missing.size()) + " missing cell(s):";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += "\n  " + missing[i];
    if (missing.size() > 10) msg += "\n  ...";
    throw Error(msg);
  }

  for (const auto& [key, by_method] : cells) {
    const auto& [dataset, metric, n_int] = key;
    datasets.insert(dataset);
    std::vector<double> means;
    for (const auto& m : table.methods) {
      const auto& v = by_method.at(m);
      means.push_back(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
    }
    const auto ranks = average_ranks(means, lower_is_better(metric));
    auto& slot = table.ranks[{metric, n_int}];
    for (std::size_t i = 0; i < ranks.size(); ++i) slot[table.methods[i]] += ranks[i];
    ++counts[{metric, n_int}];
  }
  for (auto& [key, slot] : table.ranks)
    for (auto& [m, v] : slot) v /= counts[key];
  table.n_datasets = static_cast<int>(datasets.size());
  return table;
}

std::string RankTable::to_csv() const {
  std::ostringstream os;
  for (const auto& n : notes) os << "# " << n << "\n";
  os << "# average rank over " << n_datasets << " dataset(s) across " << methods.size() << " methods; 1 is best\n";
  os << "metric,n_int";
  for (const auto& m : methods) os << ',' << csv_field(m);
  os << "\n";
  for (const auto& [key, slot] : ranks) {
    os << key.first << ',' << key.second;
    for (const auto& m : methods) os << ',' << format_double(slot.at(m));
    os << "\n";
  }
  return os.str();
}

Overlap overlap_stability(const std::vector<Subset>& a, const std::vector<Subset>& reference, std::size_t top) {
  if (top == 0) throw Error("overlap_stability: top must be >= 1");
  auto head = [&](const std::vector<Subset>& v) {
    std::set<Subset> s;
    for (const auto& x : v) {
      if (s.size() == top) break;
      s.insert(canonical(x));
    }
    return s;
  };
  const auto sa = head(a), sb = head(reference);
  std::size_t shared = 0;
  for (const auto& s : sa) shared += sb.count(s);
  Overlap o;
  o.flagged = sa.size() < top || sb.size() < top;
  // The larger side sets the denominator so a strict subset scores below 1.
  const std::size_t denom = std::max(sa.size(), sb.size());
  o.value = denom == 0 ? 1.0 : static_cast<double>(shared) / static_cast<double>(denom);
  return o;
}

// ---------------------------------------------------------------- cache

CellCache::CellCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (enabled()) std::filesystem::create_directories(dir_);
}

std::optional<nlohmann::json> CellCache::load(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  std::ifstream in(dir_ / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(in);
    ++hits_;
    return j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // a torn write from an interrupted run; recompute
  }
}

void CellCache::store(const std::string& key, const nlohmann::json& value) const {
  if (!enabled()) return;
  const auto tmp = dir_ / (key + ".json.tmp");
  {
    std::ofstream out(tmp);
    out << value.dump();
    if (!out) throw Error("cannot write cache file " + tmp.string());
  }
  std::filesystem::rename(tmp, dir_ / (key + ".json"));
}

std::string dataset_digest(const Dataset& d) {
  std::string bytes;
  bytes.append(reinterpret_cast<const char*>(d.features.data()), sizeof(double) * static_cast<std::size_t>(d.features.size()));
  bytes.append(reinterpret_cast<const char*>(d.target.data()), sizeof(double) * static_cast<std::size_t>(d.target.size()));
  bytes += to_string(d.task) + "/" + std::to_string(d.n_classes) + "/" + std::to_string(d.cols());
  return hex_digest(bytes);
}

// ---------------------------------------------------------------- methods

std::string canonical_method(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "fast") return kFastMethod;
  return to_string(index_from_string(name));
}

std::vector<std::string> default_methods() {
  std::vector<std::string> out;
  for (auto k : all_index_kinds()) out.push_back(to_string(k));
  out.push_back(kFastMethod);
  return out;
}

namespace {

bool is_builtin_learner(const std::string& name) {
  return name == "cart" || name == "forest" || name == "gbt" || name == "ridge" || name == "knn";
}

nlohmann::json setup_json(const SelectionSetup& s) {
  return {{"distill", to_json(s.distill)}, {"gam", to_json(s.gam)}, {"teacher", s.teacher}, {"fast_bins", s.fast_bins}};
}

std::vector<Subset> subsets_from_json(const nlohmann::json& j) { return j.get<std::vector<Subset>>(); }

}  // namespace

std::unique_ptr<Predictor> fit_teacher(const std::string& teacher, const Dataset& train, std::uint64_t seed) {
  std::unique_ptr<Predictor> p;
  if (teacher == "knn") p = std::make_unique<KNearest>(static_cast<int>(std::min<Eigen::Index>(5, train.rows())));
  else if (is_builtin_learner(teacher)) p = make_learner(teacher, seed);
  else p = connect_external(teacher);
  p->fit(train);
  return p;
}

std::map<std::string, std::vector<Subset>> select_interactions(const Dataset& train, const Predictor* teacher,
                                                               const std::vector<std::string>& methods, int max_n,
                                                               const SelectionSetup& setup, std::uint64_t seed) {
  std::vector<IndexKind> kinds;
  std::map<IndexKind, std::string> names;  // results are keyed by the caller's spelling
  bool fast = false;
  for (const auto& m : methods) {
    if (m == kFastMethod) {
      fast = true;
    } else {
      kinds.push_back(index_from_string(m));
      names[kinds.back()] = m;
    }
  }
  std::map<std::string, std::vector<Subset>> out;
  if (!kinds.empty()) {
    if (!teacher) throw Error("select_interactions: index methods need a teacher");
    DistillConfig cfg = setup.distill;
    cfg.n_interactions = max_n;
    cfg.seed = seed;
    for (const auto& [kind, ranking] : distill_multi(train, *teacher, cfg, kinds)) out[names.at(kind)] = ranking.subsets();
  }
  if (fast) {
    GamTrainConfig g = setup.gam;
    g.seed = seed;
    const GamModel additive = fit_gam(train, {}, g);
    std::vector<Subset> pairs;
    for (const auto& p : fast_select_pairs(train, additive, max_n, setup.fast_bins)) pairs.push_back(p.pair);
    out[kFastMethod] = pairs;
  }
  return out;
}

// ---------------------------------------------------------------- scenario A

namespace {

std::unique_ptr<Predictor> make_baseline(const std::string& name, const Dataset& train, std::uint64_t seed) {
  if (name == "knn") return std::make_unique<KNearest>(static_cast<int>(std::min<Eigen::Index>(5, train.rows())));
  return make_learner(name, seed);
}

}  // namespace

MetricReport run_scenario_a(const std::vector<ScenarioGrid>& grids, const std::vector<std::uint64_t>& seeds,
                            const ScenarioAOptions& opts) {
  struct Job {
    const ScenarioGrid* grid;
    const ScenarioCell* cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& g : grids)
    for (const auto& c : g.cells)
      for (auto s : seeds) jobs.push_back({&g, &c, s});

  const CellCache cache(opts.cache_dir);
  const nlohmann::json base = {{"runner", "scenario_a"},
                               {"learners", opts.learners},
                               {"n_interactions", opts.n_interactions},
                               {"min_order", opts.min_order},
                               {"setup", setup_json(opts.setup)}};
  std::vector<MetricReport> parts(jobs.size());
  const int outer = std::max(1, opts.jobs);
  parallel_for(jobs.size(), outer, [&](std::size_t i) {
    const auto& [grid, cell, seed] = jobs[i];
    const double param = grid->axis == "n_train" ? cell->n_train : grid->axis == "sigma" ? cell->sigma : cell->k;
    nlohmann::json key = base;
    key["cell"] = {cell->experiment, cell->n, cell->k, cell->sigma, cell->n_train, cell->n_test};
    key["seed"] = seed;
    const std::string digest = hex_digest(key.dump());
    MetricReport& part = parts[i];
    if (auto hit = cache.load(digest)) {
      part.records = records_from_json(*hit);
      return;
    }

    FourierOptions fo;
    fo.n = cell->n;
    fo.k = cell->k;
    fo.sigma = cell->sigma;
    fo.n_train = cell->n_train;
    fo.n_test = cell->n_test;
    fo.min_order = opts.min_order;
    fo.seed = seed;
    const FourierTask task = gen_fourier_sparse(fo);

    for (const auto& learner : opts.learners) {
      const auto t0 = Clock::now();
      Matrix pred;
      int n_int = 0;
      if (learner == "tabdistill_gam") {
        auto teacher = fit_teacher(opts.setup.teacher, task.train, seed);
        DistillConfig dc = opts.setup.distill;
        dc.n_interactions = opts.n_interactions;
        dc.seed = seed;
        if (outer > 1) dc.jobs = 1;
        const auto ranking = distill(task.train, *teacher, dc);
        GamTrainConfig gc = opts.setup.gam;
        gc.seed = seed;
        if (outer > 1) gc.jobs = 1;
        const auto model = fit_gam(task.train, ranking.subsets(), gc);
        pred = predict_gam(model, task.test.features);
        n_int = opts.n_interactions;
      } else {
        auto m = make_baseline(learner, task.train, seed);
        m->fit(task.train);
        pred = m->predict(task.test.features);
      }
      const double r2 = metrics(pred, task.test.target, Task::regression).at("r2");
      part.records.push_back({grid->name, learner, "r2", n_int, seed, r2, grid->axis, param});
      part.timings["learner:" + learner] += seconds_since(t0);
    }
    cache.store(digest, records_json(part.records));
  });

  MetricReport out;
  for (const auto& p : parts) out.append(p);
  out.sort();
  return out;
}

std::string scenario_a_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "experiment,axis,value,learner,seed,r2\n";
  for (const auto& r : report.records)
    if (r.metric == "r2")
      os << r.dataset << ',' << r.axis << ',' << format_double(r.param) << ',' << r.method << ',' << r.seed << ','
         << format_double(r.value) << "\n";
  return os.str();
}

// ---------------------------------------------------------------- scenario B

MetricReport run_scenario_b(const std::vector<int>& depths, const std::vector<std::uint64_t>& seeds,
                            const ScenarioBOptions& opts) {
  std::vector<std::pair<int, std::uint64_t>> jobs;
  for (int d : depths)
    for (auto s : seeds) jobs.emplace_back(d, s);

  const CellCache cache(opts.cache_dir);
  const nlohmann::json base = {{"runner", "scenario_b"}, {"n_samples", opts.n_samples}, {"p", opts.p},
                               {"p_inf", opts.p_inf},   {"n_interactions", opts.n_interactions},
                               {"setup", setup_json(opts.setup)}};
  std::vector<MetricReport> parts(jobs.size());
  const int outer = std::max(1, opts.jobs);
  parallel_for(jobs.size(), outer, [&](std::size_t i) {
    const auto [depth, seed] = jobs[i];
    nlohmann::json key = base;
    key["depth"] = depth;
    key["seed"] = seed;
    const std::string digest = hex_digest(key.dump());
    MetricReport& part = parts[i];
    if (auto hit = cache.load(digest)) {
      part.records = records_from_json(*hit);
      return;
    }

    const Dataset data = gen_cluster_classification(opts.n_samples, opts.p, opts.p_inf, seed);
    const TreeTask task = make_tree_task(data, depth, seed);
    GamTrainConfig gc = opts.setup.gam;
    gc.seed = seed;
    if (outer > 1) gc.jobs = 1;

    auto record = [&](const std::string& student, const Matrix& proba, int n_int) {
      for (const auto& [metric, value] : metrics(proba, task.test.target, task.test.task, task.test.n_classes))
        part.records.push_back({"tree", student, metric, n_int, seed, value, "depth", static_cast<double>(depth)});
    };

    auto t0 = Clock::now();
    const GamModel additive = fit_gam(task.train, {}, gc);
    record("gam_additive", predict_gam(additive, task.test.features), 0);
    part.timings["gam_additive"] += seconds_since(t0);

    t0 = Clock::now();
    auto teacher = fit_teacher(opts.setup.teacher, task.train, seed);
    record("teacher", teacher->predict(task.test.features), 0);
    DistillConfig dc = opts.setup.distill;
    dc.n_interactions = opts.n_interactions;
    dc.seed = seed;
    if (outer > 1) dc.jobs = 1;
    const auto ranking = distill(task.train, *teacher, dc);
    const GamModel distilled = fit_gam(task.train, ranking.subsets(), gc);
    record("gam_distilled", predict_gam(distilled, task.test.features), opts.n_interactions);
    part.timings["gam_distilled"] += seconds_since(t0);

    t0 = Clock::now();
    std::vector<Subset> pairs;
    for (const auto& p : fast_select_pairs(task.train, additive, opts.n_interactions, opts.setup.fast_bins)) pairs.push_back(p.pair);
    const GamModel fast = fit_gam(task.train, pairs, gc);
    record("gam_fast", predict_gam(fast, task.test.features), opts.n_interactions);
    part.timings["gam_fast"] += seconds_since(t0);

    cache.store(digest, records_json(part.records));
  });

  MetricReport out;
  for (const auto& p : parts) out.append(p);
  out.sort();
  return out;
}

std::string scenario_b_csv(const MetricReport& report) {
  // depth, student, seed -> metric -> value
  std::map<std::tuple<double, std::string, std::uint64_t>, std::map<std::string, double>> rows;
  for (const auto& r : report.records) rows[{r.param, r.method, r.seed}][r.metric] = r.value;
  std::ostringstream os;
  os << "depth,student,seed,accuracy,auroc,f1\n";
  for (const auto& [key, m] : rows) {
    const auto& [depth, student, seed] = key;
    auto get = [&](const char* name) { return m.count(name) ? format_double(m.at(name)) : std::string(); };
    os << static_cast<int>(depth) << ',' << student << ',' << seed << ',' << get("accuracy") << ',' << get("auroc") << ','
       << get("f1") << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------- benchmark

BenchmarkDataset load_benchmark_dataset(const std::string& path, const std::string& target) {
  std::string column = target;
  if (column.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    std::string header;
    std::getline(in, header);
    const auto fields = parse_csv(header);
    if (fields.empty() || fields[0].empty()) throw Error("no header row in " + path);
    column = fields[0].back();
    while (!column.empty() && std::isspace(static_cast<unsigned char>(column.back()))) column.pop_back();
  }
  return {std::filesystem::path(path).stem().string(), load_csv(path, column)};
}

BenchmarkResult run_benchmark(const std::vector<BenchmarkDataset>& datasets, const std::vector<std::uint64_t>& seeds,
                              const BenchmarkOptions& opts) {
  if (opts.max_interactions < 1) throw Error("max_interactions must be >= 1");
  if (opts.methods.empty()) throw Error("benchmark needs at least one method");
  std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    for (auto s : seeds) jobs.emplace_back(d, s);

  const CellCache cache(opts.cache_dir);
  const nlohmann::json base = {{"runner", "benchmark"},
                               {"methods", opts.methods},
                               {"max_interactions", opts.max_interactions},
                               {"train_fraction", opts.train_fraction},
                               {"setup", setup_json(opts.setup)}};
  struct Part {
    MetricReport report;
    std::vector<std::string> failures;
    std::map<std::string, std::vector<Subset>> selection;
  };
  std::vector<Part> parts(jobs.size());
  const int outer = std::max(1, opts.jobs);

  parallel_for(jobs.size(), outer, [&](std::size_t i) {
    const auto [di, seed] = jobs[i];
    const auto& ds = datasets[di];
    Part& part = parts[i];
    nlohmann::json key = base;
    key["data"] = dataset_digest(ds.data);
    key["seed"] = seed;
    const std::string digest = hex_digest(key.dump());
    if (auto hit = cache.load(digest)) {
      part.report.records = records_from_json(hit->at("records"));
      part.failures = hit->at("failures").get<std::vector<std::string>>();
      for (const auto& [m, v] : hit->at("selection").items()) part.selection[m] = subsets_from_json(v);
      return;
    }
    const std::string where = ds.name + "/seed=" + std::to_string(seed);

    const auto [train, test] = split(ds.data, opts.train_fraction, seed);
    SelectionSetup setup = opts.setup;
    if (outer > 1) setup.distill.jobs = setup.gam.jobs = 1;
    setup.gam.seed = seed;

    std::unique_ptr<Predictor> teacher;
    bool needs_teacher = false;
    for (const auto& m : opts.methods) needs_teacher |= m != kFastMethod;
    auto t0 = Clock::now();
    try {
      if (needs_teacher) teacher = fit_teacher(setup.teacher, train, seed);
    } catch (const std::exception& e) {
      part.failures.push_back(where + " teacher: " + e.what());
    }
    part.report.timings["teacher"] += seconds_since(t0);

    // Index methods share one surrogate per sample; each method is tried
    // separately only when the joint run fails so one bad method does not
    // take the others down.
    t0 = Clock::now();
    std::vector<std::string> index_methods;
    for (const auto& m : opts.methods)
      if (m != kFastMethod && teacher) index_methods.push_back(m);
    try {
      if (!index_methods.empty())
        part.selection = select_interactions(train, teacher.get(), index_methods, opts.max_interactions, setup, seed);
    } catch (const std::exception&) {
      for (const auto& m : index_methods) try {
          part.selection[m] = select_interactions(train, teacher.get(), {m}, opts.max_interactions, setup, seed).at(m);
        } catch (const std::exception& e) {
          part.failures.push_back(where + " " + m + ": " + e.what());
        }
    }
    if (std::find(opts.methods.begin(), opts.methods.end(), kFastMethod) != opts.methods.end()) {
      try {
        part.selection[kFastMethod] =
            select_interactions(train, nullptr, {kFastMethod}, opts.max_interactions, setup, seed).at(kFastMethod);
      } catch (const std::exception& e) {
        part.failures.push_back(where + " " + kFastMethod + ": " + e.what());
      }
    }
    part.report.timings["selection"] += seconds_since(t0);

    // Methods that agree on a prefix share one GAM fit; every fit uses the
    // same GamTrainConfig so only the interaction list differs.
    t0 = Clock::now();
    std::map<std::vector<Subset>, MetricMap> fitted;
    for (const auto& [method, list] : part.selection)
      for (int n = 1; n <= opts.max_interactions; ++n) {
        const std::vector<Subset> prefix(list.begin(), list.begin() + std::min<std::size_t>(n, list.size()));
        try {
          auto it = fitted.find(prefix);
          if (it == fitted.end()) {
            const GamModel model = fit_gam(train, prefix, setup.gam);
            it = fitted.emplace(prefix, metrics(predict_gam(model, test.features), test.target, test.task, test.n_classes)).first;
          }
          for (const auto& [metric, value] : it->second)
            part.report.records.push_back({ds.name, method, metric, n, seed, value, "", 0.0});
        } catch (const std::exception& e) {
          part.failures.push_back(where + " " + method + " n_int=" + std::to_string(n) + ": " + e.what());
        }
      }
    part.report.timings["gam"] += seconds_since(t0);

    nlohmann::json sel = nlohmann::json::object();
    for (const auto& [m, v] : part.selection) sel[m] = v;
    cache.store(digest, {{"records", records_json(part.report.records)}, {"failures", part.failures}, {"selection", sel}});
  });

  BenchmarkResult res;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    res.report.append(parts[i].report);
    res.failures.insert(res.failures.end(), parts[i].failures.begin(), parts[i].failures.end());
    res.selections[datasets[jobs[i].first].name + "/" + std::to_string(jobs[i].second)] = parts[i].selection;
  }
  res.report.sort();

  // Ranking needs every method in every (dataset, metric, N_int) group;
  // groups left incomplete by a failure are dropped from the ranks.
  MetricReport rankable;
  {
    std::map<std::tuple<std::string, std::string, int>, std::set<std::string>> present;
    for (const auto& r : res.report.records) present[{r.dataset, r.metric, r.n_int}].insert(r.method);
    const std::set<std::string> all(opts.methods.begin(), opts.methods.end());
    std::set<std::string> dropped;
    for (const auto& r : res.report.records) {
      if (present[{r.dataset, r.metric, r.n_int}] == all) rankable.records.push_back(r);
      else dropped.insert(r.dataset + " " + r.metric + " n_int=" + std::to_string(r.n_int));
    }
    for (const auto& d : dropped) res.report.notes.push_back("excluded from ranks (incomplete): " + d);
  }
  std::set<std::string> names;
  for (const auto& d : datasets) names.insert(d.name);
  res.report.notes.insert(res.report.notes.begin(),
                          {std::to_string(opts.methods.size()) + " methods ranked (RuleFit not included)",
                           std::to_string(names.size()) + " dataset(s); absolute ranks are not comparable to runs over other dataset collections"});
  if (!rankable.records.empty()) res.ranks = rank_methods(rankable);
  res.ranks.notes = {res.report.notes[0], res.report.notes[1]};
  return res;
}

// ---------------------------------------------------------------- stability

std::string StabilityTable::to_csv() const {
  std::ostringstream os;
  os << "method";
  for (int b : budgets) os << ',' << b;
  os << ",flagged\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    os << methods[m];
    std::string flags;
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", overlap(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)));
      os << ',' << buf;
      if (flagged[m][b]) flags += (flags.empty() ? "" : ";") + std::to_string(budgets[b]);
    }
    os << ',' << flags << "\n";
  }
  return os.str();
}

StabilityTable run_stability(const Dataset& train, const StabilityOptions& opts, std::uint64_t seed) {
  if (opts.budgets.empty()) throw Error("stability needs at least one budget");
  std::vector<int> budgets = opts.budgets;
  if (std::find(budgets.begin(), budgets.end(), opts.reference) == budgets.end()) budgets.push_back(opts.reference);

  std::unique_ptr<Predictor> teacher;
  for (const auto& m : opts.methods)
    if (m != kFastMethod && !teacher) teacher = fit_teacher(opts.setup.teacher, train, seed);

  // For the index methods a budget is the per-sample query count; FAST has
  // no queries, so there it is the number of training rows it sees.
  std::map<int, std::map<std::string, std::vector<Subset>>> chosen;
  const int top = static_cast<int>(opts.top);
  for (int b : budgets) {
    std::vector<std::string> index_methods;
    bool fast = false;
    for (const auto& m : opts.methods) {
      if (m == kFastMethod) fast = true;
      else index_methods.push_back(m);
    }
    SelectionSetup s = opts.setup;
    s.distill.budget = b;
    if (!index_methods.empty()) chosen[b] = select_interactions(train, teacher.get(), index_methods, top, s, seed);
    if (fast) {
      Dataset rows = train;
      if (b < train.rows()) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(train.rows()));
        std::iota(idx.begin(), idx.end(), 0);
        std::mt19937_64 rng(derive_seed(seed, 0xFA57));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(b));
        std::sort(idx.begin(), idx.end());
        rows = train.select(idx);
      }
      chosen[b][kFastMethod] = select_interactions(rows, nullptr, {kFastMethod}, top, s, seed).at(kFastMethod);
    }
  }

  StabilityTable t;
  t.methods = opts.methods;
  t.budgets = opts.budgets;
  t.overlap = Matrix::Zero(static_cast<Eigen::Index>(t.methods.size()), static_cast<Eigen::Index>(t.budgets.size()));
  t.flagged.assign(t.methods.size(), std::vector<bool>(t.budgets.size(), false));
  for (std::size_t m = 0; m < t.methods.size(); ++m)
    for (std::size_t b = 0; b < t.budgets.size(); ++b) {
      const auto o = overlap_stability(chosen[t.budgets[b]][t.methods[m]], chosen[opts.reference][t.methods[m]], opts.top);
      t.overlap(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = o.value;
      t.flagged[m][b] = o.flagged;
    }
  return t;
}

}  // namespace tabdistill
