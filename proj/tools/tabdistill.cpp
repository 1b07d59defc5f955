// Command-line front end: distill, fit, bench, scenario, stability.
//
// Settings come from built-in defaults, then an optional --config JSON file,
// then flags. The resolved settings are written to <out>/config.json and can
// be fed back through --config to repeat a run.

#include "tabdistill/distill.hpp"
#include "tabdistill/external.hpp"
#include "tabdistill/gam.hpp"
#include "tabdistill/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tabdistill;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kTeacher = 3, kRuntime = 4 };

struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------- settings

/// Copies `src` over `dst`, refusing keys that `dst` does not define.
void merge_strict(json& dst, const json& src, const std::string& where) {
  if (!src.is_object()) throw ConfigError(where.empty() ? "config must be a JSON object" : "'" + where + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (dst[key].is_object() && value.is_object()) merge_strict(dst[key], value, path);
    else dst[key] = value;
  }
}

/// Flag values applied on top of the file config, only when given.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply_.push_back([value, opt, pointer](json& cfg) {
      if (opt->count()) cfg[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
  /// Flag whose string value goes through `convert` first.
  CLI::Option* add_parsed(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help,
                          std::function<json(const std::string&)> convert) {
    auto value = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply_.push_back([value, opt, pointer, convert](json& cfg) {
      if (opt->count()) cfg[json::json_pointer(pointer)] = convert(*value);
    });
    return opt;
  }
  void operator()(json& cfg) const {
    for (const auto& f : apply_) f(cfg);
  }

 private:
  std::vector<std::function<void(json&)>> apply_;
};

/// "1..10" or "1,3,5" (ranges and lists may be mixed: "1..3,8").
std::vector<long long> parse_int_list(const std::string& text) {
  std::vector<long long> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    if (part.empty()) continue;
    try {
      const auto dots = part.find("..");
      if (dots == std::string::npos) {
        out.push_back(std::stoll(part));
        continue;
      }
      const long long lo = std::stoll(part.substr(0, dots)), hi = std::stoll(part.substr(dots + 2));
      if (hi < lo) throw ConfigError("empty range '" + part + "'");
      for (long long v = lo; v <= hi; ++v) out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("not an integer list: '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list: '" + text + "'");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');)
    if (!part.empty()) out.push_back(part);
  return out;
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

json teacher_defaults() { return {{"teacher", "gbt"}, {"teacher_cmd", ""}, {"teacher_addr", ""}}; }

void add_teacher_flags(CLI::App* app, Overrides& ov) {
  ov.add<std::string>(app, "--teacher", "/teacher", "built-in teacher: gbt, forest, cart, ridge, knn");
  ov.add<std::string>(app, "--teacher-cmd", "/teacher_cmd", "shell command that speaks the teacher wire protocol");
  ov.add<std::string>(app, "--teacher-addr", "/teacher_addr", "host:port of a running teacher bridge");
}

/// Endpoint string understood by fit_teacher.
std::string resolve_teacher(const json& cfg) {
  const auto cmd = get<std::string>(cfg, "teacher_cmd"), addr = get<std::string>(cfg, "teacher_addr");
  if (!cmd.empty() && !addr.empty()) throw ConfigError("give at most one of teacher_cmd and teacher_addr");
  if (!cmd.empty()) return cmd;
  if (!addr.empty()) return addr.rfind("tcp://", 0) == 0 ? addr : "tcp://" + addr;
  const auto name = get<std::string>(cfg, "teacher");
  static const std::vector<std::string> builtin{"gbt", "forest", "cart", "ridge", "knn"};
  if (std::find(builtin.begin(), builtin.end(), name) == builtin.end())
    throw ConfigError("unknown teacher '" + name + "' (use --teacher-cmd or --teacher-addr for external teachers)");
  return name;
}

/// Commands that sweep their own interaction counts leave out --n-int.
void add_distill_flags(CLI::App* app, Overrides& ov, bool with_n_int) {
  ov.add<std::string>(app, "--index", "/distill/index", "interaction index: fbii, fsii, stii, bii, sii, mobius, fourier");
  if (with_n_int) ov.add<int>(app, "--n-int", "/distill/n_interactions", "number of interactions to keep");
  ov.add<int>(app, "--budget", "/distill/budget", "teacher query budget per explained sample");
  ov.add<int>(app, "--max-order", "/distill/max_order", "maximum interaction order");
  ov.add<int>(app, "--n-explain", "/distill/n_explain", "training rows to explain");
  ov.add<int>(app, "--top-r", "/distill/per_sample_top", "interactions kept per explained row");
  ov.add<std::string>(app, "--masking", "/distill/masking", "masking policy: marginal or baseline");
  ov.add<int>(app, "--background", "/distill/background_size", "background rows for marginal masking");
}

DistillConfig distill_settings(const json& cfg) {
  try {
    DistillConfig c = distill_config_from_json(cfg.at("distill"));
    c.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("distill settings: ") + e.what());
  }
}

GamTrainConfig gam_settings(const json& cfg) {
  try {
    GamTrainConfig c = gam_config_from_json(cfg.at("gam"));
    c.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("gam settings: ") + e.what());
  }
}

int jobs_setting(const json& cfg) {
  const int j = get<int>(cfg, "jobs");
  if (j < 0) throw ConfigError("jobs must be >= 0");
  return j == 0 ? default_jobs() : j;
}

// ---------------------------------------------------------------- output

class RunLog {
 public:
  RunLog(const fs::path& out, bool verbose) : t0_(std::chrono::steady_clock::now()), verbose_(verbose) {
    fs::create_directories(out / "logs");
    file_.open(out / "logs" / "run.log", std::ios::app);
  }
  void operator()(const std::string& msg) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    std::ostringstream line;
    line << "[" << std::fixed << std::setprecision(2) << std::setw(8) << t << "s] " << msg << "\n";
    file_ << line.str() << std::flush;
    if (verbose_) std::cerr << line.str();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
  bool verbose_;
  std::ofstream file_;
};

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

std::vector<std::string> method_setting(const json& cfg);

/// Creates the output directory and archives the resolved settings in
/// canonical spelling.
fs::path prepare_out(json cfg) {
  if (cfg.contains("distill")) cfg["distill"] = to_json(distill_settings(cfg));
  if (cfg.contains("gam")) cfg["gam"] = to_json(gam_settings(cfg));
  if (cfg.contains("methods")) cfg["methods"] = method_setting(cfg);
  const fs::path out = get<std::string>(cfg, "out");
  fs::create_directories(out);
  write_file(out / "config.json", cfg.dump(2) + "\n");
  return out;
}

std::optional<Task> task_setting(const json& cfg) {
  const auto& t = cfg.at("task");
  if (t.is_null()) return std::nullopt;
  try {
    return task_from_string(t.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(std::string("task: ") + e.what());
  }
}

Dataset load_data(const std::string& path, const std::string& target, std::optional<Task> task) {
  try {
    return load_csv(path, target, task);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

std::unique_ptr<Predictor> build_teacher(const std::string& endpoint, const Dataset& train, std::uint64_t seed) {
  try {
    return fit_teacher(endpoint, train, seed);
  } catch (const TeacherError&) {
    throw;
  } catch (const std::exception& e) {
    throw TeacherError("teacher '" + endpoint + "' failed to fit: " + e.what());
  }
}

std::string feature_label(const Subset& s, const std::vector<Column>& cols) {
  std::string out;
  for (int j : s) {
    if (!out.empty()) out += " x ";
    out += j < static_cast<int>(cols.size()) ? cols[static_cast<std::size_t>(j)].name : std::to_string(j);
  }
  return out;
}

std::string ranking_table(const InteractionRanking& r, const Dataset& d) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "rank" << std::setw(40) << "features" << std::setw(16) << "indices" << std::right
     << std::setw(7) << "count" << std::setw(14) << "mass" << "\n";
  for (std::size_t i = 0; i < r.interactions.size(); ++i) {
    const auto& it = r.interactions[i];
    os << std::left << std::setw(6) << i + 1 << std::setw(40) << feature_label(it.subset, d.columns) << std::setw(16)
       << subset_string(it.subset) << std::right << std::setw(7) << it.count << std::setw(14) << std::setprecision(6)
       << it.mass << "\n";
  }
  if (r.interactions.empty()) os << "(no interactions found)\n";
  return os.str();
}

// ---------------------------------------------------------------- commands

struct Command {
  CLI::App* app = nullptr;
  json defaults;
  Overrides flags;
  std::string config_path;

  json resolve() const {
    json cfg = defaults;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config file " + config_path);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + config_path + ": " + e.what());
      }
      merge_strict(cfg, file, "");
    }
    flags(cfg);
    return cfg;
  }
};

void common_flags(Command& c, bool& verbose) {
  c.app->add_option("--config", c.config_path, "JSON settings file (flags take precedence)");
  c.flags.add<std::string>(c.app, "-o,--out", "/out", "output directory");
  c.app->add_flag("-v,--verbose", verbose, "mirror the run log to standard error");
}

int cmd_distill(const json& cfg, bool verbose) {
  const auto data = get<std::string>(cfg, "data"), target = get<std::string>(cfg, "target");
  if (data.empty()) throw ConfigError("--data is required");
  if (target.empty()) throw ConfigError("--target is required");
  const DistillConfig dc = distill_settings(cfg);
  const std::string teacher_spec = resolve_teacher(cfg);
  const auto task = task_setting(cfg);

  const Dataset d = load_data(data, target, task);
  const fs::path out = prepare_out(cfg);
  RunLog log(out, verbose);
  log("loaded " + data + ": " + std::to_string(d.rows()) + " rows, " + std::to_string(d.cols()) + " features, task " + to_string(d.task));
  auto teacher = build_teacher(teacher_spec, d, dc.seed);
  log("teacher ready: " + teacher->name());
  const auto ranking = distill(d, *teacher, dc);
  log("distilled " + std::to_string(ranking.diagnostics.size()) + " samples, " + std::to_string(ranking.interactions.size()) + " interactions kept");
  write_file(out / "ranking.json", to_json(ranking, d, dc).dump(2) + "\n");
  const auto table = ranking_table(ranking, d);
  write_file(out / "ranking.txt", table);
  std::cout << table;
  return kOk;
}

std::vector<Subset> parse_interaction_list(const std::string& text, const Dataset& d) {
  std::vector<Subset> out;
  std::stringstream ss(text);
  for (std::string group; std::getline(ss, group, ';');) {
    if (group.empty()) continue;
    Subset s;
    std::stringstream gs(group);
    for (std::string tok; std::getline(gs, tok, ',');) {
      while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.front()))) tok.erase(tok.begin());
      while (!tok.empty() && std::isspace(static_cast<unsigned char>(tok.back()))) tok.pop_back();
      if (tok.empty()) throw ConfigError("empty feature in interaction '" + group + "'");
      int idx = -1;
      if (std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); })) {
        idx = std::stoi(tok);
      } else {
        for (std::size_t j = 0; j < d.columns.size(); ++j)
          if (d.columns[j].name == tok) idx = static_cast<int>(j);
        if (idx < 0) throw ConfigError("unknown feature '" + tok + "' in interaction list");
      }
      if (idx >= d.cols()) throw ConfigError("feature index " + tok + " out of range (" + std::to_string(d.cols()) + " features)");
      s.push_back(idx);
    }
    out.push_back(canonical(s));
  }
  return out;
}

std::vector<Subset> ranking_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ranking file " + path);
  try {
    const json j = json::parse(in);
    std::vector<Subset> out;
    for (const auto& it : j.at("interactions")) out.push_back(canonical(it.at("indices").get<Subset>()));
    return out;
  } catch (const json::exception& e) {
    throw DataError("ranking file " + path + ": " + e.what());
  }
}

std::string term_file_name(const GamTerm& t, const std::vector<Column>& cols) {
  std::string name = "term";
  for (int j : t.features) {
    std::string col = j < static_cast<int>(cols.size()) ? cols[static_cast<std::size_t>(j)].name : std::to_string(j);
    for (char& ch : col)
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    name += "_" + std::to_string(j) + "-" + col;
  }
  return name + ".csv";
}

int cmd_fit(const json& cfg, bool verbose) {
  const auto data = get<std::string>(cfg, "data"), target = get<std::string>(cfg, "target");
  if (data.empty()) throw ConfigError("--data is required");
  if (target.empty()) throw ConfigError("--target is required");
  const auto ranking_path = get<std::string>(cfg, "ranking"), explicit_list = get<std::string>(cfg, "interactions");
  if (!ranking_path.empty() && !explicit_list.empty())
    throw ConfigError("give either a ranking file or an explicit interaction list, not both");
  GamTrainConfig gc = gam_settings(cfg);
  const double fraction = get<double>(cfg, "train_fraction");
  if (!(fraction > 0 && fraction < 1)) throw ConfigError("train_fraction must be in (0, 1)");
  const auto seed = get<std::uint64_t>(cfg, "seed");
  const int n_int = get<int>(cfg, "n_int");
  const auto task = task_setting(cfg);

  const Dataset d = load_data(data, target, task);
  std::vector<Subset> interactions;
  if (!explicit_list.empty()) interactions = parse_interaction_list(explicit_list, d);
  if (!ranking_path.empty()) interactions = ranking_interactions(ranking_path);
  if (n_int > 0 && static_cast<int>(interactions.size()) > n_int) interactions.resize(static_cast<std::size_t>(n_int));
  for (const auto& s : interactions)
    for (int j : s)
      if (j >= d.cols()) throw DataError("interaction " + subset_string(s) + " names a feature the data does not have");

  const fs::path out = prepare_out(cfg);
  RunLog log(out, verbose);
  auto [train, test] = split(d, fraction, seed);
  gc.seed = seed;
  log("fitting GAM on " + std::to_string(train.rows()) + " rows with " + std::to_string(interactions.size()) + " interaction(s)");
  const GamModel model = fit_gam(train, interactions, gc);
  for (std::size_t b = 0; b < model.logs.size(); ++b) log("bag " + std::to_string(b) + ": kept " + std::to_string(model.logs[b].best_round) + " rounds");

  MetricReport report;
  const std::string name = fs::path(data).stem().string();
  for (const auto& [metric, value] : metrics(predict_gam(model, test.features), test.target, test.task, test.n_classes))
    report.records.push_back({name, "gam", metric, static_cast<int>(interactions.size()), seed, value, "", 0.0});
  write_file(out / "report.csv", report.to_csv());
  write_file(out / "model.json", to_json(model).dump() + "\n");
  for (const auto& t : model.terms) write_file(out / "terms" / term_file_name(t, d.columns), term_csv(model, t, d.columns));
  for (const auto& r : report.records) std::cout << r.metric << " " << std::setprecision(6) << r.value << "\n";
  return kOk;
}

SelectionSetup selection_setup(const json& cfg) {
  SelectionSetup s;
  s.distill = distill_settings(cfg);
  s.gam = gam_settings(cfg);
  s.teacher = resolve_teacher(cfg);
  s.fast_bins = get<int>(cfg, "fast_bins");
  if (s.fast_bins < 2) throw ConfigError("fast_bins must be >= 2");
  return s;
}

std::vector<std::string> method_setting(const json& cfg) {
  std::vector<std::string> out;
  try {
    for (const auto& m : get<std::vector<std::string>>(cfg, "methods")) out.push_back(canonical_method(m));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("methods: ") + e.what());
  }
  if (out.empty()) throw ConfigError("methods must not be empty");
  return out;
}

std::vector<std::uint64_t> seed_setting(const json& cfg) {
  auto seeds = get<std::vector<std::uint64_t>>(cfg, "seeds");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  return seeds;
}

json timings_json(const MetricReport& r) {
  json t = json::object();
  for (const auto& [k, v] : r.timings) t[k] = v;
  return t;
}

int cmd_bench(const json& cfg, bool verbose) {
  const auto paths = get<std::vector<std::string>>(cfg, "datasets");
  if (paths.empty()) throw ConfigError("bench needs at least one dataset (--data)");
  BenchmarkOptions o;
  o.methods = method_setting(cfg);
  o.max_interactions = get<int>(cfg, "max_interactions");
  if (o.max_interactions < 1) throw ConfigError("max_interactions must be >= 1");
  o.train_fraction = get<double>(cfg, "train_fraction");
  if (!(o.train_fraction > 0 && o.train_fraction < 1)) throw ConfigError("train_fraction must be in (0, 1)");
  o.setup = selection_setup(cfg);
  o.jobs = jobs_setting(cfg);
  const auto seeds = seed_setting(cfg);
  const auto target = get<std::string>(cfg, "target");

  std::vector<BenchmarkDataset> datasets;
  for (const auto& p : paths) try {
      datasets.push_back(load_benchmark_dataset(p, target));
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  if (datasets.size() < 2) std::cerr << "warning: ranks over a single dataset are not meaningful\n";

  const fs::path out = prepare_out(cfg);
  RunLog log(out, verbose);
  o.cache_dir = out / "cache";
  log("benchmark: " + std::to_string(datasets.size()) + " dataset(s), " + std::to_string(o.methods.size()) + " methods, " +
      std::to_string(seeds.size()) + " seed(s)");
  const auto res = run_benchmark(datasets, seeds, o);
  for (const auto& f : res.failures) log("cell failed: " + f);
  write_file(out / "report.csv", res.report.to_csv());
  write_file(out / "ranks.csv", res.ranks.to_csv());
  std::string failures;
  for (const auto& f : res.failures) failures += f + "\n";
  write_file(out / "failures.txt", failures);
  json sel = json::object();
  for (const auto& [unit, by_method] : res.selections)
    for (const auto& [m, list] : by_method) sel[unit][m] = list;
  write_file(out / "selections.json", sel.dump(2) + "\n");
  write_file(out / "summary.json", json{{"notes", res.report.notes},
                                        {"n_datasets", res.ranks.n_datasets},
                                        {"methods", res.ranks.methods},
                                        {"failures", res.failures.size()},
                                        {"timings", timings_json(res.report)}}
                                           .dump(2) + "\n");
  log("done: " + std::to_string(res.report.records.size()) + " metric rows, " + std::to_string(res.failures.size()) + " failed cell(s)");
  std::cout << res.ranks.to_csv();
  return res.report.records.empty() ? kRuntime : kOk;
}

int cmd_scenario(const std::string& which, json cfg, bool verbose) {
  if (which != "a" && which != "b") throw ConfigError("scenario must be 'a' or 'b', got '" + which + "'");
  if (cfg["n_interactions"].is_null()) cfg["n_interactions"] = which == "a" ? 3 : 10;
  if (get<int>(cfg, "n_interactions") < 1) throw ConfigError("n_interactions must be >= 1");
  const auto seeds = seed_setting(cfg);
  const int jobs = jobs_setting(cfg);
  if (which == "a") {
    ScenarioAOptions o;
    o.learners = get<std::vector<std::string>>(cfg, "learners");
    o.n_interactions = get<int>(cfg, "n_interactions");
    o.min_order = get<int>(cfg, "min_order");
    o.setup = selection_setup(cfg);
    o.jobs = jobs;
    const auto experiment = get<std::string>(cfg, "experiment");
    std::vector<ScenarioGrid> grids;
    for (const auto& g : scenario_a_grids())
      if (experiment == "all" || g.name == "exp" + experiment || g.name == experiment) grids.push_back(g);
    if (grids.empty()) throw ConfigError("unknown experiment '" + experiment + "' (1, 2, 3 or all)");

    const fs::path out = prepare_out(cfg);
    RunLog log(out, verbose);
    o.cache_dir = out / "cache";
    log("scenario a: " + std::to_string(grids.size()) + " grid(s), " + std::to_string(seeds.size()) + " seed(s)");
    const auto rep = run_scenario_a(grids, seeds, o);
    write_file(out / "report.csv", rep.to_csv());
    write_file(out / "scenario_a.csv", scenario_a_csv(rep));
    write_file(out / "summary.json", json{{"rows", rep.records.size()}, {"timings", timings_json(rep)}}.dump(2) + "\n");
    log("done: " + std::to_string(rep.records.size()) + " rows");
    return kOk;
  }
  if (which == "b") {
    ScenarioBOptions o;
    o.n_samples = get<int>(cfg, "n_samples");
    o.p = get<int>(cfg, "p");
    o.p_inf = get<int>(cfg, "p_inf");
    o.n_interactions = get<int>(cfg, "n_interactions");
    o.setup = selection_setup(cfg);
    o.jobs = jobs;
    std::vector<int> depths;
    for (auto d : get<std::vector<int>>(cfg, "depths")) {
      if (d < 1) throw ConfigError("depths must be >= 1");
      depths.push_back(d);
    }
    if (o.n_samples < 10 || o.p_inf < 1 || o.p < o.p_inf) throw ConfigError("need n_samples >= 10 and 1 <= p_inf <= p");

    const fs::path out = prepare_out(cfg);
    RunLog log(out, verbose);
    o.cache_dir = out / "cache";
    log("scenario b: " + std::to_string(depths.size()) + " depth(s), " + std::to_string(seeds.size()) + " seed(s), N=" +
        std::to_string(o.n_samples));
    const auto rep = run_scenario_b(depths, seeds, o);
    write_file(out / "report.csv", rep.to_csv());
    write_file(out / "scenario_b.csv", scenario_b_csv(rep));
    write_file(out / "summary.json", json{{"rows", rep.records.size()}, {"timings", timings_json(rep)}}.dump(2) + "\n");
    log("done: " + std::to_string(rep.records.size()) + " rows");
    return kOk;
  }
  throw ConfigError("scenario must be 'a' or 'b', got '" + which + "'");
}

int cmd_stability(const json& cfg, bool verbose) {
  const auto data = get<std::string>(cfg, "data"), target = get<std::string>(cfg, "target");
  if (data.empty()) throw ConfigError("--data is required");
  if (target.empty()) throw ConfigError("--target is required");
  StabilityOptions o;
  o.budgets = get<std::vector<int>>(cfg, "budgets");
  o.reference = get<int>(cfg, "reference");
  o.methods = method_setting(cfg);
  o.top = get<std::size_t>(cfg, "top");
  o.setup = selection_setup(cfg);
  if (o.budgets.empty()) throw ConfigError("budgets must not be empty");
  for (int b : o.budgets)
    if (b < 50) throw ConfigError("every budget must be >= 50, got " + std::to_string(b));
  if (o.reference < 50) throw ConfigError("reference budget must be >= 50");
  if (o.top < 1) throw ConfigError("top must be >= 1");
  const auto seed = get<std::uint64_t>(cfg, "seed");
  const auto task = task_setting(cfg);

  const Dataset d = load_data(data, target, task);
  const fs::path out = prepare_out(cfg);
  RunLog log(out, verbose);
  log("stability: budgets vs reference " + std::to_string(o.reference));
  const StabilityTable t = run_stability(d, o, seed);
  write_file(out / "stability.csv", t.to_csv());
  std::cout << t.to_csv();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabdistill: distill feature interactions from a black-box model into a GAM"};
  app.require_subcommand(1);
  bool verbose = false;

  const json distill_defaults = to_json(DistillConfig{});
  const json gam_defaults = to_json(GamTrainConfig{});

  // distill
  Command distill_cmd;
  distill_cmd.app = app.add_subcommand("distill", "rank interactions of a teacher fitted on a CSV");
  distill_cmd.defaults = {{"data", ""}, {"target", ""}, {"task", nullptr}, {"out", "out"}, {"distill", distill_defaults}};
  distill_cmd.defaults.update(teacher_defaults());
  common_flags(distill_cmd, verbose);
  distill_cmd.flags.add<std::string>(distill_cmd.app, "--data", "/data", "CSV file with a header row");
  distill_cmd.flags.add<std::string>(distill_cmd.app, "--target", "/target", "target column name");
  distill_cmd.flags.add<std::string>(distill_cmd.app, "--task", "/task", "regression, binary or multiclass (default: inferred)");
  distill_cmd.flags.add<std::uint64_t>(distill_cmd.app, "--seed", "/distill/seed", "random seed");
  add_teacher_flags(distill_cmd.app, distill_cmd.flags);
  add_distill_flags(distill_cmd.app, distill_cmd.flags, true);

  // fit
  Command fit_cmd;
  fit_cmd.app = app.add_subcommand("fit", "fit a GAM with a given interaction list and report test metrics");
  fit_cmd.defaults = {{"data", ""},   {"target", ""},          {"task", nullptr}, {"ranking", ""},
                      {"interactions", ""}, {"n_int", 0},       {"train_fraction", 0.8},
                      {"seed", 0},    {"out", "out"},          {"gam", gam_defaults}};
  common_flags(fit_cmd, verbose);
  fit_cmd.flags.add<std::string>(fit_cmd.app, "--data", "/data", "CSV file with a header row");
  fit_cmd.flags.add<std::string>(fit_cmd.app, "--target", "/target", "target column name");
  fit_cmd.flags.add<std::string>(fit_cmd.app, "--task", "/task", "regression, binary or multiclass (default: inferred)");
  fit_cmd.flags.add<std::string>(fit_cmd.app, "--ranking", "/ranking", "ranking.json written by distill");
  fit_cmd.flags.add<std::string>(fit_cmd.app, "--interactions", "/interactions", "explicit list, e.g. \"0,1;2,3,4\"");
  fit_cmd.flags.add<int>(fit_cmd.app, "--n-int", "/n_int", "use only the first N interactions (0 = all)");
  fit_cmd.flags.add<double>(fit_cmd.app, "--train-fraction", "/train_fraction", "share of rows used for training");
  fit_cmd.flags.add<std::uint64_t>(fit_cmd.app, "--seed", "/seed", "split and bagging seed");
  fit_cmd.flags.add<int>(fit_cmd.app, "--outer-bags", "/gam/outer_bags", "GAM outer bags");
  fit_cmd.flags.add<int>(fit_cmd.app, "--max-bins", "/gam/max_bins", "GAM bins per feature");

  auto selection_defaults = [&](json j) {
    j.update(teacher_defaults());
    j["distill"] = distill_defaults;
    j["gam"] = gam_defaults;
    j["fast_bins"] = 8;
    j["jobs"] = 0;
    j["out"] = "out";
    return j;
  };
  auto selection_flags = [&](Command& c) {
    add_teacher_flags(c.app, c.flags);
    add_distill_flags(c.app, c.flags, false);
    c.flags.add<int>(c.app, "--outer-bags", "/gam/outer_bags", "GAM outer bags");
    c.flags.add<int>(c.app, "--max-rounds", "/gam/max_rounds", "GAM boosting rounds per bag");
    c.flags.add<int>(c.app, "-j,--jobs", "/jobs", "worker threads (0 = TABDISTILL_JOBS or all cores)");
  };
  auto int_list = [](const std::string& s) { return json(parse_int_list(s)); };
  auto str_list = [](const std::string& s) { return json(split_list(s)); };

  // bench
  Command bench_cmd;
  bench_cmd.app = app.add_subcommand("bench", "rank interaction selectors by downstream GAM quality");
  bench_cmd.defaults = selection_defaults({{"datasets", json::array()},
                                           {"target", ""},
                                           {"methods", default_methods()},
                                           {"max_interactions", 8},
                                           {"seeds", {0}},
                                           {"train_fraction", 0.8}});
  common_flags(bench_cmd, verbose);
  bench_cmd.flags.add<std::vector<std::string>>(bench_cmd.app, "--data", "/datasets",
                                                 "CSV files (target: --target, else the last column)");
  bench_cmd.flags.add<std::string>(bench_cmd.app, "--target", "/target", "target column shared by all files");
  bench_cmd.flags.add_parsed(bench_cmd.app, "--methods", "/methods", "comma list of methods", str_list);
  bench_cmd.flags.add<int>(bench_cmd.app, "--max-int", "/max_interactions", "sweep N_int from 1 to this");
  bench_cmd.flags.add_parsed(bench_cmd.app, "--seeds", "/seeds", "seeds, e.g. 0..4", int_list);
  selection_flags(bench_cmd);

  // scenario
  Command scen_cmd;
  std::string which;
  scen_cmd.app = app.add_subcommand("scenario", "synthetic studies: a (Fourier-sparse) or b (tree teachers)");
  scen_cmd.app->add_option("which", which, "a or b")->required();
  scen_cmd.defaults = selection_defaults({{"seeds", parse_int_list("0..19")},
                                          {"experiment", "all"},
                                          {"learners", {"ridge", "forest", "knn", "gbt", "tabdistill_gam"}},
                                          {"n_interactions", nullptr},
                                          {"min_order", 1},
                                          {"depths", parse_int_list("1..10")},
                                          {"n_samples", 10000},
                                          {"p", 15},
                                          {"p_inf", 10}});
  common_flags(scen_cmd, verbose);
  bool fast = false;
  scen_cmd.app->add_flag("--fast", fast, "scenario b at N=2000 with a lighter explanation budget");
  scen_cmd.flags.add<std::string>(scen_cmd.app, "--experiment", "/experiment", "scenario a grid: 1, 2, 3 or all");
  scen_cmd.flags.add_parsed(scen_cmd.app, "--seeds", "/seeds", "seeds, e.g. 0..19", int_list);
  scen_cmd.flags.add_parsed(scen_cmd.app, "--learners", "/learners", "scenario a learners", str_list);
  scen_cmd.flags.add_parsed(scen_cmd.app, "--depths", "/depths", "scenario b tree depths, e.g. 1..10", int_list);
  scen_cmd.flags.add<int>(scen_cmd.app, "--n-samples", "/n_samples", "scenario b sample count");
  scen_cmd.flags.add<int>(scen_cmd.app, "--n-int", "/n_interactions", "interactions granted to the GAM (default: 3 for a, 10 for b)");
  scen_cmd.flags.add<int>(scen_cmd.app, "--min-order", "/min_order", "scenario a smallest generating subset size");
  selection_flags(scen_cmd);

  // stability
  Command stab_cmd;
  stab_cmd.app = app.add_subcommand("stability", "overlap of selected interactions across query budgets");
  stab_cmd.defaults = selection_defaults({{"data", ""},
                                          {"target", ""},
                                          {"task", nullptr},
                                          {"budgets", {100, 200, 300, 400, 500}},
                                          {"reference", 500},
                                          {"methods", default_methods()},
                                          {"top", 8},
                                          {"seed", 0}});
  common_flags(stab_cmd, verbose);
  stab_cmd.flags.add<std::string>(stab_cmd.app, "--data", "/data", "CSV file with a header row");
  stab_cmd.flags.add<std::string>(stab_cmd.app, "--target", "/target", "target column name");
  stab_cmd.flags.add<std::string>(stab_cmd.app, "--task", "/task", "regression, binary or multiclass (default: inferred)");
  stab_cmd.flags.add_parsed(stab_cmd.app, "--budgets", "/budgets", "budgets, e.g. 100,200,300,400,500", int_list);
  stab_cmd.flags.add<int>(stab_cmd.app, "--reference", "/reference", "reference budget");
  stab_cmd.flags.add_parsed(stab_cmd.app, "--methods", "/methods", "comma list of methods", str_list);
  stab_cmd.flags.add<std::uint64_t>(stab_cmd.app, "--seed", "/seed", "random seed");
  selection_flags(stab_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  CLI::App* active = nullptr;
  try {
    if (distill_cmd.app->parsed()) {
      active = distill_cmd.app;
      return cmd_distill(distill_cmd.resolve(), verbose);
    }
    if (fit_cmd.app->parsed()) {
      active = fit_cmd.app;
      return cmd_fit(fit_cmd.resolve(), verbose);
    }
    if (bench_cmd.app->parsed()) {
      active = bench_cmd.app;
      return cmd_bench(bench_cmd.resolve(), verbose);
    }
    if (scen_cmd.app->parsed()) {
      active = scen_cmd.app;
      json cfg = scen_cmd.resolve();
      if (fast) {
        cfg["n_samples"] = 2000;
        cfg["distill"]["n_explain"] = 30;
        cfg["distill"]["background_size"] = 16;
        scen_cmd.flags(cfg);  // explicit flags still win over the preset
      }
      return cmd_scenario(which, cfg, verbose);
    }
    if (stab_cmd.app->parsed()) {
      active = stab_cmd.app;
      return cmd_stability(stab_cmd.resolve(), verbose);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    if (active) std::cerr << "\n" << active->help();
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const TeacherError& e) {
    std::cerr << "teacher error: " << e.what() << "\n";
    return kTeacher;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kConfig;
}
