#include "tabdistill/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace tabdistill {

std::string to_string(Task t) {
  switch (t) {
    case Task::regression: return "regression";
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
  }
  return "regression";
}

Task task_from_string(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "binary") return Task::binary;
  if (s == "multiclass") return Task::multiclass;
  throw Error("unknown task kind: " + s);
}

Dataset Dataset::select(const std::vector<Eigen::Index>& idx) const {
  Dataset out = *this;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
  out.target.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
    out.target(static_cast<Eigen::Index>(i)) = target(idx[i]);
  }
  return out;
}

Dataset Dataset::with_target(Vector y) const {
  Dataset out = *this;
  out.target = std::move(y);
  return out;
}

Dataset make_dataset(Matrix x, Vector y, Task task, int n_classes) {
  if (x.rows() != y.size()) throw Error("feature/target row count mismatch");
  Dataset d;
  d.features = std::move(x);
  d.target = std::move(y);
  d.task = task;
  d.n_classes = is_classification(task) ? (n_classes > 0 ? n_classes : static_cast<int>(d.target.maxCoeff()) + 1) : 0;
  for (Eigen::Index j = 0; j < d.features.cols(); ++j) d.columns.push_back({"x" + std::to_string(j), ColumnKind::numeric, {}});
  for (int c = 0; c < d.n_classes; ++c) d.class_labels.push_back(std::to_string(c));
  return d;
}

int BinningSpec::bin(int feature, double value) const {
  const auto& c = cuts[static_cast<std::size_t>(feature)];
  return static_cast<int>(std::upper_bound(c.begin(), c.end(), value) - c.begin());
}

// ---------------------------------------------------------------- csv

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF) i = 3;  // BOM
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(row);
    row.clear();
  };
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& raw) {
  std::string s = trim(raw);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s.empty() || s == "na" || s == "nan";
}

std::optional<double> parse_number(const std::string& raw) {
  std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Codes by descending frequency, ties by first appearance.
std::vector<std::string> frequency_order(const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, std::pair<int, std::size_t>> stats;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_missing(tokens[i])) continue;
    std::string t = trim(tokens[i]);
    auto [it, inserted] = stats.try_emplace(t, 0, i);
    if (inserted) order.push_back(t);
    ++it->second.first;
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
    return stats[a].first > stats[b].first;
  });
  return order;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& target_column, std::optional<Task> task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto rows = parse_csv(buf.str());
  if (rows.empty()) throw Error("empty file: " + path);
  const auto header = rows.front();
  rows.erase(rows.begin());
  if (rows.empty()) throw Error("no data rows in file: " + path);
  std::vector<std::string> names;
  for (const auto& h : header) names.push_back(trim(h));
  auto target_it = std::find(names.begin(), names.end(), target_column);
  if (target_it == names.end()) throw Error("missing target column: " + target_column);
  const std::size_t target_idx = static_cast<std::size_t>(target_it - names.begin());

  const std::size_t n = rows.size();
  auto cell = [&](std::size_t r, std::size_t c) -> const std::string& {
    static const std::string empty;
    return c < rows[r].size() ? rows[r][c] : empty;
  };

  Dataset d;
  d.target_name = target_column;
  std::vector<Vector> cols;
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c == target_idx) continue;
    std::vector<std::string> tokens(n);
    bool numeric = true, any = false;
    for (std::size_t r = 0; r < n; ++r) {
      tokens[r] = cell(r, c);
      if (is_missing(tokens[r])) continue;
      any = true;
      if (!parse_number(tokens[r])) numeric = false;
    }
    if (!any) throw Error("all values missing in column: " + names[c]);
    Column meta{names[c], numeric ? ColumnKind::numeric : ColumnKind::categorical, {}};
    Vector v(static_cast<Eigen::Index>(n));
    if (numeric) {
      std::vector<double> present;
      for (const auto& t : tokens)
        if (!is_missing(t)) present.push_back(*parse_number(t));
      const double fill = median(present);
      for (std::size_t r = 0; r < n; ++r) v(static_cast<Eigen::Index>(r)) = is_missing(tokens[r]) ? fill : *parse_number(tokens[r]);
    } else {
      meta.categories = frequency_order(tokens);
      std::unordered_map<std::string, int> code;
      for (std::size_t k = 0; k < meta.categories.size(); ++k) code[meta.categories[k]] = static_cast<int>(k);
      for (std::size_t r = 0; r < n; ++r)
        v(static_cast<Eigen::Index>(r)) = is_missing(tokens[r]) ? 0.0 : code[trim(tokens[r])];  // mode = code 0
    }
    d.columns.push_back(std::move(meta));
    cols.push_back(std::move(v));
  }
  if (cols.empty()) throw Error("no feature columns in file: " + path);
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) d.features.col(static_cast<Eigen::Index>(c)) = cols[c];

  // target
  std::vector<std::string> ttok;
  bool numeric = true, integer_like = true, any = false;
  for (std::size_t r = 0; r < n; ++r) {
    ttok.push_back(trim(cell(r, target_idx)));
    if (is_missing(ttok.back())) continue;
    any = true;
    auto v = parse_number(ttok.back());
    if (!v) numeric = integer_like = false;
    else if (std::floor(*v) != *v) integer_like = false;
  }
  if (!any) throw Error("all values missing in column: " + target_column);
  std::set<std::string> distinct_tokens;
  std::set<double> distinct_values;
  for (const auto& t : ttok) {
    if (is_missing(t)) continue;
    distinct_tokens.insert(t);
    if (numeric) distinct_values.insert(*parse_number(t));
  }
  Task inferred = Task::regression;
  const std::size_t n_distinct = numeric ? distinct_values.size() : distinct_tokens.size();
  if (!numeric || (integer_like && n_distinct <= 20)) inferred = n_distinct <= 2 ? Task::binary : Task::multiclass;
  d.task = task.value_or(inferred);
  d.target.resize(static_cast<Eigen::Index>(n));
  if (d.task == Task::regression) {
    if (!numeric) throw Error("non-numeric target for regression: " + target_column);
    std::vector<double> present;
    for (const auto& t : ttok)
      if (!is_missing(t)) present.push_back(*parse_number(t));
    const double fill = median(present);
    for (std::size_t r = 0; r < n; ++r) d.target(static_cast<Eigen::Index>(r)) = is_missing(ttok[r]) ? fill : *parse_number(ttok[r]);
  } else {
    // numeric labels keep their natural order, string labels are frequency ordered
    std::vector<std::string> labels;
    std::unordered_map<std::string, int> code;
    if (numeric) {
      std::vector<double> ordered(distinct_values.begin(), distinct_values.end());
      for (double v : ordered) {
        std::ostringstream os;
        os << v;
        labels.push_back(os.str());
      }
      for (const auto& t : distinct_tokens)
        code[t] = static_cast<int>(std::lower_bound(ordered.begin(), ordered.end(), *parse_number(t)) - ordered.begin());
    } else {
      labels = frequency_order(ttok);
      for (std::size_t k = 0; k < labels.size(); ++k) code[labels[k]] = static_cast<int>(k);
    }
    auto mode = frequency_order(ttok).front();
    for (std::size_t r = 0; r < n; ++r) d.target(static_cast<Eigen::Index>(r)) = code[is_missing(ttok[r]) ? mode : ttok[r]];
    d.class_labels = labels;
    d.n_classes = static_cast<int>(labels.size());
    if (d.task == Task::binary && d.n_classes > 2) throw Error("binary task requested but target has " + std::to_string(d.n_classes) + " classes: " + target_column);
  }
  return d;
}

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  out.precision(17);
  for (const auto& c : d.columns) out << c.name << ",";
  out << d.target_name << "\n";
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const auto& col = d.columns[static_cast<std::size_t>(j)];
      if (col.kind == ColumnKind::categorical) out << col.categories[static_cast<std::size_t>(d.features(i, j))];
      else out << d.features(i, j);
      out << ",";
    }
    if (is_classification(d.task) && !d.class_labels.empty()) out << d.class_labels[static_cast<std::size_t>(d.target(i))];
    else out << d.target(i);
    out << "\n";
  }
}

// ---------------------------------------------------------------- split

std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train fraction outside (0,1): " + std::to_string(train_fraction));
  if (d.rows() < 2) throw Error("cannot split a dataset with fewer than 2 rows");
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> train, test;
  auto take = [&](std::vector<Eigen::Index> group) {
    std::shuffle(group.begin(), group.end(), rng);
    auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(group.size())));
    train.insert(train.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(k));
    test.insert(test.end(), group.begin() + static_cast<std::ptrdiff_t>(k), group.end());
  };
  std::vector<Eigen::Index> all(static_cast<std::size_t>(d.rows()));
  std::iota(all.begin(), all.end(), 0);
  bool stratified = false;
  if (is_classification(d.task)) {
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (auto i : all) by_class[static_cast<int>(d.target(i))].push_back(i);
    stratified = std::all_of(by_class.begin(), by_class.end(), [](const auto& kv) { return kv.second.size() >= 2; });
    if (stratified)
      for (auto& [c, rows] : by_class) take(rows);
  }
  if (!stratified) take(all);
  if (train.empty() || test.empty()) {
    // tiny inputs: force at least one row on each side
    train.clear();
    test.clear();
    std::shuffle(all.begin(), all.end(), rng);
    auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(all.size()))), 1, all.size() - 1);
    train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    test.assign(all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {d.select(train), d.select(test)};
}

// ---------------------------------------------------------------- bins

std::vector<double> quantile_cuts(std::vector<double> values, int max_bins) {
  if (max_bins < 2) throw Error("max_bins must be >= 2, got " + std::to_string(max_bins));
  std::sort(values.begin(), values.end());
  std::vector<double> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<double> cuts;
  if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
    for (std::size_t i = 1; i < distinct.size(); ++i) cuts.push_back(0.5 * (distinct[i - 1] + distinct[i]));
    return cuts;
  }
  const std::size_t n = values.size();
  for (int q = 1; q < max_bins; ++q) {
    auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(q) * static_cast<double>(n) / max_bins));
    pos = std::clamp<std::size_t>(pos, 1, n - 1);
    double lo = values[pos - 1], hi = values[pos];
    if (lo == hi) {
      // boundary inside a run of ties: cut just above the run
      auto it = std::upper_bound(distinct.begin(), distinct.end(), hi);
      if (it == distinct.end()) continue;
      lo = hi;
      hi = *it;
    }
    double c = 0.5 * (lo + hi);
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

BinningSpec build_bins(const Dataset& d, int max_bins) {
  if (max_bins < 2) throw Error("max_bins must be >= 2, got " + std::to_string(max_bins));
  BinningSpec spec;
  spec.max_bins = max_bins;
  for (Eigen::Index j = 0; j < d.cols(); ++j) {
    std::vector<double> v(d.features.col(j).data(), d.features.col(j).data() + d.rows());
    spec.cuts.push_back(quantile_cuts(std::move(v), max_bins));
  }
  return spec;
}

BaselineVector baseline_vector(const Dataset& train) {
  if (train.rows() < 1) throw Error("baseline of an empty dataset");
  BaselineVector b(train.cols());
  for (Eigen::Index j = 0; j < train.cols(); ++j) {
    const bool categorical = static_cast<std::size_t>(j) < train.columns.size() &&
                             train.columns[static_cast<std::size_t>(j)].kind == ColumnKind::categorical;
    if (!categorical) {
      b(j) = train.features.col(j).mean();
      continue;
    }
    std::map<int, int> counts;
    for (Eigen::Index i = 0; i < train.rows(); ++i) ++counts[static_cast<int>(train.features(i, j))];
    int best = counts.begin()->first, best_count = -1;
    for (auto [code, c] : counts)
      if (c > best_count) best = code, best_count = c;
    b(j) = best;
  }
  return b;
}

}  // namespace tabdistill
