#include "biasgrid/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biasgrid/error.hpp"

namespace biasgrid {
using nlohmann::json;

namespace {

constexpr Axis kAxes[] = {Axis::gender, Axis::religion, Axis::disability};

std::string fixed(double v, int decimals) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // "-0.00" reads as a sign where there is none.
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string full_precision(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return json(v).dump();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string md_field(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    if (c == '\n') {
      out += "<br>";
      continue;
    }
    out += c;
  }
  return out;
}

std::string cell_text(const Cell& c, bool markdown, int decimals) {
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return "";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, long long>) {
          return std::to_string(v);
        } else {
          return markdown ? fixed(v, decimals) : full_precision(v);
        }
      },
      c);
}

json cell_json(const Cell& c) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return nullptr;
        } else if constexpr (std::is_same_v<T, double>) {
          // JSON has no non-finite numbers.
          if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
          return v;
        } else {
          return v;
        }
      },
      c);
}

Cell cell_from_json(const json& j) {
  if (j.is_null()) return std::monostate{};
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    return s;
  }
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_boolean()) return static_cast<long long>(j.get<bool>());
  throw DomainError("json-lines table: unsupported cell " + j.dump());
}

Cell maybe(double v) { return std::isnan(v) ? Cell{} : Cell{v}; }

std::string group_label(const PromptSpec& spec, const std::vector<Axis>& axes) {
  std::string out;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) out += " / ";
    out += display_label(spec.value(axes[i]));
  }
  return out;
}

double sd(const std::vector<double>& xs) { return xs.size() < 2 ? 0.0 : std::sqrt(sample_variance(xs)); }

}  // namespace

double order_free_mean(std::vector<double> values) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string_view to_string(Format f) {
  switch (f) {
    case Format::csv:
      return "csv";
    case Format::md:
      return "md";
    case Format::json_lines:
      return "json-lines";
  }
  return "?";
}

Format parse_format(std::string_view text) {
  if (text == "csv") return Format::csv;
  if (text == "md" || text == "markdown") return Format::md;
  if (text == "json-lines" || text == "jsonl" || text == "structured") return Format::json_lines;
  throw ConfigError("unknown format '" + std::string(text) + "'");
}

std::string emit(const Table& table, Format format) {
  std::string out;
  switch (format) {
    case Format::csv: {
      for (std::size_t i = 0; i < table.columns.size(); ++i) {
        if (i) out += ',';
        out += csv_field(table.columns[i].name);
      }
      out += '\n';
      for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
          if (i) out += ',';
          out += csv_field(cell_text(row[i], false, 0));
        }
        out += '\n';
      }
      break;
    }
    case Format::md: {
      if (!table.title.empty()) out += "**" + md_field(table.title) + "**\n\n";
      out += '|';
      for (const auto& c : table.columns) out += ' ' + md_field(c.name) + " |";
      out += "\n|";
      for (std::size_t i = 0; i < table.columns.size(); ++i) out += " --- |";
      out += '\n';
      for (const auto& row : table.rows) {
        out += '|';
        for (std::size_t i = 0; i < row.size(); ++i) {
          const int decimals = i < table.columns.size() ? table.columns[i].decimals : 2;
          out += ' ' + md_field(cell_text(row[i], true, decimals)) + " |";
        }
        out += '\n';
      }
      break;
    }
    case Format::json_lines: {
      json cols = json::array();
      for (const auto& c : table.columns) cols.push_back({{"name", c.name}, {"decimals", c.decimals}});
      out += json{{"table", table.title}, {"columns", cols}}.dump() + '\n';
      for (const auto& row : table.rows) {
        json arr = json::array();
        for (const auto& c : row) arr.push_back(cell_json(c));
        out += arr.dump() + '\n';
      }
      break;
    }
  }
  return out;
}

Table parse_json_lines(std::string_view text) {
  Table t;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DomainError(std::string("json-lines table: ") + e.what());
    }
    if (header) {
      t.title = j.value("table", std::string());
      for (const auto& c : j.at("columns")) t.columns.push_back({c.at("name").get<std::string>(), c.value("decimals", 2)});
      header = false;
      continue;
    }
    std::vector<Cell> row;
    for (const auto& c : j) row.push_back(cell_from_json(c));
    t.rows.push_back(std::move(row));
  }
  if (header) throw DomainError("json-lines table: missing header line");
  return t;
}

// ---------------------------------------------------------------------------

Table aggregate_means(const RunData& run, const std::vector<Axis>& group_by, Transform transform, Scope scope) {
  const auto categories = run_categories(run);
  const auto obs = observations(run, transform, scope);
  std::vector<std::string> models;
  for (const auto& b : run.info.backends) models.push_back(b.model_id);

  // Groups in category order: the grid restricted to the grouped axes.
  std::vector<std::string> labels;
  std::map<std::string, std::size_t> group_index;
  for (const auto& spec : enumerate_grid(categories)) {
    const auto label = group_by.empty() ? std::string("All prompts") : group_label(spec, group_by);
    if (group_index.emplace(label, labels.size()).second) labels.push_back(label);
  }
  std::map<std::string, std::size_t> model_index;
  for (std::size_t m = 0; m < models.size(); ++m) model_index[models[m]] = m;

  std::vector<std::vector<std::vector<double>>> values(labels.size(), std::vector<std::vector<double>>(models.size()));
  for (const auto& o : obs) {
    const auto label = group_by.empty() ? std::string("All prompts") : group_label(o.record->prompt.spec, group_by);
    auto g = group_index.find(label);
    auto m = model_index.find(o.record->model_id);
    if (g == group_index.end() || m == model_index.end()) continue;
    values[g->second][m->second].push_back(o.score);
  }

  struct Row {
    std::string label;
    std::vector<double> means;
    double ave;
  };
  std::vector<Row> rows;
  for (std::size_t g = 0; g < labels.size(); ++g) {
    Row r{labels[g], {}, 0.0};
    std::vector<double> present;
    for (std::size_t m = 0; m < models.size(); ++m) {
      r.means.push_back(order_free_mean(values[g][m]));
      if (!std::isnan(r.means.back())) present.push_back(r.means.back());
    }
    if (present.empty()) continue;
    r.ave = order_free_mean(present);
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.ave != b.ave) return a.ave > b.ave;
    return a.label < b.label;
  });

  Table t;
  std::string axis_names;
  for (std::size_t i = 0; i < group_by.size(); ++i) axis_names += (i ? " / " : "") + std::string(to_string(group_by[i]));
  t.title = group_by.empty() ? "Mean score per model" : "Mean score by " + axis_names;
  t.columns.push_back({group_by.empty() ? std::string("prompts") : axis_names});
  for (const auto& m : models) t.columns.push_back({m});
  t.columns.push_back({"Ave"});
  for (const auto& r : rows) {
    std::vector<Cell> cells{r.label};
    for (double v : r.means) cells.push_back(maybe(v));
    cells.push_back(r.ave);
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Rankings rank_combinations(const RunData& run, std::size_t n, std::optional<int> arity, Transform transform,
                           Scope scope) {
  Rankings out;
  std::map<std::string, std::size_t> model_index;
  for (const auto& b : run.info.backends) {
    model_index[b.model_id] = out.models.size();
    out.models.push_back(b.model_id);
  }
  std::map<std::string, std::pair<PromptSpec, std::vector<std::vector<double>>>> by_prompt;
  for (const auto& o : observations(run, transform, scope)) {
    const auto& spec = o.record->prompt.spec;
    if (arity && spec.arity() != *arity) continue;
    auto& entry = by_prompt[o.record->prompt.surface];
    if (entry.second.empty()) {
      entry.first = spec;
      entry.second.resize(out.models.size());
    }
    auto m = model_index.find(o.record->model_id);
    if (m != model_index.end()) entry.second[m->second].push_back(o.score);
  }
  if (n > by_prompt.size()) {
    throw DomainError("rank_combinations: n=" + std::to_string(n) + " exceeds the " + std::to_string(by_prompt.size()) +
                      " prompts available");
  }
  std::vector<RankedPrompt> ranked;
  for (auto& [surface, entry] : by_prompt) {
    RankedPrompt r{surface, entry.first, {}, 0.0};
    std::vector<double> present;
    for (auto& v : entry.second) {
      r.per_model.push_back(order_free_mean(v));
      if (!std::isnan(r.per_model.back())) present.push_back(r.per_model.back());
    }
    r.mean = order_free_mean(present);
    ranked.push_back(std::move(r));
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedPrompt& a, const RankedPrompt& b) {
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.surface < b.surface;
  });
  out.top.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n));
  out.bottom.assign(ranked.rbegin(), ranked.rbegin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

Table ranks_table(const Rankings& rankings) {
  Table t;
  t.title = "Highest and lowest scoring prompts";
  t.columns = {{"list"}, {"rank"}, {"prompt"}};
  for (const auto& m : rankings.models) t.columns.push_back({m});
  t.columns.push_back({"mean"});
  auto add = [&](const char* list, const std::vector<RankedPrompt>& items) {
    long long rank = 0;
    for (const auto& r : items) {
      std::vector<Cell> row{std::string(list), ++rank, r.surface};
      for (double v : r.per_model) row.push_back(maybe(v));
      row.push_back(r.mean);
      t.rows.push_back(std::move(row));
    }
  };
  add("top", rankings.top);
  add("bottom", rankings.bottom);
  return t;
}

Table scan_table(const ScanReport& report) {
  Table t;
  t.title = "Intersectional comparisons";
  t.columns = {{"kind"},
               {"prompt"},
               {"mean"},
               {"singles_mean"},
               {"change"},
               {"lower_than_singles"},
               {"higher_than_singles"},
               {"lower_than_singles_and_pairs"},
               {"higher_than_singles_and_pairs"}};
  auto add = [&](const char* kind, const std::vector<ScanEntry>& entries) {
    for (const auto& e : entries) {
      t.rows.push_back({std::string(kind), e.surface, e.mean, e.singles_mean, e.mean - e.singles_mean,
                        static_cast<long long>(e.lower_than_all_singles),
                        static_cast<long long>(e.higher_than_all_singles),
                        static_cast<long long>(e.lower_than_all_singles_and_pairs),
                        static_cast<long long>(e.higher_than_all_singles_and_pairs)});
    }
  };
  add("triple", report.triples);
  add("pair", report.pairs);
  return t;
}

Table intersectional_table(const ScanReport& report, const CellScores& cells) {
  struct Row {
    const ScanEntry* e;
    double single[3];
    double change;
  };
  std::vector<Row> rows;
  auto collect = [&](const std::vector<ScanEntry>& entries) {
    for (const auto& e : entries) {
      if (!e.lower_than_all_singles) continue;
      Row r{&e, {std::nan(""), std::nan(""), std::nan("")}, e.mean - e.singles_mean};
      for (const auto& sub : subsets_of(e.spec)) {
        if (sub.arity() != 1) continue;
        auto it = cells.find(sub.key());
        if (it == cells.end()) continue;
        for (int a = 0; a < 3; ++a) {
          if (sub.value(kAxes[a]).is_marker()) r.single[a] = mean(it->second);
        }
      }
      rows.push_back(r);
    }
  };
  collect(report.triples);
  collect(report.pairs);
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.change != b.change) return a.change < b.change;
    return a.e->surface < b.e->surface;
  });
  Table t;
  t.title = "Intersectional prompts below all their single categories";
  t.columns = {{"prompt"}, {"intersectional"}, {"gender"}, {"disability"}, {"religion"}, {"1 category mean"}, {"change"}};
  for (const auto& r : rows) {
    t.rows.push_back({r.e->surface, r.e->mean, maybe(r.single[0]), maybe(r.single[2]), maybe(r.single[1]),
                      r.e->singles_mean, r.change});
  }
  return t;
}

Table regression_table(const RegressionResult& result) {
  Table t;
  t.title = "Regression results";
  t.columns = {{"term"}, {"coef", 3}, {"std_error", 3}, {"t", 1}, {"p", 3}};
  for (const auto& c : result.coefficients) t.rows.push_back({c.name, c.coef, c.std_error, c.t, c.p});
  t.rows.push_back({std::string("r_squared"), result.r_squared, Cell{}, Cell{}, Cell{}});
  t.rows.push_back({std::string("n"), static_cast<long long>(result.n), Cell{}, Cell{}, Cell{}});
  return t;
}

Table null_delta_table(const std::vector<NullDeltaResult>& results) {
  Table t;
  t.title = "Value minus null-marker deltas between model groups";
  t.columns = {{"axis"},         {"value"},        {"grouping"}, {"group_a"}, {"group_b"},   {"n_a"},
               {"n_b"},          {"mean_delta_a"}, {"mean_delta_b"}, {"t"}, {"dof", 1}, {"p", 3}};
  for (const auto& r : results) {
    t.rows.push_back({std::string(to_string(r.axis)), r.value, std::string(to_string(r.grouping)), r.group_a, r.group_b,
                      static_cast<long long>(r.n_a), static_cast<long long>(r.n_b), r.test.mean_a, r.test.mean_b,
                      r.test.statistic, r.test.dof, r.test.p_value});
  }
  return t;
}

Table tests_table(const std::vector<NamedTest>& tests) {
  Table t;
  t.title = "Statistical tests";
  t.columns = {{"test"}, {"statistic", 3}, {"dof", 1}, {"dof2", 1}, {"p", 3}};
  for (const auto& n : tests) {
    t.rows.push_back({n.name, n.test.statistic, n.test.dof, n.test.dof2, n.test.p_value});
  }
  return t;
}

Table prefix_table(const PrefixReport& report) {
  Table t;
  t.title = "Prefix counterfactual (baseline " + report.baseline_run_id + ")";
  t.columns = {{"prefix"}, {"axis"}, {"value"}, {"mean"}, {"shift"}, {"rank_reversals"}};
  for (const auto& p : report.prefixes) {
    const std::string prefix = "\"" + p.prefix + "\"";
    t.rows.push_back({prefix, std::string("all"), std::string("all"), p.overall_mean, p.overall_shift, Cell{}});
    for (std::size_t i = 0; i < p.means.size(); ++i) {
      const auto& m = p.means[i];
      const bool first_of_axis = i == 0 || p.means[i - 1].axis != m.axis;
      Cell reversals = first_of_axis ? Cell{static_cast<long long>(p.rank_reversals.at(m.axis))} : Cell{};
      t.rows.push_back({prefix, std::string(to_string(m.axis)), m.label.empty() ? std::string("[None]") : m.label,
                        m.mean, p.shifts[i], reversals});
    }
  }
  return t;
}

Table swap_table(const std::vector<SwapResult>& results) {
  Table t;
  t.title = "Identity-first against person-first phrasing";
  t.columns = {{"identity_first"}, {"person_first"}, {"mean_identity_first"}, {"mean_person_first"}, {"t"},
               {"dof", 1},         {"p", 4},         {"direction"},           {"significant"}};
  for (const auto& r : results) {
    t.rows.push_back({r.pair.identity_first, r.pair.person_first, r.test.mean_a, r.test.mean_b, r.test.statistic,
                      r.test.dof, r.test.p_value, r.direction, static_cast<long long>(r.significant)});
  }
  return t;
}

Table calibration_table(const CalibrationReport& report) {
  Table t;
  t.title = "Few-shot calibration on " + report.model_id;
  t.columns = {{"condition"}, {"prompt"}, {"mean"}};
  t.rows.push_back({std::string("neutral"), report.neutral, report.neutral_mean});
  t.rows.push_back({std::string("target"), report.target, report.target_mean});
  t.rows.push_back({std::string("calibrated"), report.calibrated_prompt, report.calibrated_mean});
  t.rows.push_back({std::string("calibrated_vs_target_t"), Cell{}, report.calibrated_vs_target.statistic});
  t.rows.push_back({std::string("calibrated_vs_target_p"), Cell{}, report.calibrated_vs_target.p_value});
  return t;
}

Table topics_table(const std::vector<std::vector<std::string>>& words) {
  Table t;
  t.title = "Most probable words per topic";
  t.columns = {{"topic"}, {"words"}};
  long long k = 0;
  for (const auto& w : words) {
    std::string joined;
    for (std::size_t i = 0; i < w.size(); ++i) joined += (i ? " " : "") + w[i];
    t.rows.push_back({k++, joined});
  }
  return t;
}

std::vector<NullDeltaResult> null_delta_all_axes(const RunData& run, ModelGrouping grouping, Transform transform,
                                                 Scope scope) {
  const auto categories = run_categories(run);
  const auto grid = enumerate_grid(categories);
  const auto models = model_cells(run, transform, scope);
  std::vector<NullDeltaResult> out;
  for (Axis axis : kAxes) {
    std::vector<std::string> values;
    for (const auto& v : categories.values(axis)) {
      if (v.is_marker()) values.push_back(v.label);
    }
    if (values.empty()) continue;
    auto part = null_delta_comparison(models, grid, axis, values, grouping);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::string summary(const RunData& run, Transform transform, Scope scope, ScanOptions scan) {
  std::ostringstream md;
  const auto categories = run_categories(run);
  const auto grid = enumerate_grid(categories);
  const auto cells = pooled_cells(run, transform, scope);

  md << "# Bias audit summary: " << run.info.run_id << "\n\n";
  md << "Scores: " << to_string(transform) << " / " << to_string(scope) << ". Records: " << run.manifest.counts.records
     << ", prompts: " << run.manifest.counts.prompts << ", failures: " << run.manifest.failures.size() << ".\n\n";
  md << emit(aggregate_means(run, {}, transform, scope), Format::md) << "\n";

  md << "## H1: individual bias\n\n";
  for (Axis axis : kAxes) md << emit(aggregate_means(run, {axis}, transform, scope), Format::md) << "\n";
  try {
    md << emit(tests_table(axis_anova(run, transform, scope)), Format::md) << "\n";
  } catch (const Error& e) {
    md << "ANOVA not available: " << e.what() << "\n\n";
  }
  // Each single-marker prompt against the all-null prompt.
  const PromptSpec base{{std::string(kNeutralGender), Position::noun_head, Axis::gender},
                        {"", Position::pre_noun, Axis::religion},
                        {"", Position::pre_noun, Axis::disability}};
  auto base_it = cells.find(base.key());
  if (base_it != cells.end()) {
    Table parity;
    parity.title = "Single categories against the unmarked prompt (Welch, alpha " + fixed(scan.alpha, 3) + ")";
    parity.columns = {{"prompt"}, {"mean"}, {"unmarked_mean"}, {"t"}, {"p", 4}, {"biased"}};
    std::size_t biased = 0, total = 0;
    for (const auto& spec : grid) {
      if (spec.arity() != 1) continue;
      auto it = cells.find(spec.key());
      if (it == cells.end() || it->second.size() < 2 || base_it->second.size() < 2) continue;
      ScoreDistribution a{{spec, "pooled", transform, scope}, it->second};
      ScoreDistribution b{{base, "pooled", transform, scope}, base_it->second};
      const auto v = parity_check(a, b, EpsilonPolicy{EpsilonPolicy::Kind::significance, scan.alpha, 0.0});
      ++total;
      biased += v.biased;
      parity.rows.push_back({render_prompt(spec).surface, v.test.mean_a, v.test.mean_b, v.test.statistic,
                             v.test.p_value, static_cast<long long>(v.biased)});
    }
    md << emit(parity, Format::md) << "\n";
    md << biased << " of " << total << " single-category prompts differ from the unmarked prompt.\n\n";
  }

  md << "## H2: intersectional bias\n\n";
  const auto report = intersectional_scan(cells, grid, scan);
  auto line = [&](const char* what, std::size_t k, std::size_t of) {
    md << "- " << what << ": " << k << " of " << of << " (" << fixed(percent(k, of), 1) << "%)\n";
  };
  line("triples below all singles", report.triple_counts.lower_than_all_singles, report.triple_counts.evaluated);
  line("triples above all singles", report.triple_counts.higher_than_all_singles, report.triple_counts.evaluated);
  line("triples below all singles and pairs", report.triple_counts.lower_than_all_singles_and_pairs,
       report.triple_counts.evaluated);
  line("triples above all singles and pairs", report.triple_counts.higher_than_all_singles_and_pairs,
       report.triple_counts.evaluated);
  line("pairs below all singles", report.pair_counts.lower_than_all_singles, report.pair_counts.evaluated);
  line("pairs above all singles", report.pair_counts.higher_than_all_singles, report.pair_counts.evaluated);
  if (!report.skipped.empty()) md << "- skipped: " << report.skipped.size() << "\n";
  md << "\n" << emit(intersectional_table(report, cells), Format::md) << "\n";

  auto grouped = [&](const char* heading, ModelGrouping grouping) {
    md << heading;
    try {
      const auto results = null_delta_all_axes(run, grouping, transform, scope);
      std::size_t significant = 0;
      for (const auto& r : results) significant += r.test.p_value < scan.alpha;
      md << significant << " of " << results.size() << " values show a group difference at alpha "
         << fixed(scan.alpha, 3) << ".\n\n";
      md << emit(null_delta_table(results), Format::md) << "\n";
    } catch (const Error& e) {
      md << "Not available for this run: " << e.what() << "\n\n";
    }
  };

  md << "## H3: model size\n\n";
  {
    // Spread of per-prompt means in each size group.
    std::vector<double> small, large;
    for (const auto& m : model_cells(run, transform, scope)) {
      for (const auto& [key, v] : m.cells) {
        (m.params_millions < kSmallModelMillions ? small : large).push_back(mean(v));
      }
    }
    if (!small.empty() && !large.empty()) {
      md << "Per-prompt means, small models: mean " << fixed(mean(small), 3) << ", sd " << fixed(sd(small), 3)
         << "; large models: mean " << fixed(mean(large), 3) << ", sd " << fixed(sd(large), 3) << ".\n\n";
    }
  }
  grouped("", ModelGrouping::size);

  md << "## H4: training data diversity (model type)\n\n";
  grouped("", ModelGrouping::type);

  md << "## Other factors\n\n";
  try {
    md << emit(tests_table(correlation_report(run, transform, scope)), Format::md) << "\n";
  } catch (const Error& e) {
    md << "Correlations not available: " << e.what() << "\n\n";
  }
  try {
    md << emit(regression_table(run_regression(run, transform, scope)), Format::md);
  } catch (const Error& e) {
    md << "Regression not available: " << e.what() << "\n";
  }
  return md.str();
}

}  // namespace biasgrid
