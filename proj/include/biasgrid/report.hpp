#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biasgrid/experiments.hpp"
#include "biasgrid/run_store.hpp"
#include "biasgrid/scan.hpp"
#include "biasgrid/stats.hpp"
#include "biasgrid/topics.hpp"

namespace biasgrid {

// monostate renders as an empty cell (csv/md) or null (json-lines).
using Cell = std::variant<std::monostate, std::string, long long, double>;

struct Column {
  std::string name;
  // Decimals used for doubles in markdown; csv and json-lines keep full
  // precision.
  int decimals = 2;

  friend bool operator==(const Column&, const Column&) = default;
};

struct Table {
  std::string title;
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;

  friend bool operator==(const Table&, const Table&) = default;
};

enum class Format { csv, md, json_lines };
std::string_view to_string(Format f);
// Accepts "csv", "md", "json-lines" (also "structured").
Format parse_format(std::string_view text);

std::string emit(const Table& table, Format format);
// Inverse of emit(table, Format::json_lines).
Table parse_json_lines(std::string_view text);

// Mean score per group value x model plus an Ave column (mean of the model
// columns), sorted by Ave descending then label. No axes gives one row over
// all prompts.
Table aggregate_means(const RunData& run, const std::vector<Axis>& group_by, Transform transform, Scope scope);

struct RankedPrompt {
  std::string surface;
  PromptSpec spec;
  // Per model, in backend order.
  std::vector<double> per_model;
  double mean = 0.0;
};

struct Rankings {
  std::vector<std::string> models;
  // Highest first.
  std::vector<RankedPrompt> top;
  // Lowest first.
  std::vector<RankedPrompt> bottom;
};

// Prompts ordered by the mean of their per-model means, ties broken by
// surface string. Throws DomainError when n exceeds the prompt count.
Rankings rank_combinations(const RunData& run, std::size_t n, std::optional<int> arity, Transform transform,
                           Scope scope);

Table ranks_table(const Rankings& rankings);
Table scan_table(const ScanReport& report);
// Triples and pairs scoring significantly below all their single-marker
// subsets, with those subsets' means, ordered by the change.
Table intersectional_table(const ScanReport& report, const CellScores& cells);
Table regression_table(const RegressionResult& result);
Table null_delta_table(const std::vector<NullDeltaResult>& results);
Table tests_table(const std::vector<NamedTest>& tests);
Table prefix_table(const PrefixReport& report);
Table swap_table(const std::vector<SwapResult>& results);
Table calibration_table(const CalibrationReport& report);
// Top words per topic, one row per topic.
Table topics_table(const std::vector<std::vector<std::string>>& words);

// Null-delta results for every non-null value of every axis.
std::vector<NullDeltaResult> null_delta_all_axes(const RunData& run, ModelGrouping grouping, Transform transform,
                                                 Scope scope);

// Mean over values added in sorted order, so the result does not depend on
// input order.
double order_free_mean(std::vector<double> values);

// Markdown summary organized by the four hypotheses.
std::string summary(const RunData& run, Transform transform, Scope scope, ScanOptions scan = {});

}  // namespace biasgrid
