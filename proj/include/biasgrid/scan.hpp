#pragma once

#include <map>
#include <string>
#include <vector>

#include "biasgrid/category_grammar.hpp"
#include "biasgrid/stats.hpp"

namespace biasgrid {

// Score samples per grid cell, keyed by PromptSpec::key().
using CellScores = std::map<std::string, std::vector<double>>;

struct ScanOptions {
  double alpha = 0.001;
  TripleSet triple_set = TripleSet::full_combinations;
};

struct ScanEntry {
  PromptSpec spec;
  std::string surface;
  double mean = 0.0;
  // Mean of the single-marker subset means.
  double singles_mean = 0.0;
  bool lower_than_all_singles = false;
  bool higher_than_all_singles = false;
  // Triples only; false for pairs.
  bool lower_than_all_singles_and_pairs = false;
  bool higher_than_all_singles_and_pairs = false;
};

struct ScanCounts {
  std::size_t evaluated = 0;
  std::size_t lower_than_all_singles = 0;
  std::size_t higher_than_all_singles = 0;
  std::size_t lower_than_all_singles_and_pairs = 0;
  std::size_t higher_than_all_singles_and_pairs = 0;
};

struct ScanReport {
  std::vector<ScanEntry> triples;
  std::vector<ScanEntry> pairs;
  ScanCounts triple_counts;
  ScanCounts pair_counts;
  // Specs not evaluated because a needed distribution was missing or too
  // small, with the reason.
  std::vector<std::pair<std::string, std::string>> skipped;
};

double percent(std::size_t count, std::size_t of);

// Compares every "triple" (per options.triple_set) against its
// single-marker subsets, and against singles plus pairs; compares every
// two-marker cell against its singles. A comparison counts as lower (higher)
// when the Welch p < alpha and the candidate mean is lower (higher).
// Results follow grid order whatever the map order.
ScanReport intersectional_scan(const CellScores& cells, const std::vector<PromptSpec>& grid, ScanOptions options = {});

// Reference implementation of the same scan without OpenMP.
ScanReport intersectional_scan_serial(const CellScores& cells, const std::vector<PromptSpec>& grid,
                                      ScanOptions options = {});

// ---------------------------------------------------------------------------
// Null-marker deltas between model groups

enum class ModelGrouping { size, type };
std::string_view to_string(ModelGrouping g);
ModelGrouping parse_grouping(std::string_view text);

struct ModelCells {
  std::string model_id;
  double params_millions = 0.0;
  double training_gb = 0.0;
  std::string family;
  CellScores cells;
};

struct NullDeltaResult {
  std::string value;
  Axis axis = Axis::gender;
  ModelGrouping grouping = ModelGrouping::size;
  // statistic is sign-adjusted: positive means the value-vs-null gap grows
  // in group b (large models / the larger-corpus family). mean_a/mean_b are
  // the raw mean deltas of each group.
  TestResult test;
  std::string group_a;
  std::string group_b;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

inline constexpr double kSmallModelMillions = 500.0;

// For every model and every context (the other two axis values) takes
// mean(score | value) - mean(score | axis null marker), then Welch-tests
// those deltas between the two model groups. One result per value.
std::vector<NullDeltaResult> null_delta_comparison(const std::vector<ModelCells>& models,
                                                   const std::vector<PromptSpec>& grid, Axis axis,
                                                   const std::vector<std::string>& values, ModelGrouping grouping);

}  // namespace biasgrid
