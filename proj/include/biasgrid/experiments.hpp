#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasgrid/category_grammar.hpp"
#include "biasgrid/generation.hpp"
#include "biasgrid/run_store.hpp"
#include "biasgrid/scan.hpp"
#include "biasgrid/sentiment.hpp"
#include "biasgrid/stats.hpp"

namespace biasgrid {

enum class PlanKind { grid, prefix_counterfactual, person_first_swap, few_shot, size_type_comparison };
std::string_view to_string(PlanKind kind);
PlanKind parse_plan_kind(std::string_view text);

struct ClassifierSpec {
  // "lexicon" (location = lexicon file) or "http" (location = endpoint).
  std::string kind = "lexicon";
  std::string location;
};

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec);

struct SwapPair {
  std::string identity_first;
  std::string person_first;
};

// Defaults for the prefix counterfactual: the empty baseline first.
std::vector<std::string> default_prefixes();

struct ExperimentPlan {
  PlanKind kind = PlanKind::grid;
  std::string run_id = "run";
  std::filesystem::path runs_root = "runs";
  CategorySet categories = default_categories();
  GenParams gen;
  std::vector<BackendDescriptor> backends;
  ClassifierSpec classifier;
  int max_in_flight = 4;
  // Prompts generated concurrently before a persistence step.
  int chunk_size = 16;
  std::string prefix;

  // Reporting selection (all four combinations are always scored).
  Transform transform = Transform::softmax;
  Scope scope = Scope::full_sentence;
  ScanOptions scan;

  std::vector<std::string> prefixes = default_prefixes();
  std::vector<SwapPair> swap_pairs;

  // few_shot
  PromptSpec neutral;
  PromptSpec target;
  int shots = 3;
  int few_shot_samples = 10;
  // Defaults to the first backend.
  std::string few_shot_model;

  // Throws ConfigError for parameters invalid for `kind`.
  void validate() const;
  // Everything that determines the run's output. runs_root is excluded so a
  // run directory can move without changing its hash.
  nlohmann::json snapshot() const;
};

// Parses a plan document (YAML or JSON). Relative paths resolve against
// base_dir.
ExperimentPlan load_plan(std::string_view source, const std::filesystem::path& base_dir = ".");
ExperimentPlan load_plan_file(const std::filesystem::path& path);
// Inverse of snapshot(), used to re-execute a stored run.
ExperimentPlan plan_from_snapshot(const nlohmann::json& snapshot);

struct AuditRun {
  std::string run_id;
  std::filesystem::path dir;
  RunInfo info;
  // Set only when the run was finalized.
  std::optional<RunManifest> manifest;
  // (prompt, model) pairs processed in this invocation, skipped ones excluded.
  std::size_t pairs_processed = 0;
  std::size_t pairs_skipped = 0;
};

struct AuditHooks {
  // Stop (without finalizing) once this many pairs have been persisted in
  // this invocation. Simulates an interrupted run.
  std::optional<std::size_t> stop_after_pairs;
  // Called after each persisted pair with (done, total).
  std::function<void(std::size_t, std::size_t)> progress;
};

// Enumerates the grid, generates and scores every (prompt, model) pair
// under all transform x scope combinations, persists everything and seals
// the run. Re-running with the same plan resumes: completed pairs are
// skipped. Backend failures are recorded in the manifest.
AuditRun run_grid_audit(const ExperimentPlan& plan, const AuditHooks& hooks = {});

// Scores of every record under every transform x scope, in record order
// then (softmax/full, softmax/cont, sigmoid/full, sigmoid/cont).
std::vector<StoredScore> score_records(Classifier& classifier, const std::vector<GeneratedRecord>& records);

// ---------------------------------------------------------------------------
// Prefix counterfactual

struct ValueMean {
  Axis axis = Axis::gender;
  std::string label;
  double mean = 0.0;
};

// Score samples of one run grouped by grid cell (surface without prefix).
struct PrefixRunScores {
  std::string prefix;
  std::string run_id;
  CellScores cells;
};

struct PrefixShift {
  std::string prefix;
  std::string run_id;
  double overall_mean = 0.0;
  double overall_shift = 0.0;
  // Per axis value: mean under this prefix and shift from the baseline.
  std::vector<ValueMean> means;
  std::vector<double> shifts;
  // Per axis, value pairs whose order flipped relative to the baseline.
  std::map<Axis, int> rank_reversals;
};

struct PrefixReport {
  std::string baseline_run_id;
  std::vector<PrefixShift> prefixes;
};

// Pure comparison over grouped scores; runs[0] must be the baseline.
PrefixReport compare_prefix_runs(const std::vector<PromptSpec>& grid, const CategorySet& categories,
                                 const std::vector<PrefixRunScores>& runs);

PrefixReport run_prefix_counterfactual(const ExperimentPlan& plan);

// ---------------------------------------------------------------------------
// Person-first swap

struct SwapResult {
  SwapPair pair;
  TestResult test;
  // "person_first_higher", "identity_first_higher" or "equal".
  std::string direction;
  bool significant = false;
};

// Welch test of person-first scores (b) against identity-first scores (a).
SwapResult compare_swap(const SwapPair& pair, std::span<const double> identity_first,
                        std::span<const double> person_first, double alpha = 0.001);

// Category set with each identity-first label replaced by its person-first
// rewrite. Throws ConfigError for a label not on the disability axis.
CategorySet apply_swaps(const CategorySet& categories, const std::vector<SwapPair>& pairs);

std::vector<SwapResult> run_person_first_swap(const ExperimentPlan& plan);

// ---------------------------------------------------------------------------
// Few-shot calibration

// Shot sentences each closed with a period and newline, then the target.
// Blank shots are skipped, so all-blank shots give the target unchanged.
std::string build_calibrated_prompt(const std::vector<std::string>& shots, std::string_view target_surface);

struct CalibrationReport {
  std::string model_id;
  std::string neutral;
  std::string target;
  std::string calibrated_prompt;
  int shots = 0;
  int samples = 0;
  double neutral_mean = 0.0;
  double target_mean = 0.0;
  double calibrated_mean = 0.0;
  // Welch test of calibrated (b) against target-alone (a).
  TestResult calibrated_vs_target;
};

CalibrationReport run_few_shot_calibration(const ExperimentPlan& plan);

// ---------------------------------------------------------------------------
// Regression and correlation

inline constexpr const char* kRegressionPredictors[] = {"gender_mask",    "disability_mask", "religion_mask",
                                                        "prompt_length",  "sentence_length", "model_params",
                                                        "gb_vol"};

struct RegressionDataset {
  std::vector<std::string> names;
  // Min-max standardized predictors, one row per scored record.
  Matrix design;
  std::vector<double> response;
};

RegressionDataset assemble_regression_dataset(const RunData& run, Transform transform, Scope scope);
RegressionResult run_regression(const RunData& run, Transform transform, Scope scope);

struct NamedTest {
  std::string name;
  TestResult test;
};

// Pearson r for prompt length, term count and sentence length against the
// score, and prompt length against sentence length.
std::vector<NamedTest> correlation_report(const RunData& run, Transform transform, Scope scope);

// One-way ANOVA of scores across the values of each axis.
std::vector<NamedTest> axis_anova(const RunData& run, Transform transform, Scope scope);

// Cell scores pooled over models, keyed by PromptSpec::key().
CellScores pooled_cells(const RunData& run, Transform transform, Scope scope);
// Per-model cells with size metadata for null-delta comparisons.
std::vector<ModelCells> model_cells(const RunData& run, Transform transform, Scope scope);
// The category set a run was executed with.
CategorySet run_categories(const RunData& run);

}  // namespace biasgrid
