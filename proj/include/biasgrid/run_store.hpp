#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasgrid/generation.hpp"
#include "biasgrid/sentiment.hpp"
#include "biasgrid/stats.hpp"

namespace biasgrid {

// One line of scores.jsonl.
struct StoredScore {
  std::string model_id;
  std::string prompt;
  std::string spec_key;
  int sample_index = 0;
  Transform transform = Transform::softmax;
  Scope scope = Scope::full_sentence;
  double value = 0.5;
  std::string backend_id;
  bool neutral_empty = false;
};

struct Failure {
  std::string prompt;
  std::string model_id;
  std::string reason;

  friend bool operator==(const Failure&, const Failure&) = default;
};

struct RunCounts {
  std::size_t prompts = 0;
  std::size_t records = 0;
  std::size_t scores = 0;

  friend bool operator==(const RunCounts&, const RunCounts&) = default;
};

struct RunManifest {
  std::string run_id;
  std::string config_hash;
  std::vector<BackendDescriptor> backends;
  RunCounts counts;
  // Pairs that never completed, sorted by (prompt, model_id).
  std::vector<Failure> failures;
  std::uint64_t seed = 0;
};

// Contents of run.json: everything needed to re-execute the run.
struct RunInfo {
  std::string run_id;
  std::string created_at;
  std::uint64_t seed = 0;
  int samples_per_prompt = 0;
  // Score lines expected per record (transform x scope combinations).
  int scores_per_record = 4;
  std::vector<BackendDescriptor> backends;
  nlohmann::json config = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Serialization. These are the documented line formats.

nlohmann::json to_json(const BackendDescriptor& d);
BackendDescriptor descriptor_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratedRecord& r);
GeneratedRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StoredScore& s);
StoredScore score_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Failure& f);
nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunInfo& info);
RunInfo run_info_from_json(const nlohmann::json& j);

// FNV-1a of the canonical (sorted-key, compact) serialization, as hex.
std::string config_hash(const nlohmann::json& config);

// Current UTC time as ISO-8601.
std::string utc_timestamp();

// ---------------------------------------------------------------------------

// Single-writer append-only store for one run directory. Appends are
// flushed per batch; a partial trailing line left by a crash is truncated
// when the run is reopened.
class RunStore {
 public:
  // Creates runs/<run_id> under `root`, or reopens it for resumption when a
  // run with the same config hash already exists there. A different config
  // under the same id is a StoreError.
  static RunStore create(const std::filesystem::path& root, RunInfo info);
  static RunStore open(const std::filesystem::path& root, const std::string& run_id);

  RunStore(RunStore&&) noexcept = default;
  RunStore& operator=(RunStore&&) noexcept = default;

  const RunInfo& info() const { return info_; }
  const std::filesystem::path& dir() const { return dir_; }
  bool sealed() const { return sealed_; }

  // Returns how many records were written; exact duplicates of an already
  // stored (prompt, sample_index, model_id) are skipped.
  std::size_t append_records(std::span<const GeneratedRecord> records);
  // Same for scores, keyed additionally on transform and scope.
  std::size_t append_scores(std::span<const StoredScore> scores);
  void record_failure(const Failure& failure);

  // Whether (prompt, model_id) has all its records and all their scores.
  bool pair_complete(std::string_view prompt, std::string_view model_id) const;
  std::size_t duplicates_skipped() const { return duplicates_; }
  std::size_t record_count() const { return record_keys_.size(); }
  std::size_t score_count() const { return score_keys_.size(); }

  // Writes manifest.json and seals the run. Every planned (prompt, model)
  // pair must be complete or failed. Finalizing a sealed run returns the
  // stored manifest unchanged.
  RunManifest finalize(const std::vector<std::pair<std::string, std::string>>& planned = {});

 private:
  RunStore() = default;
  void load_existing();
  void require_open() const;

  std::filesystem::path dir_;
  RunInfo info_;
  bool sealed_ = false;
  std::ofstream records_out_;
  std::ofstream scores_out_;
  std::ofstream failures_out_;
  std::unordered_set<std::string> record_keys_;
  std::unordered_set<std::string> score_keys_;
  std::unordered_map<std::string, std::size_t> records_per_pair_;
  std::unordered_map<std::string, std::size_t> scores_per_pair_;
  std::unordered_set<std::string> prompts_;
  std::vector<Failure> failures_;
  std::size_t duplicates_ = 0;
};

// Readers; safe to use concurrently on sealed runs.
std::filesystem::path run_dir(const std::filesystem::path& root, const std::string& run_id);
RunInfo load_run_info(const std::filesystem::path& dir);
RunManifest load_manifest(const std::filesystem::path& dir);
std::vector<GeneratedRecord> load_records(const std::filesystem::path& dir);
std::vector<StoredScore> load_scores(const std::filesystem::path& dir);

// All scores for the key, in file order. Throws StoreError when none exist.
ScoreDistribution load_distribution(const std::filesystem::path& dir, const DistributionKey& key);
ScoreDistribution select_distribution(std::span<const StoredScore> scores, const DistributionKey& key);

// A finalized run loaded into memory.
struct RunData {
  std::filesystem::path dir;
  RunInfo info;
  RunManifest manifest;
  std::vector<GeneratedRecord> records;
  std::vector<StoredScore> scores;
};

// Loads a sealed run. Throws StoreError when the manifest is missing.
RunData load_run(const std::filesystem::path& dir);

// One record with its score under a chosen transform and scope.
struct Observation {
  const GeneratedRecord* record = nullptr;
  double score = 0.0;
};

// Joins records with their scores, in record order. A record without a
// matching score is a StoreError.
std::vector<Observation> observations(const RunData& run, Transform transform, Scope scope);

// Reads a jsonl file, truncating a partial trailing line in place when
// `repair` is set. Non-trailing malformed lines are a StoreError.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path, bool repair = false);

}  // namespace biasgrid
