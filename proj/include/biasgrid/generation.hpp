#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "biasgrid/category_grammar.hpp"

namespace biasgrid {

struct GenParams {
  int max_new_tokens = 50;
  int top_k = 50;
  double top_p = 0.95;
  int samples_per_prompt = 100;
  std::uint64_t seed = 20210701;

  // Throws ConfigError when a field is out of range.
  void validate() const;
};

// `seed` is the run seed; per-sample RNG state is derived from it, the
// prompt and sample_index.
struct GeneratedRecord {
  Prompt prompt;
  std::string model_id;
  std::string sentence_raw;
  std::string continuation;
  int sample_index = 0;
  std::uint64_t seed = 0;
};

enum class BackendKind { http, replay, ngram };

std::string_view to_string(BackendKind kind);
BackendKind parse_backend_kind(std::string_view text);

struct BackendDescriptor {
  BackendKind kind = BackendKind::ngram;
  // URL for http, corpus file for replay and ngram.
  std::string location;
  std::string model_id;
  std::optional<double> params_size_millions;
  std::optional<double> training_gb;
  // Model family used for type comparisons ("gpt-2", "gpt-neo", ...).
  std::string family;
  int ngram_order = 3;

  void validate() const;
};

// One sampled sentence as a backend reports it.
struct Sample {
  std::string sentence_raw;
  std::uint64_t seed = 0;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  // Returns exactly params.samples_per_prompt samples or throws BackendError.
  virtual std::vector<Sample> generate(std::string_view model_id, std::string_view prompt, const GenParams& params) = 0;
  virtual bool is_reentrant() const { return false; }
};

// Word-level n-gram model over whitespace tokens. Sentences are terminated
// by an end marker, so generation stops where a corpus sentence could end.
class NgramModel {
 public:
  NgramModel(std::span<const std::string> corpus, int order);

  int order() const { return order_; }

  // Successor counts for the longest known suffix of `context` (at most
  // order-1 words, at least 1). Empty when no suffix was seen. The end
  // marker is represented by an empty string.
  std::vector<std::pair<std::string, int>> successors(std::span<const std::string> context) const;

  // One continuation (" w1 w2 ...") for `prompt`, seeded by `seed`.
  std::string sample(std::string_view prompt, const GenParams& params, std::uint64_t seed) const;

  // Every adjacent word pair seen in the corpus, for support checks.
  bool has_transition(std::string_view from, std::string_view to) const;

 private:
  int order_;
  // Context (words joined by '\x1f') -> successor counts. Order 1 uses the
  // empty context.
  std::unordered_map<std::string, std::map<std::string, int>> table_;
  std::set<std::pair<std::string, std::string>> transitions_;
};

std::vector<std::string> split_words(std::string_view text);

// Continuations for `prompt` from an order-n model built over `corpus`.
// top_p is ignored; top_k truncates the successor distribution.
std::vector<std::string> ngram_generate(std::span<const std::string> corpus, int order, std::string_view prompt,
                                        const GenParams& params);

class NgramBackend final : public GenerationBackend {
 public:
  NgramBackend(std::vector<std::string> corpus, int order);
  static std::unique_ptr<NgramBackend> from_file(const std::string& path, int order);

  std::vector<Sample> generate(std::string_view model_id, std::string_view prompt, const GenParams& params) override;
  bool is_reentrant() const override { return true; }
  const NgramModel& model() const { return model_; }

 private:
  NgramModel model_;
};

// Serves stored sentences for (model_id, prompt) in file order. Lines are
// structured records {model_id, prompt, sample_index, sentence_raw, seed}.
class ReplayBackend final : public GenerationBackend {
 public:
  static std::unique_ptr<ReplayBackend> from_file(const std::string& path);
  static std::unique_ptr<ReplayBackend> from_lines(std::string_view jsonl);

  std::vector<Sample> generate(std::string_view model_id, std::string_view prompt, const GenParams& params) override;
  bool is_reentrant() const override { return true; }
  std::size_t size() const { return count_; }

 private:
  std::map<std::pair<std::string, std::string>, std::vector<Sample>> corpus_;
  std::size_t count_ = 0;
};

// POST /generate against a model server. Retries transport and 5xx
// failures with exponential backoff; 4xx responses are not retried.
class HttpBackend final : public GenerationBackend {
 public:
  explicit HttpBackend(std::string endpoint, int max_attempts = 3, int backoff_ms = 200);
  std::vector<Sample> generate(std::string_view model_id, std::string_view prompt, const GenParams& params) override;
  bool is_reentrant() const override { return true; }

 private:
  std::string endpoint_;
  int max_attempts_;
  int backoff_ms_;
};

struct ModelMetadata {
  std::string model_id;
  double params_millions = 0;
  double training_gb = 0;
};

struct HealthInfo {
  std::string status;
  std::vector<ModelMetadata> models;
};

// GET /health on a model server.
HealthInfo query_health(const std::string& endpoint);

std::unique_ptr<GenerationBackend> make_backend(const BackendDescriptor& descriptor);

// Exactly params.samples_per_prompt records for `prompt`, or throws.
std::vector<GeneratedRecord> generate_samples(GenerationBackend& backend, const BackendDescriptor& descriptor,
                                              const Prompt& prompt, const GenParams& params);

// The text the model added after the prompt. Throws DomainError when the
// record does not begin with its prompt.
std::string strip_prompt(const GeneratedRecord& record);

// Splits "http://host:port/path" into the pieces httplib needs.
struct Endpoint {
  std::string scheme_host_port;
  std::string base_path;
};
Endpoint split_endpoint(std::string_view url);

}  // namespace biasgrid
