#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace biasgrid {

struct GeneratedRecord;

enum class Transform { softmax, sigmoid };
enum class Scope { full_sentence, continuation_only };

std::string_view to_string(Transform t);
std::string_view to_string(Scope s);
Transform parse_transform(std::string_view text);
Scope parse_scope(std::string_view text);

inline constexpr double kScoreEpsilon = 1e-9;

struct LogitPair {
  double negative = 0.0;
  double positive = 0.0;
};

struct SentimentScore {
  double value = 0.5;
  Transform transform = Transform::softmax;
  Scope scope = Scope::full_sentence;
  std::string backend_id;
  // Set when the scored text was empty and the score is the 0.5 convention.
  bool neutral_empty = false;
};

// exp(pos) / (exp(pos) + exp(neg)), clamped to [eps, 1 - eps].
double softmax_score(LogitPair logits);
// 1 / (1 + exp(-(pos - neg))), clamped to [eps, 1 - eps].
double sigmoid_score(LogitPair logits);
double apply_transform(Transform t, LogitPair logits);

using Lexicon = std::unordered_map<std::string, double>;

// `word<TAB>weight` per line; blank lines and '#' comments skipped.
Lexicon parse_lexicon(std::string_view text);
Lexicon load_lexicon(const std::string& path);

// Lowercased words with leading/trailing punctuation trimmed.
std::vector<std::string> lexicon_tokens(std::string_view text);

// positive = sum of positive weights, negative = -(sum of negative weights).
LogitPair lexicon_logits(std::string_view text, const Lexicon& lexicon);

// A source of two-class logits. Implementations must be deterministic for
// fixed input; thread safety is per implementation (see is_reentrant()).
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string id() const = 0;
  virtual std::vector<LogitPair> logits(std::span<const std::string> texts) = 0;
  // Whether logits() may be called concurrently from several threads.
  virtual bool is_reentrant() const { return false; }
};

class LexiconClassifier final : public Classifier {
 public:
  explicit LexiconClassifier(Lexicon lexicon, std::string id = "lexicon");
  std::string id() const override { return id_; }
  std::vector<LogitPair> logits(std::span<const std::string> texts) override;
  bool is_reentrant() const override { return true; }
  const Lexicon& lexicon() const { return lexicon_; }

 private:
  Lexicon lexicon_;
  std::string id_;
};

// Speaks POST /classify {texts} -> {logits: [[neg, pos], ...]}.
class HttpClassifier final : public Classifier {
 public:
  explicit HttpClassifier(std::string endpoint, int max_attempts = 3, int backoff_ms = 200);
  std::string id() const override { return "http:" + endpoint_; }
  std::vector<LogitPair> logits(std::span<const std::string> texts) override;
  bool is_reentrant() const override { return true; }

 private:
  std::string endpoint_;
  int max_attempts_;
  int backoff_ms_;
};

std::string scoped_text(const GeneratedRecord& record, Scope scope);

SentimentScore score_record(Classifier& classifier, const GeneratedRecord& record, Transform transform, Scope scope);

// Batch kernels used by the audit: score every text under `transform`.
// Empty texts get the 0.5 neutral convention. The parallel version splits
// texts across OpenMP threads and must match the serial reference exactly.
std::vector<SentimentScore> score_texts_serial(const LexiconClassifier& classifier, std::span<const std::string> texts,
                                               Transform transform, Scope scope);
std::vector<SentimentScore> score_texts_parallel(const LexiconClassifier& classifier,
                                                 std::span<const std::string> texts, Transform transform, Scope scope);

}  // namespace biasgrid
