#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace biasgrid {

std::string porter_stem(std::string_view word);

using StopwordSet = std::set<std::string, std::less<>>;

// The shipped English stopword list (same content as data/stopwords_en.txt).
const StopwordSet& default_stopwords();
StopwordSet parse_stopwords(std::string_view text);
StopwordSet load_stopwords(const std::string& path);

struct Corpus {
  // Token ids per document, indexing into vocab.
  std::vector<std::vector<int>> docs;
  std::vector<std::string> vocab;
  // Index of each kept document in the preprocess input.
  std::vector<std::size_t> doc_ids;
  // Inputs that came out empty and were dropped.
  std::vector<std::size_t> dropped;

  std::size_t token_count() const;
};

// Tokens of this many characters or fewer are removed.
inline constexpr std::size_t kMaxDroppedLength = 4;

// Lowercases, strips punctuation, drops stopwords and tokens of <= 4
// characters, then Porter-stems what is left. Stems of <= 4 characters are
// dropped as well so the corpus never holds short tokens. Vocabulary is in
// first-seen order.
Corpus preprocess(const std::vector<std::string>& sentences, const StopwordSet& stopwords = default_stopwords());

// Tokens of one sentence after the same pipeline.
std::vector<std::string> preprocess_tokens(std::string_view sentence, const StopwordSet& stopwords = default_stopwords());

struct LdaParams {
  int topics = 5;
  int passes = 15;
  // alpha <= 0 means the 50 / K default.
  double alpha = -1.0;
  double beta = 0.01;
  std::uint64_t seed = 20210701;
};

struct TopicModel {
  int topics = 0;
  // topics x vocab, row-major.
  std::vector<double> phi;
  // docs x topics, row-major.
  std::vector<double> theta;
  std::vector<std::string> vocab;
  double alpha = 0.0;
  double beta = 0.0;
  int passes = 0;
  std::uint64_t seed = 0;

  std::size_t vocab_size() const { return vocab.size(); }
  std::size_t doc_count() const { return topics ? theta.size() / static_cast<std::size_t>(topics) : 0; }
  double phi_at(int k, std::size_t w) const { return phi[static_cast<std::size_t>(k) * vocab.size() + w]; }
  double theta_at(std::size_t d, int k) const { return theta[d * static_cast<std::size_t>(topics) + k]; }
};

// Count state exposed to sweep observers.
struct GibbsState {
  int sweep = 0;
  const std::vector<int>* topic_totals = nullptr;     // K
  const std::vector<int>* word_topic = nullptr;       // V x K
  const std::vector<int>* doc_topic = nullptr;        // D x K
  const std::vector<int>* doc_lengths = nullptr;      // D
  std::size_t tokens = 0;
};

using SweepObserver = std::function<void(const GibbsState&)>;

// Collapsed Gibbs sampling, `passes` full sweeps over every token.
// Throws DomainError for an empty corpus or K > vocabulary size.
TopicModel lda_fit(const Corpus& corpus, const LdaParams& params, const SweepObserver& observer = {});

// phi / theta from raw counts with symmetric smoothing.
void normalize_counts(const std::vector<int>& word_topic, const std::vector<int>& topic_totals,
                      const std::vector<int>& doc_topic, const std::vector<int>& doc_lengths, int topics,
                      std::size_t vocab_size, double alpha, double beta, std::vector<double>& phi,
                      std::vector<double>& theta);

// Top-n tokens per topic by phi, ties broken lexicographically.
std::vector<std::vector<std::string>> top_words(const TopicModel& model, std::size_t n);

std::map<std::string, std::size_t> word_frequencies(const Corpus& corpus);

// `token<TAB>count` lines, count descending then token ascending.
std::string export_frequencies(const std::map<std::string, std::size_t>& counts);

}  // namespace biasgrid
