#include "biasgrid/topics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "biasgrid/error.hpp"

namespace biasgrid {
namespace {

// Keep in sync with data/stopwords_en.txt (a test compares them).
constexpr std::string_view kDefaultStopwords = R"(
i me my myself we our ours ourselves you you're you've you'll you'd your yours yourself yourselves 
he him his himself she she's her hers herself it it's its itself they them their theirs themselves 
what which who whom this that that'll these those am is are was were be been being have has had 
having do does did doing a an the and but if or because as until while of at by for with about 
against between into through during before after above below to from up down in out on off over 
under again further then once here there when where why how all any both each few more most other 
some such no nor not only own same so than too very s t can will just don don't should should've 
now d ll m o re ve y ain aren aren't couldn couldn't didn didn't doesn doesn't hadn hadn't hasn 
hasn't haven haven't isn isn't ma mightn mightn't mustn mustn't needn needn't shan shan't shouldn 
shouldn't wasn wasn't weren weren't won won't wouldn wouldn't )";

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

const StopwordSet& default_stopwords() {
  static const StopwordSet set = parse_stopwords(kDefaultStopwords);
  return set;
}

StopwordSet parse_stopwords(std::string_view text) {
  StopwordSet out;
  std::istringstream in{std::string(text)};
  // Whitespace-separated tokens; '#' starts a comment running to end of line.
  for (std::string line; std::getline(in, line);) {
    std::istringstream words(line.substr(0, line.find('#')));
    for (std::string w; words >> w;) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      out.insert(w);
    }
  }
  return out;
}

StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open stopword file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_stopwords(ss.str());
}

std::size_t Corpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : docs) n += d.size();
  return n;
}

std::vector<std::string> preprocess_tokens(std::string_view sentence, const StopwordSet& stopwords) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    // Apostrophes are dropped after the stopword check so "don't" matches the list.
    const bool stop = stopwords.count(cur) > 0;
    std::string word;
    for (char c : cur) {
      if (c != '\'') word.push_back(c);
    }
    cur.clear();
    if (stop || stopwords.count(word) || word.size() <= kMaxDroppedLength) return;
    std::string stem = porter_stem(word);
    if (stem.size() <= kMaxDroppedLength) return;
    out.push_back(std::move(stem));
  };
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (ch == '\'' && !cur.empty()) {
      cur.push_back(ch);
    } else {
      flush();
    }
  }
  flush();
  return out;
}

Corpus preprocess(const std::vector<std::string>& sentences, const StopwordSet& stopwords) {
  Corpus corpus;
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto tokens = preprocess_tokens(sentences[i], stopwords);
    if (tokens.empty()) {
      corpus.dropped.push_back(i);
      continue;
    }
    std::vector<int> doc;
    doc.reserve(tokens.size());
    for (const auto& t : tokens) {
      auto [it, inserted] = index.try_emplace(t, static_cast<int>(corpus.vocab.size()));
      if (inserted) corpus.vocab.push_back(t);
      doc.push_back(it->second);
    }
    corpus.docs.push_back(std::move(doc));
    corpus.doc_ids.push_back(i);
  }
  return corpus;
}

void normalize_counts(const std::vector<int>& word_topic, const std::vector<int>& topic_totals,
                      const std::vector<int>& doc_topic, const std::vector<int>& doc_lengths, int topics,
                      std::size_t vocab_size, double alpha, double beta, std::vector<double>& phi,
                      std::vector<double>& theta) {
  const auto K = static_cast<std::size_t>(topics);
  const std::size_t V = vocab_size;
  const std::size_t D = doc_lengths.size();
  phi.assign(K * V, 0.0);
  theta.assign(D * K, 0.0);
  const double vbeta = static_cast<double>(V) * beta;
  for (std::size_t k = 0; k < K; ++k) {
    const double denom = topic_totals[k] + vbeta;
    for (std::size_t w = 0; w < V; ++w) phi[k * V + w] = (word_topic[w * K + k] + beta) / denom;
  }
  const double kalpha = static_cast<double>(K) * alpha;
  for (std::size_t d = 0; d < D; ++d) {
    const double denom = doc_lengths[d] + kalpha;
    for (std::size_t k = 0; k < K; ++k) theta[d * K + k] = (doc_topic[d * K + k] + alpha) / denom;
  }
}

TopicModel lda_fit(const Corpus& corpus, const LdaParams& params, const SweepObserver& observer) {
  if (corpus.docs.empty() || corpus.token_count() == 0) throw DomainError("lda_fit: empty corpus");
  if (params.topics < 1) throw DomainError("lda_fit: K must be >= 1");
  if (static_cast<std::size_t>(params.topics) > corpus.vocab.size()) {
    throw DomainError("lda_fit: K=" + std::to_string(params.topics) + " exceeds vocabulary size " +
                      std::to_string(corpus.vocab.size()));
  }
  if (params.passes < 0) throw DomainError("lda_fit: passes must be >= 0");
  if (!(params.beta > 0)) throw DomainError("lda_fit: beta must be > 0");

  const int K = params.topics;
  const auto Ku = static_cast<std::size_t>(K);
  const std::size_t V = corpus.vocab.size();
  const std::size_t D = corpus.docs.size();
  const double alpha = params.alpha > 0 ? params.alpha : 50.0 / K;
  const double beta = params.beta;
  const double vbeta = static_cast<double>(V) * beta;

  std::vector<int> nwk(V * Ku, 0), nk(Ku, 0), ndk(D * Ku, 0), nd(D, 0);
  std::vector<std::vector<int>> z(D);
  std::mt19937_64 rng(params.seed);

  for (std::size_t d = 0; d < D; ++d) {
    const auto& doc = corpus.docs[d];
    z[d].resize(doc.size());
    nd[d] = static_cast<int>(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto w = static_cast<std::size_t>(doc[i]);
      if (w >= V) throw DomainError("lda_fit: token id out of vocabulary range");
      const int k = static_cast<int>(uniform01(rng) * K);
      z[d][i] = k;
      ++nwk[w * Ku + k];
      ++nk[k];
      ++ndk[d * Ku + k];
    }
  }

  const std::size_t tokens = corpus.token_count();
  std::vector<double> cumulative(Ku);
  for (int sweep = 1; sweep <= params.passes; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      const auto& doc = corpus.docs[d];
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto w = static_cast<std::size_t>(doc[i]);
        int k = z[d][i];
        --nwk[w * Ku + k];
        --nk[k];
        --ndk[d * Ku + k];

        double total = 0.0;
        for (std::size_t t = 0; t < Ku; ++t) {
          total += (nwk[w * Ku + t] + beta) / (nk[t] + vbeta) * (ndk[d * Ku + t] + alpha);
          cumulative[t] = total;
        }
        const double u = uniform01(rng) * total;
        k = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        if (k >= K) k = K - 1;

        z[d][i] = k;
        ++nwk[w * Ku + k];
        ++nk[k];
        ++ndk[d * Ku + k];
      }
    }
    if (observer) observer(GibbsState{sweep, &nk, &nwk, &ndk, &nd, tokens});
  }

  TopicModel model;
  model.topics = K;
  model.vocab = corpus.vocab;
  model.alpha = alpha;
  model.beta = beta;
  model.passes = params.passes;
  model.seed = params.seed;
  normalize_counts(nwk, nk, ndk, nd, K, V, alpha, beta, model.phi, model.theta);
  return model;
}

std::vector<std::vector<std::string>> top_words(const TopicModel& model, std::size_t n) {
  const std::size_t V = model.vocab_size();
  if (n > V) throw DomainError("top_words: n exceeds vocabulary size");
  std::vector<std::vector<std::string>> out;
  std::vector<std::size_t> order(V);
  for (int k = 0; k < model.topics; ++k) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double pa = model.phi_at(k, a), pb = model.phi_at(k, b);
                        if (pa != pb) return pa > pb;
                        return model.vocab[a] < model.vocab[b];
                      });
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) words.push_back(model.vocab[order[i]]);
    out.push_back(std::move(words));
  }
  return out;
}

std::map<std::string, std::size_t> word_frequencies(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus.docs) {
    for (int id : doc) ++counts[corpus.vocab.at(static_cast<std::size_t>(id))];
  }
  return counts;
}

std::string export_frequencies(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::string out;
  for (const auto& [token, count] : rows) {
    out += token;
    out += '\t';
    out += std::to_string(count);
    out += '\n';
  }
  return out;
}

}  // namespace biasgrid
