#include "biasgrid/sentiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "biasgrid/error.hpp"
#include "biasgrid/generation.hpp"
#include "internal/http_client.hpp"

namespace biasgrid {
namespace {

using nlohmann::json;

double clamp_open(double v) { return std::clamp(v, kScoreEpsilon, 1.0 - kScoreEpsilon); }

void require_finite(LogitPair l) {
  if (!std::isfinite(l.negative) || !std::isfinite(l.positive)) throw DomainError("sentiment logits must be finite");
}

bool blank(std::string_view text) {
  return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

std::string_view to_string(Transform t) { return t == Transform::softmax ? "softmax" : "sigmoid"; }
std::string_view to_string(Scope s) { return s == Scope::full_sentence ? "full_sentence" : "continuation_only"; }

Transform parse_transform(std::string_view text) {
  if (text == "softmax") return Transform::softmax;
  if (text == "sigmoid") return Transform::sigmoid;
  throw ConfigError("unknown transform '" + std::string(text) + "'");
}

Scope parse_scope(std::string_view text) {
  if (text == "full_sentence") return Scope::full_sentence;
  if (text == "continuation_only") return Scope::continuation_only;
  throw ConfigError("unknown scope '" + std::string(text) + "'");
}

double softmax_score(LogitPair l) {
  require_finite(l);
  const double m = std::max(l.negative, l.positive);
  const double ep = std::exp(l.positive - m);
  const double en = std::exp(l.negative - m);
  return clamp_open(ep / (ep + en));
}

double sigmoid_score(LogitPair l) {
  require_finite(l);
  const double margin = l.positive - l.negative;
  double v;
  if (margin >= 0) {
    v = 1.0 / (1.0 + std::exp(-margin));
  } else {
    const double e = std::exp(margin);
    v = e / (1.0 + e);
  }
  return clamp_open(v);
}

double apply_transform(Transform t, LogitPair logits) {
  return t == Transform::softmax ? softmax_score(logits) : sigmoid_score(logits);
}

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ConfigError("lexicon line " + std::to_string(line_no) + ": expected word<TAB>weight");
    std::string word = line.substr(0, tab);
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    const std::string w = line.substr(tab + 1);
    double weight = 0;
    const auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), weight);
    if (ec != std::errc() || ptr != w.data() + w.size() || !std::isfinite(weight)) {
      throw ConfigError("lexicon line " + std::to_string(line_no) + ": bad weight '" + w + "'");
    }
    lex[word] = weight;
  }
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

std::vector<std::string> lexicon_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& word : split_words(text)) {
    std::size_t b = 0, e = word.size();
    while (b < e && !is_word_char(word[b])) ++b;
    while (e > b && !is_word_char(word[e - 1])) --e;
    if (b == e) continue;
    std::string t = word.substr(b, e - b);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(t));
  }
  return out;
}

LogitPair lexicon_logits(std::string_view text, const Lexicon& lexicon) {
  LogitPair l;
  for (const auto& t : lexicon_tokens(text)) {
    auto it = lexicon.find(t);
    if (it == lexicon.end()) continue;
    if (it->second > 0) {
      l.positive += it->second;
    } else {
      l.negative -= it->second;
    }
  }
  return l;
}

LexiconClassifier::LexiconClassifier(Lexicon lexicon, std::string id) : lexicon_(std::move(lexicon)), id_(std::move(id)) {}

std::vector<LogitPair> LexiconClassifier::logits(std::span<const std::string> texts) {
  std::vector<LogitPair> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(lexicon_logits(t, lexicon_));
  return out;
}

HttpClassifier::HttpClassifier(std::string endpoint, int max_attempts, int backoff_ms)
    : endpoint_(std::move(endpoint)), max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
  split_endpoint(endpoint_);
}

std::vector<LogitPair> HttpClassifier::logits(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  const std::string body = json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();
  const auto result =
      detail::with_retries(max_attempts_, backoff_ms_, [&] { return detail::http_post_json(endpoint_, "/classify", body); });
  if (result.status != 200) {
    throw BackendError("classify failed on " + endpoint_ +
                       (result.status ? ": HTTP " + std::to_string(result.status) : ": " + result.transport_error));
  }
  std::vector<LogitPair> out;
  try {
    const auto reply = json::parse(result.body);
    for (const auto& pair : reply.at("logits")) {
      if (pair.size() != 2) throw BackendError("malformed /classify response: logit row must have 2 entries");
      out.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /classify response: ") + e.what());
  }
  if (out.size() != texts.size()) {
    throw BackendError("malformed /classify response: " + std::to_string(out.size()) + " rows for " +
                       std::to_string(texts.size()) + " texts");
  }
  return out;
}

std::string scoped_text(const GeneratedRecord& record, Scope scope) {
  return scope == Scope::full_sentence ? record.sentence_raw : strip_prompt(record);
}

SentimentScore score_record(Classifier& classifier, const GeneratedRecord& record, Transform transform, Scope scope) {
  SentimentScore s;
  s.transform = transform;
  s.scope = scope;
  s.backend_id = classifier.id();
  const std::string text = scoped_text(record, scope);
  if (blank(text)) {
    s.value = 0.5;
    s.neutral_empty = true;
    return s;
  }
  const std::string one[] = {text};
  s.value = apply_transform(transform, classifier.logits(one).at(0));
  return s;
}

namespace {

SentimentScore score_one(const LexiconClassifier& c, const std::string& text, Transform transform, Scope scope) {
  SentimentScore s;
  s.transform = transform;
  s.scope = scope;
  s.backend_id = c.id();
  if (blank(text)) {
    s.value = 0.5;
    s.neutral_empty = true;
  } else {
    s.value = apply_transform(transform, lexicon_logits(text, c.lexicon()));
  }
  return s;
}

}  // namespace

std::vector<SentimentScore> score_texts_serial(const LexiconClassifier& classifier, std::span<const std::string> texts,
                                               Transform transform, Scope scope) {
  std::vector<SentimentScore> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(score_one(classifier, t, transform, scope));
  return out;
}

std::vector<SentimentScore> score_texts_parallel(const LexiconClassifier& classifier,
                                                 std::span<const std::string> texts, Transform transform, Scope scope) {
  std::vector<SentimentScore> out(texts.size());
  const auto n = static_cast<std::ptrdiff_t>(texts.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = score_one(classifier, texts[i], transform, scope);
  return out;
}

}  // namespace biasgrid
