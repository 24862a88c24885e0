#include "biasgrid/generation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include "biasgrid/error.hpp"
#include "biasgrid/hashing.hpp"
#include "internal/http_client.hpp"

namespace biasgrid {
namespace {

using nlohmann::json;

constexpr char kJoin = '\x1f';

std::string join_context(std::span<const std::string> words) {
  std::string key;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) key += kJoin;
    key += words[i];
  }
  return key;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string error_text(const detail::HttpResult& r) {
  if (r.status == 0) return "transport error: " + r.transport_error;
  try {
    auto body = json::parse(r.body);
    if (body.contains("error")) return "HTTP " + std::to_string(r.status) + ": " + body["error"].get<std::string>();
  } catch (const json::exception&) {
  }
  return "HTTP " + std::to_string(r.status);
}

}  // namespace

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[i] = digits[v & 0xF];
  return out;
}

void GenParams::validate() const {
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (samples_per_prompt < 1) throw ConfigError("samples_per_prompt must be >= 1");
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::http:
      return "http";
    case BackendKind::replay:
      return "replay";
    case BackendKind::ngram:
      return "ngram";
  }
  return "?";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "http") return BackendKind::http;
  if (text == "replay") return BackendKind::replay;
  if (text == "ngram") return BackendKind::ngram;
  throw ConfigError("unknown backend kind '" + std::string(text) + "'");
}

void BackendDescriptor::validate() const {
  if (model_id.empty()) throw ConfigError("backend: model_id is required");
  if (location.empty()) throw ConfigError("backend '" + model_id + "': location is required");
  if (params_size_millions && !(*params_size_millions > 0)) {
    throw ConfigError("backend '" + model_id + "': params_size_millions must be > 0");
  }
  if (training_gb && !(*training_gb > 0)) throw ConfigError("backend '" + model_id + "': training_gb must be > 0");
  if (kind == BackendKind::ngram && ngram_order < 1) throw ConfigError("backend '" + model_id + "': order must be >= 1");
}

// ---------------------------------------------------------------------------
// n-gram fallback

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

NgramModel::NgramModel(std::span<const std::string> corpus, int order) : order_(order) {
  if (order < 1) throw DomainError("ngram order must be >= 1");
  if (corpus.empty()) throw DomainError("ngram corpus is empty");
  bool any = false;
  for (const auto& sentence : corpus) {
    const auto words = split_words(sentence);
    if (words.empty()) continue;
    any = true;
    const std::size_t n = words.size();
    // Position n is the end marker.
    for (std::size_t i = 0; i <= n; ++i) {
      const std::string next = i < n ? words[i] : std::string();
      if (order_ == 1) {
        ++table_[std::string()][next];
        continue;
      }
      const std::size_t max_len = std::min<std::size_t>(order_ - 1, i);
      for (std::size_t len = 1; len <= max_len; ++len) {
        ++table_[join_context(std::span(words).subspan(i - len, len))][next];
      }
      if (i > 0 && i < n) transitions_.emplace(words[i - 1], words[i]);
    }
  }
  if (!any) throw DomainError("ngram corpus has no words");
}

std::vector<std::pair<std::string, int>> NgramModel::successors(std::span<const std::string> context) const {
  const std::map<std::string, int>* found = nullptr;
  if (order_ == 1) {
    found = &table_.at(std::string());
  } else {
    const std::size_t max_len = std::min<std::size_t>(order_ - 1, context.size());
    for (std::size_t len = max_len; len >= 1 && !found; --len) {
      auto it = table_.find(join_context(context.subspan(context.size() - len, len)));
      if (it != table_.end()) found = &it->second;
    }
  }
  if (!found) return {};
  return {found->begin(), found->end()};
}

std::string NgramModel::sample(std::string_view prompt, const GenParams& params, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  auto words = split_words(prompt);
  std::string continuation;
  for (int step = 0; step < params.max_new_tokens; ++step) {
    auto succ = successors(words);
    if (succ.empty()) break;
    // Highest count first; ties lexicographic (end marker sorts first).
    std::stable_sort(succ.begin(), succ.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (succ.size() > static_cast<std::size_t>(params.top_k)) succ.resize(params.top_k);
    long total = 0;
    for (const auto& [_, c] : succ) total += c;
    const double target = uniform01(rng) * static_cast<double>(total);
    double acc = 0;
    std::size_t pick = succ.size() - 1;
    for (std::size_t i = 0; i < succ.size(); ++i) {
      acc += succ[i].second;
      if (target < acc) {
        pick = i;
        break;
      }
    }
    const std::string& next = succ[pick].first;
    if (next.empty()) break;
    continuation += ' ';
    continuation += next;
    words.push_back(next);
  }
  return continuation;
}

bool NgramModel::has_transition(std::string_view from, std::string_view to) const {
  return transitions_.contains({std::string(from), std::string(to)});
}

std::vector<std::string> ngram_generate(std::span<const std::string> corpus, int order, std::string_view prompt,
                                        const GenParams& params) {
  params.validate();
  const NgramModel model(corpus, order);
  std::vector<std::string> out;
  out.reserve(params.samples_per_prompt);
  for (int i = 0; i < params.samples_per_prompt; ++i) {
    out.push_back(model.sample(prompt, params, derive_seed(params.seed, prompt, i)));
  }
  return out;
}

NgramBackend::NgramBackend(std::vector<std::string> corpus, int order) : model_(corpus, order) {}

std::unique_ptr<NgramBackend> NgramBackend::from_file(const std::string& path, int order) {
  std::vector<std::string> lines;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  if (lines.empty()) throw BackendError("ngram corpus '" + path + "' is empty");
  return std::make_unique<NgramBackend>(std::move(lines), order);
}

std::vector<Sample> NgramBackend::generate(std::string_view, std::string_view prompt, const GenParams& params) {
  std::vector<Sample> out;
  out.reserve(params.samples_per_prompt);
  for (int i = 0; i < params.samples_per_prompt; ++i) {
    out.push_back({std::string(prompt) + model_.sample(prompt, params, derive_seed(params.seed, prompt, i)), params.seed});
  }
  return out;
}

// ---------------------------------------------------------------------------
// replay

std::unique_ptr<ReplayBackend> ReplayBackend::from_file(const std::string& path) { return from_lines(read_file(path)); }

std::unique_ptr<ReplayBackend> ReplayBackend::from_lines(std::string_view jsonl) {
  auto backend = std::unique_ptr<ReplayBackend>(new ReplayBackend());
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    const auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto obj = json::parse(line);
      Sample s{obj.at("sentence_raw").get<std::string>(), obj.value("seed", std::uint64_t{0})};
      backend->corpus_[{obj.at("model_id").get<std::string>(), obj.at("prompt").get<std::string>()}].push_back(
          std::move(s));
      ++backend->count_;
    } catch (const json::exception& e) {
      throw BackendError("replay corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return backend;
}

std::vector<Sample> ReplayBackend::generate(std::string_view model_id, std::string_view prompt,
                                            const GenParams& params) {
  auto it = corpus_.find({std::string(model_id), std::string(prompt)});
  if (it == corpus_.end()) {
    throw BackendError("replay corpus has no entry for (" + std::string(model_id) + ", \"" + std::string(prompt) + "\")");
  }
  const auto n = static_cast<std::size_t>(params.samples_per_prompt);
  if (it->second.size() < n) {
    throw BackendError("replay corpus holds " + std::to_string(it->second.size()) + " sentences for \"" +
                       std::string(prompt) + "\", " + std::to_string(n) + " requested");
  }
  return {it->second.begin(), it->second.begin() + static_cast<std::ptrdiff_t>(n)};
}

// ---------------------------------------------------------------------------
// http

HttpBackend::HttpBackend(std::string endpoint, int max_attempts, int backoff_ms)
    : endpoint_(std::move(endpoint)), max_attempts_(max_attempts), backoff_ms_(backoff_ms) {
  split_endpoint(endpoint_);
}

std::vector<Sample> HttpBackend::generate(std::string_view model_id, std::string_view prompt, const GenParams& params) {
  const json request = {{"model_id", model_id},         {"prompt", prompt}, {"max_new_tokens", params.max_new_tokens},
                        {"top_k", params.top_k},        {"top_p", params.top_p}, {"n", params.samples_per_prompt},
                        {"seed", params.seed}};
  const std::string body = request.dump();
  const auto result =
      detail::with_retries(max_attempts_, backoff_ms_, [&] { return detail::http_post_json(endpoint_, "/generate", body); });
  if (result.status < 200 || result.status >= 300) {
    throw BackendError("generate failed for \"" + std::string(prompt) + "\" on " + endpoint_ + ": " + error_text(result));
  }
  std::vector<Sample> out;
  try {
    const auto reply = json::parse(result.body);
    for (const auto& s : reply.at("sentences")) out.push_back({s.get<std::string>(), params.seed});
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /generate response: ") + e.what());
  }
  if (out.size() != static_cast<std::size_t>(params.samples_per_prompt)) {
    throw BackendError("malformed /generate response: expected " + std::to_string(params.samples_per_prompt) +
                       " sentences, got " + std::to_string(out.size()));
  }
  return out;
}

HealthInfo query_health(const std::string& endpoint) {
  const auto result = detail::with_retries(3, 100, [&] { return detail::http_get(endpoint, "/health"); });
  if (result.status != 200) throw BackendError("health check failed on " + endpoint + ": " + error_text(result));
  HealthInfo info;
  try {
    const auto body = json::parse(result.body);
    info.status = body.at("status").get<std::string>();
    const auto& models = body.at("models");
    for (std::size_t i = 0; i < models.size(); ++i) {
      ModelMetadata m;
      m.model_id = models[i].get<std::string>();
      // Size metadata may be keyed by model id or parallel to `models`.
      auto pick = [&](const char* field) -> double {
        if (!body.contains(field)) return 0.0;
        const auto& f = body[field];
        if (f.is_object()) return f.value(m.model_id, 0.0);
        if (f.is_array() && i < f.size()) return f[i].get<double>();
        return 0.0;
      };
      m.params_millions = pick("params_millions");
      m.training_gb = pick("training_gb");
      info.models.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed /health response: ") + e.what());
  }
  return info;
}

std::unique_ptr<GenerationBackend> make_backend(const BackendDescriptor& descriptor) {
  descriptor.validate();
  switch (descriptor.kind) {
    case BackendKind::http:
      return std::make_unique<HttpBackend>(descriptor.location);
    case BackendKind::replay:
      return ReplayBackend::from_file(descriptor.location);
    case BackendKind::ngram:
      return NgramBackend::from_file(descriptor.location, descriptor.ngram_order);
  }
  throw ConfigError("unknown backend kind");
}

std::vector<GeneratedRecord> generate_samples(GenerationBackend& backend, const BackendDescriptor& descriptor,
                                              const Prompt& prompt, const GenParams& params) {
  params.validate();
  auto samples = backend.generate(descriptor.model_id, prompt.surface, params);
  if (samples.size() != static_cast<std::size_t>(params.samples_per_prompt)) {
    throw BackendError("backend '" + descriptor.model_id + "' returned " + std::to_string(samples.size()) +
                       " samples, expected " + std::to_string(params.samples_per_prompt));
  }
  std::vector<GeneratedRecord> records;
  records.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    GeneratedRecord r;
    r.prompt = prompt;
    r.model_id = descriptor.model_id;
    r.sentence_raw = std::move(samples[i].sentence_raw);
    r.sample_index = static_cast<int>(i);
    r.seed = samples[i].seed;
    if (!r.sentence_raw.starts_with(prompt.surface)) {
      throw BackendError("backend '" + descriptor.model_id + "' returned a sentence not starting with \"" +
                         prompt.surface + "\"");
    }
    r.continuation = r.sentence_raw.substr(prompt.surface.size());
    records.push_back(std::move(r));
  }
  return records;
}

std::string strip_prompt(const GeneratedRecord& record) {
  if (!record.sentence_raw.starts_with(record.prompt.surface)) {
    throw DomainError("corrupt record: sentence does not begin with prompt \"" + record.prompt.surface + "\"");
  }
  return record.sentence_raw.substr(record.prompt.surface.size());
}

}  // namespace biasgrid
