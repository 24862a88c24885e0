#include "biasgrid/run_store.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

#include "biasgrid/error.hpp"
#include "biasgrid/hashing.hpp"

namespace biasgrid {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSep = '\x1f';

std::string pair_key(std::string_view prompt, std::string_view model_id) {
  std::string k(prompt);
  k += kSep;
  k += model_id;
  return k;
}

std::string record_key(const GeneratedRecord& r) {
  return pair_key(r.prompt.surface, r.model_id) + kSep + std::to_string(r.sample_index);
}

std::string score_key(const StoredScore& s) {
  std::string k = pair_key(s.prompt, s.model_id);
  k += kSep;
  k += std::to_string(s.sample_index);
  k += kSep;
  k += to_string(s.transform);
  k += kSep;
  k += to_string(s.scope);
  return k;
}

json value_json(const CategoryValue& v) { return {{"label", v.label}, {"position", std::string(to_string(v.position))}}; }

CategoryValue value_from_json(const json& j, Axis axis) {
  CategoryValue v;
  v.label = j.at("label").get<std::string>();
  v.position = parse_position(j.at("position").get<std::string>());
  v.axis = axis;
  return v;
}

void write_json_file(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StoreError("cannot write '" + tmp.string() + "'");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw StoreError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StoreError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw StoreError("malformed '" + path.string() + "': " + e.what());
  }
}

std::ofstream open_append(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw StoreError("cannot open '" + path.string() + "' for append");
  return out;
}

void flush_or_throw(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw StoreError("write failed for '" + path.string() + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Serialization

json to_json(const BackendDescriptor& d) {
  json j{{"kind", std::string(to_string(d.kind))},
         {"location", d.location},
         {"model_id", d.model_id},
         {"family", d.family},
         {"ngram_order", d.ngram_order}};
  j["params_size_millions"] = d.params_size_millions ? json(*d.params_size_millions) : json(nullptr);
  j["training_gb"] = d.training_gb ? json(*d.training_gb) : json(nullptr);
  return j;
}

BackendDescriptor descriptor_from_json(const json& j) {
  BackendDescriptor d;
  d.kind = parse_backend_kind(j.at("kind").get<std::string>());
  d.location = j.value("location", std::string());
  d.model_id = j.at("model_id").get<std::string>();
  d.family = j.value("family", std::string());
  d.ngram_order = j.value("ngram_order", 3);
  if (j.contains("params_size_millions") && !j["params_size_millions"].is_null()) {
    d.params_size_millions = j["params_size_millions"].get<double>();
  }
  if (j.contains("training_gb") && !j["training_gb"].is_null()) d.training_gb = j["training_gb"].get<double>();
  return d;
}

json to_json(const GeneratedRecord& r) {
  const auto& s = r.prompt.spec;
  return json{{"model_id", r.model_id},
              {"prompt", r.prompt.surface},
              {"sample_index", r.sample_index},
              {"sentence_raw", r.sentence_raw},
              {"continuation", r.continuation},
              {"seed", r.seed},
              {"prefix", r.prompt.prefix},
              {"spec",
               {{"gender", value_json(s.gender)},
                {"religion", value_json(s.religion)},
                {"disability", value_json(s.disability)}}},
              {"char_length", r.prompt.char_length},
              {"term_count", r.prompt.term_count}};
}

GeneratedRecord record_from_json(const json& j) {
  GeneratedRecord r;
  r.model_id = j.at("model_id").get<std::string>();
  r.prompt.surface = j.at("prompt").get<std::string>();
  r.sample_index = j.at("sample_index").get<int>();
  r.sentence_raw = j.at("sentence_raw").get<std::string>();
  r.continuation = j.value("continuation", std::string());
  r.seed = j.value("seed", std::uint64_t{0});
  r.prompt.prefix = j.value("prefix", std::string());
  const auto& spec = j.at("spec");
  r.prompt.spec.gender = value_from_json(spec.at("gender"), Axis::gender);
  r.prompt.spec.religion = value_from_json(spec.at("religion"), Axis::religion);
  r.prompt.spec.disability = value_from_json(spec.at("disability"), Axis::disability);
  r.prompt.char_length = j.value("char_length", 0);
  r.prompt.term_count = j.value("term_count", 0);
  return r;
}

json to_json(const StoredScore& s) {
  return json{{"model_id", s.model_id},
              {"prompt", s.prompt},
              {"spec", s.spec_key},
              {"sample_index", s.sample_index},
              {"transform", std::string(to_string(s.transform))},
              {"scope", std::string(to_string(s.scope))},
              {"value", s.value},
              {"backend_id", s.backend_id},
              {"neutral_empty", s.neutral_empty}};
}

StoredScore score_from_json(const json& j) {
  StoredScore s;
  s.model_id = j.at("model_id").get<std::string>();
  s.prompt = j.at("prompt").get<std::string>();
  s.spec_key = j.at("spec").get<std::string>();
  s.sample_index = j.at("sample_index").get<int>();
  s.transform = parse_transform(j.at("transform").get<std::string>());
  s.scope = parse_scope(j.at("scope").get<std::string>());
  s.value = j.at("value").get<double>();
  s.backend_id = j.value("backend_id", std::string());
  s.neutral_empty = j.value("neutral_empty", false);
  return s;
}

json to_json(const Failure& f) { return json{{"prompt", f.prompt}, {"model_id", f.model_id}, {"reason", f.reason}}; }

static Failure failure_from_json(const json& j) {
  return Failure{j.at("prompt").get<std::string>(), j.at("model_id").get<std::string>(),
                 j.value("reason", std::string())};
}

json to_json(const RunManifest& m) {
  json backends = json::array();
  for (const auto& b : m.backends) backends.push_back(to_json(b));
  json failures = json::array();
  for (const auto& f : m.failures) failures.push_back(to_json(f));
  return json{{"run_id", m.run_id},
              {"config_hash", m.config_hash},
              {"backends", backends},
              {"counts", {{"prompts", m.counts.prompts}, {"records", m.counts.records}, {"scores", m.counts.scores}}},
              {"failures", failures},
              {"seed", m.seed}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  for (const auto& b : j.at("backends")) m.backends.push_back(descriptor_from_json(b));
  const auto& c = j.at("counts");
  m.counts = {c.at("prompts").get<std::size_t>(), c.at("records").get<std::size_t>(), c.at("scores").get<std::size_t>()};
  for (const auto& f : j.at("failures")) m.failures.push_back(failure_from_json(f));
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

json to_json(const RunInfo& info) {
  json backends = json::array();
  for (const auto& b : info.backends) backends.push_back(to_json(b));
  return json{{"run_id", info.run_id},
              {"created_at", info.created_at},
              {"seed", info.seed},
              {"samples_per_prompt", info.samples_per_prompt},
              {"scores_per_record", info.scores_per_record},
              {"backends", backends},
              {"config", info.config},
              {"config_hash", config_hash(info.config)}};
}

RunInfo run_info_from_json(const json& j) {
  RunInfo info;
  info.run_id = j.at("run_id").get<std::string>();
  info.created_at = j.value("created_at", std::string());
  info.seed = j.at("seed").get<std::uint64_t>();
  info.samples_per_prompt = j.at("samples_per_prompt").get<int>();
  info.scores_per_record = j.value("scores_per_record", 4);
  for (const auto& b : j.at("backends")) info.backends.push_back(descriptor_from_json(b));
  info.config = j.value("config", json::object());
  return info;
}

std::string config_hash(const json& config) {
  // nlohmann objects keep keys sorted, so dump() is already canonical.
  return hex64(fnv1a64(config.dump()));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Reading

std::vector<json> read_jsonl(const fs::path& path, bool repair) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  in.close();

  std::size_t complete = text.size();
  if (!text.empty() && text.back() != '\n') {
    const auto nl = text.rfind('\n');
    complete = nl == std::string::npos ? 0 : nl + 1;
    if (repair) fs::resize_file(path, complete);
  }
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < complete) {
    const auto end = text.find('\n', pos);
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw StoreError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

fs::path run_dir(const fs::path& root, const std::string& run_id) { return root / run_id; }

RunInfo load_run_info(const fs::path& dir) { return run_info_from_json(read_json_file(dir / "run.json")); }

RunManifest load_manifest(const fs::path& dir) { return manifest_from_json(read_json_file(dir / "manifest.json")); }

std::vector<GeneratedRecord> load_records(const fs::path& dir) {
  std::vector<GeneratedRecord> out;
  for (const auto& j : read_jsonl(dir / "records.jsonl")) {
    try {
      out.push_back(record_from_json(j));
    } catch (const std::exception& e) {
      throw StoreError("bad record in " + dir.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<StoredScore> load_scores(const fs::path& dir) {
  std::vector<StoredScore> out;
  for (const auto& j : read_jsonl(dir / "scores.jsonl")) {
    try {
      out.push_back(score_from_json(j));
    } catch (const std::exception& e) {
      throw StoreError("bad score in " + dir.string() + ": " + e.what());
    }
  }
  return out;
}

ScoreDistribution select_distribution(std::span<const StoredScore> scores, const DistributionKey& key) {
  ScoreDistribution d;
  d.key = key;
  const std::string spec = key.spec.key();
  for (const auto& s : scores) {
    if (s.spec_key == spec && s.model_id == key.model_id && s.transform == key.transform && s.scope == key.scope) {
      d.values.push_back(s.value);
    }
  }
  if (d.values.empty()) throw StoreError("no scores stored for " + key.to_string());
  return d;
}

ScoreDistribution load_distribution(const fs::path& dir, const DistributionKey& key) {
  const auto scores = load_scores(dir);
  return select_distribution(scores, key);
}

RunData load_run(const fs::path& dir) {
  RunData run;
  run.dir = dir;
  run.info = load_run_info(dir);
  if (!fs::exists(dir / "manifest.json")) {
    throw StoreError("run '" + run.info.run_id + "' is not finalized (no manifest.json)");
  }
  run.manifest = load_manifest(dir);
  run.records = load_records(dir);
  run.scores = load_scores(dir);
  return run;
}

std::vector<Observation> observations(const RunData& run, Transform transform, Scope scope) {
  std::unordered_map<std::string, double> by_key;
  by_key.reserve(run.scores.size());
  for (const auto& s : run.scores) {
    if (s.transform != transform || s.scope != scope) continue;
    by_key.emplace(pair_key(s.prompt, s.model_id) + kSep + std::to_string(s.sample_index), s.value);
  }
  std::vector<Observation> out;
  out.reserve(run.records.size());
  for (const auto& r : run.records) {
    auto it = by_key.find(record_key(r));
    if (it == by_key.end()) {
      throw StoreError("record (" + r.prompt.surface + ", " + r.model_id + ", " + std::to_string(r.sample_index) +
                       ") has no " + std::string(to_string(transform)) + "/" + std::string(to_string(scope)) +
                       " score");
    }
    out.push_back({&r, it->second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Writing

RunStore RunStore::create(const fs::path& root, RunInfo info) {
  if (info.run_id.empty() || info.run_id.find_first_of("/\\") != std::string::npos || info.run_id == "." ||
      info.run_id == "..") {
    throw StoreError("invalid run id '" + info.run_id + "'");
  }
  const fs::path dir = run_dir(root, info.run_id);
  if (fs::exists(dir / "run.json")) {
    const auto existing = load_run_info(dir);
    if (config_hash(existing.config) != config_hash(info.config)) {
      throw StoreError("run '" + info.run_id + "' already exists with a different configuration");
    }
    return open(root, info.run_id);
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw StoreError("cannot create '" + dir.string() + "': " + ec.message());
  if (info.created_at.empty()) info.created_at = utc_timestamp();
  write_json_file(dir / "run.json", to_json(info));
  return open(root, info.run_id);
}

RunStore RunStore::open(const fs::path& root, const std::string& run_id) {
  RunStore store;
  store.dir_ = run_dir(root, run_id);
  if (!fs::exists(store.dir_ / "run.json")) throw StoreError("no run '" + run_id + "' under " + root.string());
  store.info_ = load_run_info(store.dir_);
  store.sealed_ = fs::exists(store.dir_ / "manifest.json");
  store.load_existing();
  if (!store.sealed_) {
    store.records_out_ = open_append(store.dir_ / "records.jsonl");
    store.scores_out_ = open_append(store.dir_ / "scores.jsonl");
    store.failures_out_ = open_append(store.dir_ / "failures.jsonl");
  }
  return store;
}

void RunStore::load_existing() {
  const bool repair = !sealed_;
  for (const auto& j : read_jsonl(dir_ / "records.jsonl", repair)) {
    const auto r = record_from_json(j);
    if (record_keys_.insert(record_key(r)).second) {
      ++records_per_pair_[pair_key(r.prompt.surface, r.model_id)];
      prompts_.insert(r.prompt.surface);
    }
  }
  for (const auto& j : read_jsonl(dir_ / "scores.jsonl", repair)) {
    const auto s = score_from_json(j);
    if (score_keys_.insert(score_key(s)).second) ++scores_per_pair_[pair_key(s.prompt, s.model_id)];
  }
  for (const auto& j : read_jsonl(dir_ / "failures.jsonl", repair)) failures_.push_back(failure_from_json(j));
}

void RunStore::require_open() const {
  if (sealed_) throw StoreError("run '" + info_.run_id + "' is sealed");
}

std::size_t RunStore::append_records(std::span<const GeneratedRecord> records) {
  require_open();
  std::string buf;
  std::size_t written = 0;
  std::unordered_set<std::string> batch;
  for (const auto& r : records) {
    auto key = record_key(r);
    if (record_keys_.count(key) || !batch.insert(key).second) {
      ++duplicates_;
      continue;
    }
    buf += to_json(r).dump();
    buf += '\n';
    ++written;
  }
  records_out_ << buf;
  flush_or_throw(records_out_, dir_ / "records.jsonl");
  for (const auto& r : records) {
    if (batch.count(record_key(r)) && record_keys_.insert(record_key(r)).second) {
      ++records_per_pair_[pair_key(r.prompt.surface, r.model_id)];
      prompts_.insert(r.prompt.surface);
    }
  }
  return written;
}

std::size_t RunStore::append_scores(std::span<const StoredScore> scores) {
  require_open();
  std::string buf;
  std::size_t written = 0;
  std::unordered_set<std::string> batch;
  for (const auto& s : scores) {
    auto key = score_key(s);
    if (score_keys_.count(key) || !batch.insert(key).second) {
      ++duplicates_;
      continue;
    }
    buf += to_json(s).dump();
    buf += '\n';
    ++written;
  }
  scores_out_ << buf;
  flush_or_throw(scores_out_, dir_ / "scores.jsonl");
  for (const auto& s : scores) {
    if (batch.count(score_key(s)) && score_keys_.insert(score_key(s)).second) {
      ++scores_per_pair_[pair_key(s.prompt, s.model_id)];
    }
  }
  return written;
}

void RunStore::record_failure(const Failure& failure) {
  require_open();
  failures_out_ << to_json(failure).dump() << '\n';
  flush_or_throw(failures_out_, dir_ / "failures.jsonl");
  failures_.push_back(failure);
}

bool RunStore::pair_complete(std::string_view prompt, std::string_view model_id) const {
  const auto key = pair_key(prompt, model_id);
  const auto n = static_cast<std::size_t>(info_.samples_per_prompt);
  auto r = records_per_pair_.find(key);
  if (r == records_per_pair_.end() || r->second < n) return false;
  auto s = scores_per_pair_.find(key);
  return s != scores_per_pair_.end() && s->second >= r->second * static_cast<std::size_t>(info_.scores_per_record);
}

RunManifest RunStore::finalize(const std::vector<std::pair<std::string, std::string>>& planned) {
  if (sealed_) return load_manifest(dir_);

  // A failure only counts if the pair never completed (a resumed run may
  // have retried it successfully). Keep one reason per pair, the latest.
  std::map<std::pair<std::string, std::string>, std::string> open_failures;
  for (const auto& f : failures_) {
    if (!pair_complete(f.prompt, f.model_id)) open_failures[{f.prompt, f.model_id}] = f.reason;
  }
  for (const auto& [prompt, model] : planned) {
    if (!pair_complete(prompt, model) && !open_failures.count({prompt, model})) {
      throw StoreError("cannot finalize run '" + info_.run_id + "': (" + prompt + ", " + model + ") is pending");
    }
  }

  RunManifest m;
  m.run_id = info_.run_id;
  m.config_hash = config_hash(info_.config);
  m.backends = info_.backends;
  m.counts = {prompts_.size(), record_keys_.size(), score_keys_.size()};
  for (auto& [k, reason] : open_failures) m.failures.push_back({k.first, k.second, reason});
  m.seed = info_.seed;

  records_out_.close();
  scores_out_.close();
  failures_out_.close();
  write_json_file(dir_ / "manifest.json", to_json(m));
  sealed_ = true;
  return m;
}

}  // namespace biasgrid
