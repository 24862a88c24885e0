#include "biasgrid/experiments.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include "biasgrid/error.hpp"

namespace biasgrid {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr Transform kTransforms[] = {Transform::softmax, Transform::sigmoid};
constexpr Scope kScopes[] = {Scope::full_sentence, Scope::continuation_only};
constexpr Axis kAxes[] = {Axis::gender, Axis::religion, Axis::disability};

// Plain YAML scalars are typed by content; quoted ones stay strings.
json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string text = node.Scalar();
  if (node.Tag() == "!") return text;
  if (text == "~" || text == "null") return nullptr;
  if (text == "true") return true;
  if (text == "false") return false;
  if (!text.empty()) {
    std::size_t used = 0;
    try {
      const long long i = std::stoll(text, &used);
      if (used == text.size()) return i;
    } catch (const std::exception&) {
    }
    try {
      const double d = std::stod(text, &used);
      if (used == text.size()) return d;
    } catch (const std::exception&) {
    }
  }
  return text;
}

json categories_to_json(const CategorySet& set) {
  json out = json::object();
  for (Axis axis : kAxes) {
    json arr = json::array();
    for (const auto& v : set.values(axis)) {
      arr.push_back({{"label", v.label}, {"position", std::string(to_string(v.position))}});
    }
    out[std::string(to_string(axis))] = arr;
  }
  return out;
}

json spec_to_json(const PromptSpec& spec) {
  return {{"gender", spec.gender.label}, {"religion", spec.religion.label}, {"disability", spec.disability.label}};
}

const CategoryValue& find_value(const CategorySet& set, Axis axis, const std::string& label) {
  for (const auto& v : set.values(axis)) {
    if (v.label == label) return v;
  }
  throw ConfigError("label '" + label + "' is not a " + std::string(to_string(axis)) + " value");
}

PromptSpec spec_from_json(const json& j, const CategorySet& set) {
  if (!j.is_object()) throw ConfigError("prompt spec must be a mapping");
  auto label = [&](const char* key, std::string fallback) {
    return j.contains(key) && !j[key].is_null() ? j[key].get<std::string>() : fallback;
  };
  return {find_value(set, Axis::gender, label("gender", std::string(kNeutralGender))),
          find_value(set, Axis::religion, label("religion", "")),
          find_value(set, Axis::disability, label("disability", ""))};
}

std::string resolve(const std::string& location, const fs::path& base) {
  if (location.empty() || location.starts_with("http://") || location.starts_with("https://")) return location;
  const fs::path p(location);
  return (p.is_absolute() ? p : (base / p)).lexically_normal().string();
}

BackendDescriptor backend_from_plan(json j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("backend entries must be mappings");
  if (!j.contains("location")) {
    if (j.contains("endpoint")) j["location"] = j["endpoint"];
    if (j.contains("path")) j["location"] = j["path"];
  }
  if (j.contains("params_millions") && !j.contains("params_size_millions")) j["params_size_millions"] = j["params_millions"];
  if (!j.contains("kind") || !j.contains("model_id")) throw ConfigError("backend entries need 'kind' and 'model_id'");
  auto d = descriptor_from_json(j);
  if (d.kind != BackendKind::http) d.location = resolve(d.location, base);
  d.validate();
  return d;
}

ExperimentPlan plan_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("plan: document must be a mapping");
  ExperimentPlan plan;
  try {
    plan.kind = parse_plan_kind(j.value("kind", std::string("grid")));
    plan.run_id = j.value("run_id", plan.run_id);
    if (j.contains("runs_root")) plan.runs_root = resolve(j["runs_root"].get<std::string>(), base);

    if (j.contains("categories_file")) {
      plan.categories = load_category_config_file(resolve(j["categories_file"].get<std::string>(), base));
    } else if (j.contains("categories") && !j["categories"].is_null()) {
      plan.categories = load_category_config(j["categories"].dump());
    }

    if (j.contains("generation")) {
      const auto& g = j["generation"];
      plan.gen.max_new_tokens = g.value("max_new_tokens", plan.gen.max_new_tokens);
      plan.gen.top_k = g.value("top_k", plan.gen.top_k);
      plan.gen.top_p = g.value("top_p", plan.gen.top_p);
      plan.gen.samples_per_prompt = g.value("samples_per_prompt", plan.gen.samples_per_prompt);
      plan.gen.seed = g.value("seed", plan.gen.seed);
    }
    if (j.contains("seed")) plan.gen.seed = j["seed"].get<std::uint64_t>();

    if (j.contains("backends")) {
      for (const auto& b : j["backends"]) plan.backends.push_back(backend_from_plan(b, base));
    }
    if (j.contains("classifier")) {
      const auto& c = j["classifier"];
      plan.classifier.kind = c.value("kind", plan.classifier.kind);
      plan.classifier.location = c.value("location", c.value("endpoint", std::string()));
      if (plan.classifier.kind == "lexicon") plan.classifier.location = resolve(plan.classifier.location, base);
    }
    plan.max_in_flight = j.value("max_in_flight", plan.max_in_flight);
    plan.chunk_size = j.value("chunk_size", plan.chunk_size);
    plan.prefix = j.value("prefix", plan.prefix);

    if (j.contains("report")) {
      const auto& r = j["report"];
      plan.transform = parse_transform(r.value("transform", std::string("softmax")));
      plan.scope = parse_scope(r.value("scope", std::string("full_sentence")));
    }
    if (j.contains("scan")) {
      const auto& s = j["scan"];
      plan.scan.alpha = s.value("alpha", plan.scan.alpha);
      if (s.contains("triple_set")) {
        const auto& t = s["triple_set"];
        plan.scan.triple_set = parse_triple_set(t.is_number() ? std::to_string(t.get<long long>()) : t.get<std::string>());
      }
    }
    if (j.contains("prefixes")) plan.prefixes = j["prefixes"].get<std::vector<std::string>>();
    if (j.contains("swap_pairs")) {
      for (const auto& p : j["swap_pairs"]) {
        plan.swap_pairs.push_back({p.at("identity_first").get<std::string>(), p.at("person_first").get<std::string>()});
      }
    }
    if (j.contains("few_shot") || plan.kind == PlanKind::few_shot) {
      const json f = j.value("few_shot", json::object());
      plan.neutral = spec_from_json(f.value("neutral", json::object()), plan.categories);
      plan.target = f.contains("target") ? spec_from_json(f["target"], plan.categories) : plan.neutral;
      plan.shots = f.value("shots", plan.shots);
      plan.few_shot_samples = f.value("samples", plan.few_shot_samples);
      plan.few_shot_model = f.value("model_id", plan.few_shot_model);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

using PairOutcome = std::variant<std::vector<GeneratedRecord>, std::string>;

double pooled_mean(const CellScores& cells, const std::vector<PromptSpec>& grid,
                   const std::function<bool(const PromptSpec&)>& keep) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& spec : grid) {
    if (!keep(spec)) continue;
    auto it = cells.find(spec.key());
    if (it == cells.end()) continue;
    for (double v : it->second) sum += v;
    n += it->second.size();
  }
  if (n == 0) throw DomainError("no scores to average");
  return sum / static_cast<double>(n);
}

std::vector<double> values_with_label(const RunData& run, Axis axis, const std::string& label, Transform t, Scope s) {
  std::vector<double> out;
  for (const auto& o : observations(run, t, s)) {
    if (o.record->prompt.spec.value(axis).label == label) out.push_back(o.score);
  }
  return out;
}

ExperimentPlan sub_plan(const ExperimentPlan& plan, std::string run_id) {
  ExperimentPlan p = plan;
  p.kind = PlanKind::grid;
  p.run_id = std::move(run_id);
  return p;
}

}  // namespace

std::string_view to_string(PlanKind kind) {
  switch (kind) {
    case PlanKind::grid:
      return "grid";
    case PlanKind::prefix_counterfactual:
      return "prefix_counterfactual";
    case PlanKind::person_first_swap:
      return "person_first_swap";
    case PlanKind::few_shot:
      return "few_shot";
    case PlanKind::size_type_comparison:
      return "size_type_comparison";
  }
  return "?";
}

PlanKind parse_plan_kind(std::string_view text) {
  for (PlanKind k : {PlanKind::grid, PlanKind::prefix_counterfactual, PlanKind::person_first_swap, PlanKind::few_shot,
                     PlanKind::size_type_comparison}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown plan kind '" + std::string(text) + "'");
}

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec) {
  if (spec.kind == "lexicon") {
    if (spec.location.empty()) throw ConfigError("lexicon classifier needs a lexicon file");
    return std::make_unique<LexiconClassifier>(load_lexicon(spec.location));
  }
  if (spec.kind == "http") return std::make_unique<HttpClassifier>(spec.location);
  throw ConfigError("unknown classifier kind '" + spec.kind + "'");
}

std::vector<std::string> default_prefixes() {
  return {"", "Once upon a time, ", "In today's news, ", "Thankfully, ", "I am "};
}

void ExperimentPlan::validate() const {
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("plan: run_id must be a non-empty name without path separators");
  }
  gen.validate();
  biasgrid::validate(categories);
  if (backends.empty()) throw ConfigError("plan: at least one backend is required");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    b.validate();
    if (!ids.insert(b.model_id).second) throw ConfigError("plan: duplicate backend model_id '" + b.model_id + "'");
  }
  if (max_in_flight < 1) throw ConfigError("plan: max_in_flight must be >= 1");
  if (chunk_size < 1) throw ConfigError("plan: chunk_size must be >= 1");
  if (!(scan.alpha > 0.0 && scan.alpha < 1.0)) throw ConfigError("plan: scan alpha must lie in (0, 1)");
  switch (kind) {
    case PlanKind::grid:
    case PlanKind::size_type_comparison:
      break;
    case PlanKind::prefix_counterfactual:
      if (prefixes.empty()) throw ConfigError("plan: prefix_counterfactual needs at least one prefix");
      break;
    case PlanKind::person_first_swap:
      if (swap_pairs.empty()) throw ConfigError("plan: person_first_swap needs swap_pairs");
      apply_swaps(categories, swap_pairs);
      break;
    case PlanKind::few_shot:
      if (shots < 1) throw ConfigError("plan: few_shot shots must be >= 1");
      if (few_shot_samples < 2) throw ConfigError("plan: few_shot samples must be >= 2");
      if (!few_shot_model.empty() &&
          std::none_of(backends.begin(), backends.end(), [&](const auto& b) { return b.model_id == few_shot_model; })) {
        throw ConfigError("plan: few_shot model '" + few_shot_model + "' is not a configured backend");
      }
      break;
  }
}

json ExperimentPlan::snapshot() const {
  json backends_json = json::array();
  for (const auto& b : backends) backends_json.push_back(to_json(b));
  json pairs = json::array();
  for (const auto& p : swap_pairs) pairs.push_back({{"identity_first", p.identity_first}, {"person_first", p.person_first}});
  json out{{"kind", std::string(to_string(kind))},
              {"run_id", run_id},
              {"categories", categories_to_json(categories)},
              {"generation",
               {{"max_new_tokens", gen.max_new_tokens},
                {"top_k", gen.top_k},
                {"top_p", gen.top_p},
                {"samples_per_prompt", gen.samples_per_prompt},
                {"seed", gen.seed}}},
              {"backends", backends_json},
              {"classifier", {{"kind", classifier.kind}, {"location", classifier.location}}},
              {"prefix", prefix},
              {"report", {{"transform", std::string(to_string(transform))}, {"scope", std::string(to_string(scope))}}},
              {"scan",
               {{"alpha", scan.alpha},
                {"triple_set", scan.triple_set == TripleSet::full_combinations ? "full_combinations" : "disability_marked"}}},
              {"prefixes", prefixes},
              {"swap_pairs", pairs}};
  if (kind == PlanKind::few_shot) {
    out["few_shot"] = {{"neutral", spec_to_json(neutral)},
                       {"target", spec_to_json(target)},
                       {"shots", shots},
                       {"samples", few_shot_samples},
                       {"model_id", few_shot_model}};
  }
  return out;
}

ExperimentPlan load_plan(std::string_view source, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(source));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("plan: parse error: ") + e.what());
  }
  return plan_from_json(yaml_to_json(root), base_dir);
}

ExperimentPlan load_plan_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_plan(ss.str(), path.parent_path());
}

ExperimentPlan plan_from_snapshot(const json& snapshot) { return plan_from_json(snapshot, "."); }

// ---------------------------------------------------------------------------
// Grid audit

std::vector<StoredScore> score_records(Classifier& classifier, const std::vector<GeneratedRecord>& records) {
  const std::size_t n = records.size();
  // values[t][s][i]
  SentimentScore blank_score;
  std::vector<std::vector<std::vector<SentimentScore>>> values(2, std::vector<std::vector<SentimentScore>>(2));
  auto* lexicon = dynamic_cast<LexiconClassifier*>(&classifier);
  for (int si = 0; si < 2; ++si) {
    std::vector<std::string> texts;
    texts.reserve(n);
    for (const auto& r : records) texts.push_back(scoped_text(r, kScopes[si]));
    if (lexicon) {
      for (int ti = 0; ti < 2; ++ti) values[ti][si] = score_texts_parallel(*lexicon, texts, kTransforms[ti], kScopes[si]);
      continue;
    }
    // Remote classifiers get one batched request per scope; blank texts
    // keep the neutral convention without a round trip.
    std::vector<std::string> batch;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < n; ++i) {
      if (texts[i].find_first_not_of(" \t\r\n") == std::string::npos) continue;
      batch.push_back(texts[i]);
      where.push_back(i);
    }
    std::vector<LogitPair> logits;
    if (!batch.empty()) logits = classifier.logits(batch);
    if (logits.size() != batch.size()) {
      throw BackendError("classifier returned " + std::to_string(logits.size()) + " results for " +
                         std::to_string(batch.size()) + " texts");
    }
    for (int ti = 0; ti < 2; ++ti) {
      auto& out = values[ti][si];
      out.assign(n, SentimentScore{});
      for (std::size_t i = 0; i < n; ++i) {
        out[i].transform = kTransforms[ti];
        out[i].scope = kScopes[si];
        out[i].backend_id = classifier.id();
        out[i].value = 0.5;
        out[i].neutral_empty = true;
      }
      for (std::size_t b = 0; b < where.size(); ++b) {
        out[where[b]].value = apply_transform(kTransforms[ti], logits[b]);
        out[where[b]].neutral_empty = false;
      }
    }
  }
  std::vector<StoredScore> scores;
  scores.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    for (int ti = 0; ti < 2; ++ti) {
      for (int si = 0; si < 2; ++si) {
        const auto& v = values[ti][si][i];
        scores.push_back(StoredScore{r.model_id, r.prompt.surface, r.prompt.spec.key(), r.sample_index, v.transform,
                                     v.scope, v.value, v.backend_id, v.neutral_empty});
      }
    }
  }
  return scores;
}

AuditRun run_grid_audit(const ExperimentPlan& plan, const AuditHooks& hooks) {
  plan.validate();

  RunInfo info;
  info.run_id = plan.run_id;
  info.seed = plan.gen.seed;
  info.samples_per_prompt = plan.gen.samples_per_prompt;
  info.scores_per_record = 4;
  info.backends = plan.backends;
  info.config = plan.snapshot();
  auto store = RunStore::create(plan.runs_root, info);

  AuditRun run;
  run.run_id = plan.run_id;
  run.dir = store.dir();
  run.info = store.info();
  if (store.sealed()) {
    run.manifest = load_manifest(store.dir());
    return run;
  }

  std::vector<std::unique_ptr<GenerationBackend>> backends;
  for (const auto& d : plan.backends) backends.push_back(make_backend(d));
  std::vector<std::mutex> backend_locks(backends.size());
  auto classifier = make_classifier(plan.classifier);

  const auto grid = enumerate_grid(plan.categories);
  std::vector<Prompt> prompts;
  prompts.reserve(grid.size());
  for (const auto& spec : grid) prompts.push_back(render_prompt(spec, plan.prefix));

  struct Task {
    std::size_t prompt;
    std::size_t backend;
  };
  std::vector<std::pair<std::string, std::string>> planned;
  std::vector<Task> pending;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    for (std::size_t b = 0; b < backends.size(); ++b) {
      planned.emplace_back(prompts[p].surface, plan.backends[b].model_id);
      if (store.pair_complete(prompts[p].surface, plan.backends[b].model_id)) {
        ++run.pairs_skipped;
      } else {
        pending.push_back({p, b});
      }
    }
  }

  const std::size_t chunk = static_cast<std::size_t>(plan.chunk_size) * backends.size();
  for (std::size_t start = 0; start < pending.size(); start += chunk) {
    const std::size_t end = std::min(pending.size(), start + chunk);
    std::vector<PairOutcome> outcomes(end - start);

    std::atomic<std::size_t> next{start};
    auto worker = [&] {
      for (std::size_t i = next++; i < end; i = next++) {
        const auto& task = pending[i];
        auto& backend = *backends[task.backend];
        try {
          std::unique_lock<std::mutex> lock(backend_locks[task.backend], std::defer_lock);
          if (!backend.is_reentrant()) lock.lock();
          outcomes[i - start] = generate_samples(backend, plan.backends[task.backend], prompts[task.prompt], plan.gen);
        } catch (const std::exception& e) {
          outcomes[i - start] = std::string(e.what());
        }
      }
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(plan.max_in_flight), end - start);
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }

    // Scoring and persistence happen here, in grid order.
    for (std::size_t i = start; i < end; ++i) {
      const auto& task = pending[i];
      const auto& surface = prompts[task.prompt].surface;
      const auto& model_id = plan.backends[task.backend].model_id;
      auto& outcome = outcomes[i - start];
      if (auto* reason = std::get_if<std::string>(&outcome)) {
        store.record_failure({surface, model_id, *reason});
      } else {
        auto& records = std::get<std::vector<GeneratedRecord>>(outcome);
        std::vector<StoredScore> scores;
        try {
          scores = score_records(*classifier, records);
        } catch (const Error& e) {
          store.record_failure({surface, model_id, std::string("scoring: ") + e.what()});
          continue;
        }
        store.append_records(records);
        store.append_scores(scores);
      }
      ++run.pairs_processed;
      if (hooks.progress) hooks.progress(run.pairs_processed, pending.size());
      if (hooks.stop_after_pairs && run.pairs_processed >= *hooks.stop_after_pairs) return run;
    }
  }

  run.manifest = store.finalize(planned);
  return run;
}

// ---------------------------------------------------------------------------
// Prefix counterfactual

PrefixReport compare_prefix_runs(const std::vector<PromptSpec>& grid, const CategorySet& categories,
                                 const std::vector<PrefixRunScores>& runs) {
  if (runs.empty()) throw DomainError("compare_prefix_runs: no runs");
  auto summarize = [&](const PrefixRunScores& r) {
    PrefixShift s;
    s.prefix = r.prefix;
    s.run_id = r.run_id;
    s.overall_mean = pooled_mean(r.cells, grid, [](const PromptSpec&) { return true; });
    for (Axis axis : kAxes) {
      for (const auto& v : categories.values(axis)) {
        s.means.push_back({axis, v.label, pooled_mean(r.cells, grid, [&](const PromptSpec& spec) {
                             return spec.value(axis).label == v.label;
                           })});
      }
    }
    return s;
  };

  PrefixReport report;
  report.baseline_run_id = runs.front().run_id;
  const PrefixShift base = summarize(runs.front());
  for (const auto& r : runs) {
    PrefixShift s = summarize(r);
    s.overall_shift = s.overall_mean - base.overall_mean;
    for (std::size_t i = 0; i < s.means.size(); ++i) s.shifts.push_back(s.means[i].mean - base.means[i].mean);
    for (Axis axis : kAxes) {
      int flips = 0;
      for (std::size_t i = 0; i < s.means.size(); ++i) {
        for (std::size_t k = i + 1; k < s.means.size(); ++k) {
          if (s.means[i].axis != axis || s.means[k].axis != axis) continue;
          const double before = base.means[i].mean - base.means[k].mean;
          const double after = s.means[i].mean - s.means[k].mean;
          if (before * after < 0) ++flips;
        }
      }
      s.rank_reversals[axis] = flips;
    }
    report.prefixes.push_back(std::move(s));
  }
  return report;
}

PrefixReport run_prefix_counterfactual(const ExperimentPlan& plan) {
  std::vector<std::string> prefixes = plan.prefixes;
  auto blank = std::find(prefixes.begin(), prefixes.end(), std::string());
  if (blank == prefixes.end()) {
    prefixes.insert(prefixes.begin(), std::string());
  } else {
    std::rotate(prefixes.begin(), blank, blank + 1);
  }

  const auto grid = enumerate_grid(plan.categories);
  std::vector<PrefixRunScores> runs;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    ExperimentPlan p = sub_plan(plan, plan.run_id + "-prefix" + std::to_string(i));
    p.prefix = prefixes[i];
    const auto audit = run_grid_audit(p);
    const auto data = load_run(audit.dir);
    runs.push_back({prefixes[i], audit.run_id, pooled_cells(data, plan.transform, plan.scope)});
  }
  return compare_prefix_runs(grid, plan.categories, runs);
}

// ---------------------------------------------------------------------------
// Person-first swap

SwapResult compare_swap(const SwapPair& pair, std::span<const double> identity_first,
                        std::span<const double> person_first, double alpha) {
  SwapResult r;
  r.pair = pair;
  r.test = welch_t(identity_first, person_first);
  if (r.test.mean_b > r.test.mean_a) {
    r.direction = "person_first_higher";
  } else if (r.test.mean_b < r.test.mean_a) {
    r.direction = "identity_first_higher";
  } else {
    r.direction = "equal";
  }
  r.significant = r.test.p_value < alpha;
  return r;
}

CategorySet apply_swaps(const CategorySet& categories, const std::vector<SwapPair>& pairs) {
  CategorySet out = categories;
  for (const auto& p : pairs) {
    auto it = std::find_if(out.disability.begin(), out.disability.end(),
                           [&](const CategoryValue& v) { return v.is_marker() && v.label == p.identity_first; });
    if (it == out.disability.end()) {
      throw ConfigError("person-first swap: '" + p.identity_first + "' is not a disability label");
    }
    if (p.person_first.empty()) throw ConfigError("person-first swap: empty rewrite for '" + p.identity_first + "'");
    it->label = p.person_first;
    it->position = infer_position(Axis::disability, p.person_first);
  }
  validate(out);
  return out;
}

std::vector<SwapResult> run_person_first_swap(const ExperimentPlan& plan) {
  const auto swapped = apply_swaps(plan.categories, plan.swap_pairs);
  const auto base_audit = run_grid_audit(sub_plan(plan, plan.run_id + "-identity"));
  ExperimentPlan p = sub_plan(plan, plan.run_id + "-person");
  p.categories = swapped;
  const auto swap_audit = run_grid_audit(p);
  const auto base = load_run(base_audit.dir);
  const auto swap = load_run(swap_audit.dir);

  std::vector<SwapResult> out;
  for (const auto& pair : plan.swap_pairs) {
    const auto a = values_with_label(base, Axis::disability, pair.identity_first, plan.transform, plan.scope);
    const auto b = values_with_label(swap, Axis::disability, pair.person_first, plan.transform, plan.scope);
    out.push_back(compare_swap(pair, a, b, plan.scan.alpha));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Few-shot calibration

std::string build_calibrated_prompt(const std::vector<std::string>& shots, std::string_view target_surface) {
  std::string out;
  for (const auto& shot : shots) {
    const auto first = shot.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) continue;
    const auto last = shot.find_last_not_of(" \t\r\n");
    std::string s = shot.substr(first, last - first + 1);
    if (s.back() != '.') s += '.';
    out += s;
    out += '\n';
  }
  out += target_surface;
  return out;
}

CalibrationReport run_few_shot_calibration(const ExperimentPlan& plan) {
  plan.validate();
  const auto desc_it =
      plan.few_shot_model.empty()
          ? plan.backends.begin()
          : std::find_if(plan.backends.begin(), plan.backends.end(),
                         [&](const BackendDescriptor& b) { return b.model_id == plan.few_shot_model; });
  const BackendDescriptor& desc = *desc_it;
  auto backend = make_backend(desc);
  auto classifier = make_classifier(plan.classifier);

  GenParams params = plan.gen;
  params.samples_per_prompt = plan.few_shot_samples;
  GenParams neutral_params = params;
  neutral_params.samples_per_prompt = std::max(plan.shots, plan.few_shot_samples);

  const Prompt neutral = render_prompt(plan.neutral, plan.prefix);
  const Prompt target = render_prompt(plan.target, plan.prefix);
  auto neutral_records = generate_samples(*backend, desc, neutral, neutral_params);

  std::vector<std::string> shots;
  for (int i = 0; i < plan.shots; ++i) shots.push_back(neutral_records[static_cast<std::size_t>(i)].sentence_raw);
  neutral_records.resize(static_cast<std::size_t>(plan.few_shot_samples));

  Prompt calibrated = target;
  calibrated.surface = build_calibrated_prompt(shots, target.surface);
  const auto target_records = generate_samples(*backend, desc, target, params);
  auto calibrated_records = generate_samples(*backend, desc, calibrated, params);
  // The shots are conditioning only; what gets scored is the target prompt
  // and the continuation the model gave after it.
  for (auto& r : calibrated_records) {
    r.prompt = target;
    r.sentence_raw = target.surface + r.continuation;
  }

  auto score_all = [&](const std::vector<GeneratedRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) out.push_back(score_record(*classifier, r, plan.transform, plan.scope).value);
    return out;
  };
  const auto n_scores = score_all(neutral_records);
  const auto t_scores = score_all(target_records);
  const auto c_scores = score_all(calibrated_records);

  CalibrationReport report;
  report.model_id = desc.model_id;
  report.neutral = neutral.surface;
  report.target = target.surface;
  report.calibrated_prompt = calibrated.surface;
  report.shots = plan.shots;
  report.samples = plan.few_shot_samples;
  report.neutral_mean = mean(n_scores);
  report.target_mean = mean(t_scores);
  report.calibrated_mean = mean(c_scores);
  report.calibrated_vs_target = welch_t(t_scores, c_scores);
  return report;
}

// ---------------------------------------------------------------------------
// Regression and correlation

RegressionDataset assemble_regression_dataset(const RunData& run, Transform transform, Scope scope) {
  std::map<std::string, const BackendDescriptor*> meta;
  for (const auto& b : run.info.backends) meta[b.model_id] = &b;

  const auto obs = observations(run, transform, scope);
  const std::size_t n = obs.size();
  constexpr std::size_t p = std::size(kRegressionPredictors);
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  RegressionDataset ds;
  ds.response.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = *obs[i].record;
    auto it = meta.find(r.model_id);
    if (it == meta.end() || !it->second->params_size_millions || !it->second->training_gb) {
      throw DomainError("regression: model '" + r.model_id + "' lacks parameter-count or training-size metadata");
    }
    const auto& spec = r.prompt.spec;
    cols[0][i] = spec.gender.is_marker() ? 1.0 : 0.0;
    cols[1][i] = spec.disability.is_marker() ? 1.0 : 0.0;
    cols[2][i] = spec.religion.is_marker() ? 1.0 : 0.0;
    cols[3][i] = r.prompt.char_length;
    cols[4][i] = utf8_length(r.sentence_raw);
    cols[5][i] = *it->second->params_size_millions;
    cols[6][i] = *it->second->training_gb;
    ds.response[i] = obs[i].score;
  }
  ds.design = Matrix(n, p);
  for (std::size_t c = 0; c < p; ++c) {
    ds.names.emplace_back(kRegressionPredictors[c]);
    try {
      ds.design.set_column(c, minmax_standardize(cols[c]));
    } catch (const DomainError& e) {
      throw DomainError(std::string("regression: predictor '") + kRegressionPredictors[c] + "': " + e.what());
    }
  }
  return ds;
}

RegressionResult run_regression(const RunData& run, Transform transform, Scope scope) {
  const auto ds = assemble_regression_dataset(run, transform, scope);
  return ols_regress(ds.design, ds.response, ds.names, OlsOptions{.standardize = false});
}

std::vector<NamedTest> correlation_report(const RunData& run, Transform transform, Scope scope) {
  const auto obs = observations(run, transform, scope);
  std::vector<double> prompt_len, terms, sentence_len, score;
  for (const auto& o : obs) {
    prompt_len.push_back(o.record->prompt.char_length);
    terms.push_back(o.record->prompt.term_count);
    sentence_len.push_back(utf8_length(o.record->sentence_raw));
    score.push_back(o.score);
  }
  return {{"prompt_length~score", pearson_r(prompt_len, score)},
          {"term_count~score", pearson_r(terms, score)},
          {"sentence_length~score", pearson_r(sentence_len, score)},
          {"prompt_length~sentence_length", pearson_r(prompt_len, sentence_len)}};
}

std::vector<NamedTest> axis_anova(const RunData& run, Transform transform, Scope scope) {
  const auto categories = run_categories(run);
  const auto obs = observations(run, transform, scope);
  std::vector<NamedTest> out;
  for (Axis axis : kAxes) {
    std::vector<std::vector<double>> groups;
    for (const auto& v : categories.values(axis)) {
      std::vector<double> g;
      for (const auto& o : obs) {
        if (o.record->prompt.spec.value(axis).label == v.label) g.push_back(o.score);
      }
      if (!g.empty()) groups.push_back(std::move(g));
    }
    out.push_back({std::string(to_string(axis)), one_way_anova(groups)});
  }
  return out;
}

CellScores pooled_cells(const RunData& run, Transform transform, Scope scope) {
  CellScores cells;
  for (const auto& o : observations(run, transform, scope)) cells[o.record->prompt.spec.key()].push_back(o.score);
  return cells;
}

std::vector<ModelCells> model_cells(const RunData& run, Transform transform, Scope scope) {
  std::vector<ModelCells> out;
  std::map<std::string, std::size_t> index;
  for (const auto& b : run.info.backends) {
    index[b.model_id] = out.size();
    out.push_back({b.model_id, b.params_size_millions.value_or(0.0), b.training_gb.value_or(0.0), b.family, {}});
  }
  for (const auto& o : observations(run, transform, scope)) {
    auto it = index.find(o.record->model_id);
    if (it == index.end()) throw StoreError("record from unknown model '" + o.record->model_id + "'");
    out[it->second].cells[o.record->prompt.spec.key()].push_back(o.score);
  }
  return out;
}

CategorySet run_categories(const RunData& run) {
  const auto& c = run.info.config;
  if (!c.contains("categories")) throw StoreError("run '" + run.info.run_id + "' has no category snapshot");
  return load_category_config(c["categories"].dump());
}

}  // namespace biasgrid
