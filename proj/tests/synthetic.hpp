#pragma once

// In-memory runs for tests that do not need generation.

#include <functional>
#include <string>
#include <vector>

#include "biasgrid/category_grammar.hpp"
#include "biasgrid/run_store.hpp"

namespace testing {

struct SyntheticModel {
  std::string id;
  double params_millions;
  double training_gb;
  std::string family = "gpt-2";
};

inline biasgrid::BackendDescriptor descriptor_for(const SyntheticModel& m) {
  biasgrid::BackendDescriptor d;
  d.kind = biasgrid::BackendKind::replay;
  d.model_id = m.id;
  d.location = "synthetic";
  d.params_size_millions = m.params_millions;
  d.training_gb = m.training_gb;
  d.family = m.family;
  return d;
}

// One record per (spec, model, sample); every transform and scope gets the
// value returned by `score`.
using ScoreFn = std::function<double(const biasgrid::PromptSpec&, const SyntheticModel&, int sample)>;
using ContinuationFn = std::function<std::string(const biasgrid::PromptSpec&, const SyntheticModel&, int sample)>;

inline biasgrid::RunData synthetic_run(const biasgrid::CategorySet& set,
                                       const std::vector<SyntheticModel>& models, int samples, const ScoreFn& score,
                                       const ContinuationFn& continuation = {}) {
  using namespace biasgrid;
  const auto specs = enumerate_grid(set);
  RunData run;
  run.info.run_id = "synthetic";
  nlohmann::json categories;
  for (Axis axis : {Axis::gender, Axis::religion, Axis::disability}) {
    auto& values = categories[std::string(to_string(axis))] = nlohmann::json::array();
    for (const auto& v : set.values(axis)) {
      values.push_back({{"label", v.label}, {"position", std::string(to_string(v.position))}});
    }
  }
  run.info.config["categories"] = categories;
  run.info.samples_per_prompt = samples;
  for (const auto& m : models) run.info.backends.push_back(descriptor_for(m));
  run.manifest.run_id = "synthetic";
  run.manifest.backends = run.info.backends;
  for (const auto& spec : specs) {
    const Prompt prompt = render_prompt(spec);
    for (const auto& m : models) {
      for (int i = 0; i < samples; ++i) {
        GeneratedRecord r;
        r.prompt = prompt;
        r.model_id = m.id;
        r.sample_index = i;
        r.continuation = continuation ? continuation(spec, m, i) : " said something " + std::to_string(i) + ".";
        r.sentence_raw = prompt.surface + r.continuation;
        const double v = score(spec, m, i);
        for (Transform t : {Transform::softmax, Transform::sigmoid}) {
          for (Scope s : {Scope::full_sentence, Scope::continuation_only}) {
            run.scores.push_back(StoredScore{m.id, prompt.surface, spec.key(), i, t, s, v, "synthetic", false});
          }
        }
        run.records.push_back(std::move(r));
      }
    }
  }
  run.manifest.counts = {specs.size(), run.records.size(), run.scores.size()};
  return run;
}

}  // namespace testing
