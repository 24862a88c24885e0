#include "biasgrid/scan.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <variant>

#include "biasgrid/error.hpp"

namespace biasgrid {
namespace {

struct Verdict {
  bool lower = true;
  bool higher = true;
};

using Outcome = std::variant<ScanEntry, std::string>;

// Folds one comparison into the running "lower/higher than all" verdict.
void compare(const std::vector<double>& candidate, double cand_mean, const std::vector<double>& other, double alpha,
             Verdict& v) {
  const auto t = welch_t(candidate, other);
  const bool significant = t.p_value < alpha;
  v.lower = v.lower && significant && cand_mean < t.mean_b;
  v.higher = v.higher && significant && cand_mean > t.mean_b;
}

Outcome evaluate(const PromptSpec& spec, const CellScores& cells, double alpha, bool with_pairs) {
  auto find = [&](const PromptSpec& s) -> const std::vector<double>* {
    auto it = cells.find(s.key());
    if (it == cells.end() || it->second.size() < 2) return nullptr;
    return &it->second;
  };
  const auto* own = find(spec);
  if (!own) return std::string("no scores for the prompt itself");

  std::vector<const std::vector<double>*> singles, pairs;
  for (const auto& sub : subsets_of(spec)) {
    if (sub.arity() == 0) continue;
    const auto* d = find(sub);
    if (!d) return "missing subset " + render_prompt(sub).surface;
    (sub.arity() == 1 ? singles : pairs).push_back(d);
  }
  if (singles.empty()) return std::string("no single-marker subsets");

  ScanEntry e;
  e.spec = spec;
  e.surface = render_prompt(spec).surface;
  e.mean = mean(*own);
  double sm = 0.0;
  for (const auto* s : singles) sm += mean(*s);
  e.singles_mean = sm / static_cast<double>(singles.size());

  Verdict vs;
  for (const auto* s : singles) compare(*own, e.mean, *s, alpha, vs);
  e.lower_than_all_singles = vs.lower;
  e.higher_than_all_singles = vs.higher;
  // Person-headed triples have no pair subsets; the verdict is the singles one.
  if (with_pairs) {
    Verdict vp = vs;
    for (const auto* p : pairs) compare(*own, e.mean, *p, alpha, vp);
    e.lower_than_all_singles_and_pairs = vp.lower;
    e.higher_than_all_singles_and_pairs = vp.higher;
  }
  return e;
}

void tally(ScanCounts& c, const ScanEntry& e) {
  ++c.evaluated;
  c.lower_than_all_singles += e.lower_than_all_singles;
  c.higher_than_all_singles += e.higher_than_all_singles;
  c.lower_than_all_singles_and_pairs += e.lower_than_all_singles_and_pairs;
  c.higher_than_all_singles_and_pairs += e.higher_than_all_singles_and_pairs;
}

struct Candidates {
  std::vector<PromptSpec> specs;
  std::size_t n_triples = 0;
};

Candidates candidates(const std::vector<PromptSpec>& grid, TripleSet which) {
  Candidates c;
  c.specs = triple_specs(grid, which);
  c.n_triples = c.specs.size();
  std::set<std::string> taken;
  for (const auto& s : c.specs) taken.insert(s.key());
  for (const auto& s : grid) {
    if (s.arity() == 2 && !taken.count(s.key())) c.specs.push_back(s);
  }
  return c;
}

// Merges outcomes in candidate order, so the result is independent of how
// the outcomes were computed.
ScanReport assemble(const Candidates& c, std::vector<Outcome>& outcomes) {
  ScanReport report;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const bool triple = i < c.n_triples;
    if (auto* reason = std::get_if<std::string>(&outcomes[i])) {
      report.skipped.emplace_back(render_prompt(c.specs[i]).surface, std::move(*reason));
      continue;
    }
    auto& e = std::get<ScanEntry>(outcomes[i]);
    if (triple) {
      tally(report.triple_counts, e);
      report.triples.push_back(std::move(e));
    } else {
      tally(report.pair_counts, e);
      report.pairs.push_back(std::move(e));
    }
  }
  return report;
}

}  // namespace

double percent(std::size_t count, std::size_t of) {
  return of == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(of);
}

ScanReport intersectional_scan_serial(const CellScores& cells, const std::vector<PromptSpec>& grid, ScanOptions options) {
  const auto c = candidates(grid, options.triple_set);
  std::vector<Outcome> outcomes;
  outcomes.reserve(c.specs.size());
  for (std::size_t i = 0; i < c.specs.size(); ++i) {
    outcomes.push_back(evaluate(c.specs[i], cells, options.alpha, i < c.n_triples));
  }
  return assemble(c, outcomes);
}

ScanReport intersectional_scan(const CellScores& cells, const std::vector<PromptSpec>& grid, ScanOptions options) {
  const auto c = candidates(grid, options.triple_set);
  std::vector<Outcome> outcomes(c.specs.size());
  const auto n = static_cast<std::ptrdiff_t>(c.specs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      outcomes[i] = evaluate(c.specs[i], cells, options.alpha, static_cast<std::size_t>(i) < c.n_triples);
    } catch (const std::exception& e) {
      outcomes[i] = std::string(e.what());
    }
  }
  return assemble(c, outcomes);
}

// ---------------------------------------------------------------------------

std::string_view to_string(ModelGrouping g) { return g == ModelGrouping::size ? "size" : "type"; }

ModelGrouping parse_grouping(std::string_view text) {
  if (text == "size") return ModelGrouping::size;
  if (text == "type") return ModelGrouping::type;
  throw ConfigError("unknown model grouping '" + std::string(text) + "'");
}

std::vector<NullDeltaResult> null_delta_comparison(const std::vector<ModelCells>& models,
                                                   const std::vector<PromptSpec>& grid, Axis axis,
                                                   const std::vector<std::string>& values, ModelGrouping grouping) {
  if (models.empty()) throw DomainError("null_delta_comparison: no models");

  // Group membership: false = group a, true = group b.
  std::vector<bool> in_b(models.size());
  std::string name_a, name_b;
  if (grouping == ModelGrouping::size) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      if (!(models[i].params_millions > 0)) {
        throw DomainError("null_delta_comparison: model '" + models[i].model_id + "' lacks parameter-count metadata");
      }
      in_b[i] = models[i].params_millions >= kSmallModelMillions;
    }
    name_a = "small(<500M)";
    name_b = "large";
  } else {
    // Two families; group b is the one trained on more data.
    std::map<std::string, double> families;
    for (const auto& m : models) {
      const std::string fam = m.family.empty() ? m.model_id : m.family;
      families[fam] = std::max(families[fam], m.training_gb);
    }
    if (families.size() != 2) {
      throw DomainError("null_delta_comparison: type grouping needs exactly 2 model families, got " +
                        std::to_string(families.size()));
    }
    auto first = families.begin(), second = std::next(first);
    if (second->second < first->second) std::swap(first, second);
    name_a = first->first;
    name_b = second->first;
    for (std::size_t i = 0; i < models.size(); ++i) {
      in_b[i] = (models[i].family.empty() ? models[i].model_id : models[i].family) == name_b;
    }
  }
  if (std::none_of(in_b.begin(), in_b.end(), [](bool b) { return b; }) ||
      std::all_of(in_b.begin(), in_b.end(), [](bool b) { return b; })) {
    throw DomainError("null_delta_comparison: both model groups must be non-empty");
  }

  const std::string null_label = axis == Axis::gender ? std::string(kNeutralGender) : std::string();
  std::vector<NullDeltaResult> results;
  for (const auto& value : values) {
    std::vector<double> deltas_a, deltas_b;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      for (const auto& spec : grid) {
        if (spec.value(axis).label != value) continue;
        PromptSpec null_spec = spec;
        CategoryValue& slot = axis == Axis::gender     ? null_spec.gender
                              : axis == Axis::religion ? null_spec.religion
                                                       : null_spec.disability;
        slot.label = null_label;
        if (axis == Axis::gender) slot.position = Position::noun_head;
        else slot.position = Position::pre_noun;
        const auto& cells = models[mi].cells;
        auto vit = cells.find(spec.key());
        auto nit = cells.find(null_spec.key());
        if (vit == cells.end() || vit->second.empty()) continue;
        if (nit == cells.end() || nit->second.empty()) {
          throw DomainError("null_delta_comparison: no null-marker scores for context of '" + spec.key() + "' in " +
                            models[mi].model_id);
        }
        const double d = mean(vit->second) - mean(nit->second);
        (in_b[mi] ? deltas_b : deltas_a).push_back(d);
      }
    }
    if (deltas_a.empty() && deltas_b.empty()) {
      throw DomainError("null_delta_comparison: no scores for value '" + value + "'");
    }
    NullDeltaResult r;
    r.value = value;
    r.axis = axis;
    r.grouping = grouping;
    r.group_a = name_a;
    r.group_b = name_b;
    r.n_a = deltas_a.size();
    r.n_b = deltas_b.size();
    r.test = welch_t(deltas_a, deltas_b);
    std::vector<double> all(deltas_a);
    all.insert(all.end(), deltas_b.begin(), deltas_b.end());
    const double gap = mean(all);
    const double sign = gap < 0 ? -1.0 : 1.0;
    r.test.statistic = -r.test.statistic * sign + 0.0;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace biasgrid
