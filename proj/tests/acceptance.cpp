// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 on any
// failure. `--update-golden` rewrites the frozen end-to-end tables instead.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biasgrid/error.hpp"
#include "biasgrid/experiments.hpp"
#include "biasgrid/report.hpp"
#include "biasgrid/topics.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace biasgrid;

namespace {

// Tolerances and budgets.
constexpr double kStatTol = 1e-8;
constexpr double kPTol = 1e-6;
constexpr double kIdentityTol = 1e-10;
constexpr double kTransformTol = 1e-12;
constexpr double kUnigramTol = 1e-9;
constexpr double kNormTol = 1e-9;
constexpr double kPurity = 0.9;
constexpr double kSlopeTol = 0.02;

struct Check {
  std::ostringstream notes;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) notes << "failed: " << what << "; ";
    ok = ok && cond;
  }
  void close(double got, double want, double tol, const std::string& what) {
    const double err = std::fabs(got - want);
    if (!(err <= tol * std::max(1.0, std::fabs(want)))) {
      expect(false, what + " got " + std::to_string(got) + " want " + std::to_string(want));
    }
  }
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<void(Check&)> body;
};

// ---------------------------------------------------------------------------

void grid_correctness(Check& c) {
  const auto set = default_categories();
  const auto grid = enumerate_grid(set);
  c.expect(grid.size() == 280, "280 prompts");
  const auto triples = triple_specs(grid, TripleSet::full_combinations);
  c.expect(triples.size() == 216, "216 triples");
  std::set<std::string> surfaces;
  for (const auto& spec : grid) {
    surfaces.insert(render_prompt(spec).surface);
    if (spec.arity() == 0) {
      bool threw = false;
      try {
        subsets_of(spec);
      } catch (const DomainError&) {
        threw = true;
      }
      c.expect(threw, "subsets_of rejects the all-null cell");
      continue;
    }
    const auto subs = subsets_of(spec);
    c.expect(subs.size() == (std::size_t{1} << spec.arity()) - 1, "2^arity - 1 subsets");
    c.expect(std::find(subs.begin(), subs.end(), spec) == subs.end(), "subsets exclude the input");
  }
  c.expect(surfaces.size() == 280, "distinct surfaces");
  c.notes << grid.size() << " prompts, " << triples.size() << " triples";
}

std::vector<double> fixture(std::size_t n, double mean, double sd, std::uint64_t seed) {
  return testing::normal_sample(n, mean, sd, seed);
}

void statistics_oracles(Check& c) {
  // Five fixtures per test; sizes and spreads vary so the Welch dof differs.
  for (std::uint64_t f = 0; f < 5; ++f) {
    const auto a = fixture(8 + 5 * f, 0.4, 0.05 + 0.02 * f, 100 + f);
    const auto b = fixture(12 + 3 * f, 0.42 + 0.01 * f, 0.08, 200 + f);
    const auto w = welch_t(a, b);
    const auto wo = oracle::welch(a, b);
    c.close(w.statistic, wo.t, kStatTol, "welch t");
    c.close(w.dof, wo.dof, kStatTol, "welch dof");
    c.close(w.p_value, wo.p, kPTol, "welch p");

    std::vector<std::vector<double>> groups;
    for (std::uint64_t g = 0; g < 3 + f; ++g) groups.push_back(fixture(6 + g, 0.3 + 0.02 * g * f, 0.1, 300 + 10 * f + g));
    const auto an = one_way_anova(groups);
    const auto ao = oracle::anova(groups);
    c.close(an.statistic, ao.f, kStatTol, "anova F");
    c.close(an.p_value, ao.p, kPTol, "anova p");

    const auto x = fixture(20 + 4 * f, 0.0, 1.0, 400 + f);
    auto y = fixture(20 + 4 * f, 0.0, 1.0, 500 + f);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.3 * static_cast<double>(f) * x[i];
    const auto pr = pearson_r(x, y);
    const auto po = oracle::pearson(x, y);
    c.close(pr.statistic, po.t, kStatTol, "pearson r");
    c.close(pr.p_value, po.p, kPTol, "pearson p");

    const std::size_t n = 30 + 10 * f, p = 2 + f % 3;
    std::mt19937_64 rng(600 + f);
    std::normal_distribution<double> noise(0.0, 0.1);
    Matrix design(n, p);
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    std::vector<double> resp(n);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
      resp[i] = 0.5 + noise(rng);
      for (std::size_t j = 0; j < p; ++j) {
        rows[i][j] = design(i, j) = std::uniform_real_distribution<double>(0, 10)(rng);
        resp[i] += (0.1 * (j + 1) - 0.25) * rows[i][j];
      }
    }
    const auto ols = ols_regress(design, resp, names, OlsOptions{.standardize = false});
    const auto oo = oracle::ols(rows, resp);
    for (std::size_t k = 0; k <= p; ++k) {
      c.close(ols.coefficients[k].coef, oo.coef[k], kStatTol, "ols coef");
      c.close(ols.coefficients[k].std_error, oo.se[k], kStatTol, "ols se");
      c.close(ols.coefficients[k].t, oo.t[k], kStatTol, "ols t");
      c.close(ols.coefficients[k].p, oo.p[k], kPTol, "ols p");
    }
    c.close(ols.r_squared, oo.r2, kStatTol, "ols r2");
  }

  double factorial = 1.0;
  for (int k = 1; k <= 20; ++k) {
    c.close(ln_gamma(k + 1.0), std::log(factorial *= k), kIdentityTol, "ln_gamma factorial");
  }
  c.expect(std::fabs(ln_gamma(1.0)) < kIdentityTol && std::fabs(ln_gamma(2.0)) < kIdentityTol, "ln_gamma(1), ln_gamma(2)");
  for (double a : {0.5, 1.5, 4.0}) {
    for (double b : {0.7, 2.0, 9.0}) {
      for (double x : {0.05, 0.3, 0.5, 0.9}) {
        c.close(reg_inc_beta(a, b, x), 1.0 - reg_inc_beta(b, a, 1.0 - x), kIdentityTol, "beta symmetry");
      }
    }
  }
  for (double dof : {1.0, 2.5, 7.0, 30.0, 1e4}) c.close(t_cdf(0.0, dof), 0.5, kIdentityTol, "t_cdf(0)");
  c.notes << "5 fixtures each for welch/anova/pearson/ols";
}

void transform_identity(Check& c) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logit(-15.0, 15.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const LogitPair l{logit(rng), logit(rng)};
    worst = std::max(worst, std::fabs(softmax_score(l) - sigmoid_score(l)));
  }
  c.expect(worst <= kTransformTol, "max |softmax - sigmoid| <= 1e-12");
  c.notes << "10000 pairs, max difference " << worst;
}

void intersectional_scan_fixture(Check& c) {
  const auto set = default_categories();
  const auto grid = enumerate_grid(set);
  const PromptSpec target{set.gender[1], set.religion[4], set.disability[1]};
  c.expect(render_prompt(target).surface == "A blind Hindu woman", "fixture target");

  CellScores planted;
  std::uint64_t seed = 1000;
  for (const auto& spec : grid) planted[spec.key()] = fixture(100, 0.3, 0.05, seed++);
  planted[target.key()] = fixture(100, 0.1, 0.05, 1);
  const auto report = intersectional_scan(planted, grid);
  bool flagged = false;
  for (const auto& e : report.triples) {
    if (e.spec == target) flagged = e.lower_than_all_singles_and_pairs && e.lower_than_all_singles;
  }
  c.expect(flagged, "planted triple flagged lower than all singles and pairs");

  CellScores identical;
  const auto shared = fixture(100, 0.3, 0.05, 5);
  for (const auto& spec : grid) identical[spec.key()] = shared;
  const auto none = intersectional_scan(identical, grid);
  const auto& t = none.triple_counts;
  const auto& p = none.pair_counts;
  c.expect(t.lower_than_all_singles + t.higher_than_all_singles + t.lower_than_all_singles_and_pairs +
                   t.higher_than_all_singles_and_pairs + p.lower_than_all_singles + p.higher_than_all_singles ==
               0,
           "no flags on identical distributions");
  c.notes << report.triple_counts.evaluated << " triples and " << report.pair_counts.evaluated << " pairs evaluated";
}

// ---------------------------------------------------------------------------
// End-to-end

std::map<std::string, std::string> golden_tables(const RunData& run, const ExperimentPlan& plan) {
  std::map<std::string, std::string> out;
  const auto t = plan.transform;
  const auto s = plan.scope;
  out["models"] = emit(aggregate_means(run, {}, t, s), Format::csv);
  out["gender"] = emit(aggregate_means(run, {Axis::gender}, t, s), Format::csv);
  out["religion"] = emit(aggregate_means(run, {Axis::religion}, t, s), Format::csv);
  out["disability"] = emit(aggregate_means(run, {Axis::disability}, t, s), Format::csv);
  out["scan"] = emit(scan_table(intersectional_scan(pooled_cells(run, t, s), enumerate_grid(plan.categories), plan.scan)),
                     Format::csv);
  out["regression"] = emit(regression_table(run_regression(run, t, s)), Format::csv);
  out["ranks"] = emit(ranks_table(rank_combinations(run, 10, std::nullopt, t, s)), Format::csv);
  return out;
}

std::filesystem::path golden_dir() { return testing::data_path("fixtures/golden"); }

std::map<std::string, std::string> replay_tables(const std::filesystem::path& runs_root) {
  auto plan = load_plan_file(testing::data_path("fixtures/replay_plan.yaml"));
  plan.runs_root = runs_root;
  const auto audit = run_grid_audit(plan);
  return golden_tables(load_run(audit.dir), plan);
}

void end_to_end(Check& c) {
  testing::TempDir tmp;
  const auto first = replay_tables(tmp / "first");
  const auto second = replay_tables(tmp / "second");
  c.expect(first == second, "two runs give byte-identical tables");
  for (const auto& [name, text] : first) {
    const auto path = golden_dir() / (name + ".csv");
    c.expect(std::filesystem::exists(path), "golden file " + path.string());
    c.expect(testing::read_file(path) == text, name + " table equals golden");
  }
  c.notes << first.size() << " tables compared";
}

// ---------------------------------------------------------------------------

const std::vector<std::string> kSpace = {"planet", "galaxy", "orbit", "comet", "nebula", "rocket", "asteroid", "telescope"};
const std::vector<std::string> kKitchen = {"butter", "flour", "recipe", "spoon", "kettle", "pastry", "saucepan", "whisk"};

std::vector<std::string> disjoint_docs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> docs;
  for (std::size_t d = 0; d < n; ++d) {
    const auto& vocab = d % 2 ? kKitchen : kSpace;
    std::string doc;
    for (int w = 0; w < 12; ++w) doc += vocab[rng() % vocab.size()] + " ";
    docs.push_back(doc);
  }
  return docs;
}

void lda(Check& c) {
  {
    const auto corpus = preprocess(disjoint_docs(40, 3));
    LdaParams p;
    p.topics = 1;
    p.passes = 5;
    const auto model = lda_fit(corpus, p);
    const auto freq = word_frequencies(corpus);
    const double n = static_cast<double>(corpus.token_count()), v = static_cast<double>(corpus.vocab.size());
    for (std::size_t w = 0; w < corpus.vocab.size(); ++w) {
      const double want = (static_cast<double>(freq.at(corpus.vocab[w])) + p.beta) / (n + v * p.beta);
      c.expect(std::fabs(model.phi_at(0, w) - want) < kUnigramTol, "K=1 equals smoothed unigram");
    }
  }
  {
    const auto corpus = preprocess(disjoint_docs(200, 17));
    std::set<std::string> space;
    for (const auto& w : kSpace)
      for (const auto& t : preprocess_tokens(w)) space.insert(t);
    LdaParams p;
    p.topics = 2;
    p.passes = 15;
    p.seed = 42;
    const auto model = lda_fit(corpus, p);
    // Purity: share of each topic's probability mass on its majority vocabulary.
    double worst = 1.0;
    for (int k = 0; k < 2; ++k) {
      double on_space = 0.0;
      for (std::size_t w = 0; w < corpus.vocab.size(); ++w) {
        if (space.count(corpus.vocab[w])) on_space += model.phi_at(k, w);
      }
      worst = std::min(worst, std::max(on_space, 1.0 - on_space));
    }
    c.expect(worst >= kPurity, "disjoint fixture purity >= 0.9");
    c.notes << "purity " << worst << "; ";
  }
  {
    const auto corpus = preprocess(disjoint_docs(500, 23));
    LdaParams p;
    p.topics = 5;
    const double alpha = 50.0 / p.topics;
    int sweeps = 0;
    bool normalized = true;
    lda_fit(corpus, p, [&](const GibbsState& s) {
      ++sweeps;
      std::vector<double> phi, theta;
      normalize_counts(*s.word_topic, *s.topic_totals, *s.doc_topic, *s.doc_lengths, p.topics, corpus.vocab.size(),
                       alpha, p.beta, phi, theta);
      const std::size_t v = corpus.vocab.size();
      for (int k = 0; k < p.topics; ++k) {
        double sum = 0.0;
        for (std::size_t w = 0; w < v; ++w) sum += phi[static_cast<std::size_t>(k) * v + w];
        normalized = normalized && std::fabs(sum - 1.0) < kNormTol;
      }
      for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        double sum = 0.0;
        for (int k = 0; k < p.topics; ++k) sum += theta[d * static_cast<std::size_t>(p.topics) + k];
        normalized = normalized && std::fabs(sum - 1.0) < kNormTol;
      }
    });
    c.expect(sweeps == p.passes, "one observer call per sweep");
    c.expect(normalized, "phi and theta normalized every sweep");
    c.notes << "500 documents, " << sweeps << " sweeps";
  }
}

// ---------------------------------------------------------------------------

void regression_pipeline(Check& c) {
  const std::vector<testing::SyntheticModel> models = {{"small", 124, 40}, {"large", 1558, 40}, {"neo", 125, 800}};
  std::mt19937_64 rng(2021);
  std::uniform_int_distribution<int> words(1, 30);
  auto run = testing::synthetic_run(
      default_categories(), models, 5, [](const auto&, const auto&, int) { return 0.0; },
      [&](const auto&, const auto&, int) {
        std::string s;
        for (int w = words(rng); w > 0; --w) s += " word";
        return s + ".";
      });
  std::vector<double> lengths;
  for (const auto& r : run.records) lengths.push_back(utf8_length(r.sentence_raw));
  const auto standardized = minmax_standardize(lengths);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const double v = 0.5 - 0.3 * standardized[i] + noise(rng);
    for (std::size_t k = 0; k < 4; ++k) run.scores[4 * i + k].value = v;
  }
  const auto result = run_regression(run, Transform::softmax, Scope::full_sentence);
  const Coefficient* slope = nullptr;
  const Coefficient* largest = nullptr;
  for (std::size_t i = 1; i < result.coefficients.size(); ++i) {
    const auto& coef = result.coefficients[i];
    if (coef.name == "sentence_length") slope = &coef;
    if (!largest || std::fabs(coef.coef) > std::fabs(largest->coef)) largest = &coef;
  }
  c.expect(slope != nullptr, "sentence_length present");
  if (!slope) return;
  c.expect(std::fabs(slope->coef + 0.3) <= kSlopeTol, "sentence_length coefficient within 0.02 of -0.3");
  c.expect(largest == slope, "sentence_length is the largest-magnitude slope");
  c.notes << "sentence_length " << slope->coef << ", n " << result.n;
}

// ---------------------------------------------------------------------------

ExperimentPlan resume_plan(const std::filesystem::path& root) {
  auto plan = load_plan_file(testing::data_path("fixtures/replay_plan.yaml"));
  plan.runs_root = root;
  plan.run_id = "resume";
  return plan;
}

// Runs in a forked child that SIGKILLs itself once half the pairs are
// persisted. Must run before the parent process starts OpenMP threads.
bool killed_half_run(const std::filesystem::path& root) {
  std::fflush(nullptr);
  const pid_t pid = fork();
  if (pid == 0) {
    run_grid_audit(resume_plan(root), {std::nullopt, [](std::size_t done, std::size_t total) {
                                         if (2 * done >= total) ::kill(::getpid(), SIGKILL);
                                       }});
    _exit(0);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
}

struct ResumeEvidence {
  bool killed = false;
};

void crash_resume(Check& c, const testing::TempDir& tmp, const ResumeEvidence& evidence) {
  c.expect(evidence.killed, "child run was killed mid-way");
  const auto interrupted_dir = run_dir(tmp / "killed", "resume");
  c.expect(!std::filesystem::exists(interrupted_dir / "manifest.json"), "killed run has no manifest");
  const auto partial = load_records(interrupted_dir).size();
  const auto resumed = run_grid_audit(resume_plan(tmp / "killed"));
  const auto full = run_grid_audit(resume_plan(tmp / "full"));
  c.expect(resumed.manifest && full.manifest, "both runs finalized");
  if (!resumed.manifest || !full.manifest) return;
  c.expect(to_json(*resumed.manifest).dump() == to_json(*full.manifest).dump(), "manifests identical");
  c.expect(resumed.pairs_skipped > 0, "resume skipped completed pairs");
  c.notes << partial << " records survived the kill, " << resumed.pairs_skipped << " pairs skipped on resume";
}

int update_golden() {
  testing::TempDir tmp;
  std::filesystem::create_directories(golden_dir());
  for (const auto& [name, text] : replay_tables(tmp.path())) {
    testing::write_file(golden_dir() / (name + ".csv"), text);
    std::printf("wrote %s\n", (golden_dir() / (name + ".csv")).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && std::string(argv[1]) == "--update-golden") return update_golden();

  testing::TempDir resume_root;
  ResumeEvidence evidence;
  evidence.killed = killed_half_run(resume_root / "killed");

  const std::vector<Criterion> criteria = {
      {"grid correctness", 1.0, grid_correctness},
      {"statistics oracle suite", 5.0, statistics_oracles},
      {"transform identity", 5.0, transform_identity},
      {"intersectional scan", 10.0, intersectional_scan_fixture},
      {"end-to-end determinism", 60.0, end_to_end},
      {"LDA", 30.0, lda},
      {"regression pipeline", 10.0, regression_pipeline},
      {"crash-resume", 60.0, [&](Check& c) { crash_resume(c, resume_root, evidence); }},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > criterion.budget_seconds) {
      check.expect(false, "runtime " + std::to_string(seconds) + " s over budget");
    }
    failures += check.ok ? 0 : 1;
    std::printf("%s  %-26s %7.3fs / %4.0fs  %s\n", check.ok ? "PASS" : "FAIL", criterion.name.c_str(), seconds,
                criterion.budget_seconds, check.notes.str().c_str());
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
