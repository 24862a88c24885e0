// biasgrid: command-line front end for audits, reports and topic exports.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "biasgrid/category_grammar.hpp"
#include "biasgrid/error.hpp"
#include "biasgrid/experiments.hpp"
#include "biasgrid/report.hpp"
#include "biasgrid/run_store.hpp"
#include "biasgrid/scan.hpp"
#include "biasgrid/topics.hpp"

namespace fs = std::filesystem;
using namespace biasgrid;

namespace {

struct RunSelection {
  std::string run_id;
  std::string runs_root = "runs";
  std::string transform = "softmax";
  std::string scope = "full_sentence";

  void add_to(CLI::App* app) {
    app->add_option("--run", run_id, "Run id")->required();
    app->add_option("--runs-root", runs_root, "Directory holding runs/<id>")->capture_default_str();
    app->add_option("--transform", transform, "softmax or sigmoid")->capture_default_str();
    app->add_option("--scope", scope, "full_sentence or continuation_only")->capture_default_str();
  }
  RunData load() const { return load_run(run_dir(runs_root, run_id)); }
};

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StoreError("cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> prompt_texts(const RunData& run, const std::string& prompt, const std::string& model,
                                      Scope scope) {
  std::vector<std::string> texts;
  for (const auto& r : run.records) {
    if (r.prompt.surface != prompt) continue;
    if (!model.empty() && r.model_id != model) continue;
    texts.push_back(scope == Scope::full_sentence ? r.sentence_raw : r.continuation);
  }
  if (texts.empty()) throw DomainError("no records for prompt \"" + prompt + "\"");
  return texts;
}

void print_manifest(const AuditRun& run) {
  if (!run.manifest) {
    std::cout << "run " << run.run_id << " stopped after " << run.pairs_processed << " pairs (not finalized)\n";
    return;
  }
  const auto& m = *run.manifest;
  std::cout << "run " << m.run_id << " at " << run.dir.string() << ": " << m.counts.prompts << " prompts, "
            << m.counts.records << " records, " << m.counts.scores << " scores, " << m.failures.size()
            << " failures (config " << m.config_hash << ")\n";
  for (const auto& f : m.failures) std::cout << "  failed: " << f.prompt << " / " << f.model_id << ": " << f.reason << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-grid bias audits for causal language models"};
  app.require_subcommand(1);

  std::string plan_path;
  std::string format_text = "md";
  std::string out_path;

  // grid
  auto* grid = app.add_subcommand("grid", "Run (or resume) a full grid audit");
  std::optional<std::size_t> stop_after;
  bool quiet = false;
  grid->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
  grid->add_option("--stop-after", stop_after, "Stop after this many (prompt, model) pairs without finalizing");
  grid->add_flag("--quiet", quiet, "No progress output");

  auto* prefix = app.add_subcommand("prefix", "Prefix counterfactual runs");
  prefix->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
  prefix->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();

  auto* swap = app.add_subcommand("swap", "Identity-first vs person-first phrasing");
  swap->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
  swap->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();

  auto* few_shot = app.add_subcommand("few-shot", "Few-shot calibration");
  few_shot->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
  few_shot->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();

  auto* size_type = app.add_subcommand("size-type", "Null-marker deltas between model groups");
  std::string grouping_text = "size";
  size_type->add_option("--plan", plan_path, "Plan file")->required()->check(CLI::ExistingFile);
  size_type->add_option("--grouping", grouping_text, "size or type")->capture_default_str();
  size_type->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();

  // report
  auto* report = app.add_subcommand("report", "Emit one table of a finished run");
  RunSelection sel;
  sel.add_to(report);
  std::string table_name;
  std::size_t top_n = 10;
  std::optional<int> arity;
  double alpha = 0.001;
  std::string triple_set_text = "full_combinations";
  report->add_option("--table", table_name, "Table to emit")
      ->required()
      ->check(CLI::IsMember({"models", "gender", "religion", "disability", "ranks", "scan", "intersectional",
                             "regression", "null-delta", "correlations", "anova"}));
  report->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();
  report->add_option("-n,--top", top_n, "Prompts per list for ranks")->capture_default_str();
  report->add_option("--arity", arity, "Restrict ranks to prompts with this many markers");
  report->add_option("--grouping", grouping_text, "size or type, for null-delta")->capture_default_str();
  report->add_option("--alpha", alpha, "Significance level for the scan")->capture_default_str();
  report->add_option("--triple-set", triple_set_text, "full_combinations (216) or disability_marked (252)")
      ->capture_default_str();
  report->add_option("-o,--out", out_path, "Output file (default stdout)");

  auto* summary_cmd = app.add_subcommand("summary", "Markdown summary organized by hypothesis");
  RunSelection sum_sel;
  sum_sel.add_to(summary_cmd);
  summary_cmd->add_option("--alpha", alpha, "Significance level")->capture_default_str();
  summary_cmd->add_option("-o,--out", out_path, "Output file (default stdout)");

  // topics / wordfreq
  auto* topics = app.add_subcommand("topics", "LDA topics over the sentences generated for one prompt");
  RunSelection top_sel;
  top_sel.add_to(topics);
  std::string prompt_text, model_filter, stopwords_path;
  LdaParams lda;
  std::size_t top_words_n = 10;
  topics->add_option("--prompt", prompt_text, "Prompt surface, e.g. \"A blind Muslim man\"")->required();
  topics->add_option("--model", model_filter, "Only this model's records");
  topics->add_option("-k,--topics", lda.topics, "Number of topics")->capture_default_str();
  topics->add_option("--passes", lda.passes, "Gibbs sweeps")->capture_default_str();
  topics->add_option("--alpha", lda.alpha, "Dirichlet alpha (default 50/K)");
  topics->add_option("--beta", lda.beta, "Dirichlet beta")->capture_default_str();
  topics->add_option("--seed", lda.seed, "Sampler seed")->capture_default_str();
  topics->add_option("--words", top_words_n, "Words per topic")->capture_default_str();
  topics->add_option("--stopwords", stopwords_path, "Stopword file (default: built-in English list)");
  topics->add_option("--format", format_text, "csv, md or json-lines")->capture_default_str();

  auto* wordfreq = app.add_subcommand("wordfreq", "token<TAB>count export for word clouds");
  RunSelection wf_sel;
  wf_sel.add_to(wordfreq);
  wordfreq->add_option("--prompt", prompt_text, "Prompt surface")->required();
  wordfreq->add_option("--model", model_filter, "Only this model's records");
  wordfreq->add_option("--stopwords", stopwords_path, "Stopword file (default: built-in English list)");
  wordfreq->add_option("-o,--out", out_path, "Output file (default stdout)");

  auto* prompts = app.add_subcommand("prompts", "List the prompt grid");
  std::string categories_path, prompt_prefix;
  bool triples_only = false;
  prompts->add_option("--categories", categories_path, "Category config (default: built-in axes)");
  prompts->add_option("--prefix", prompt_prefix, "Text prepended to each prompt");
  prompts->add_option("--triple-set", triple_set_text, "With --triples: full_combinations or disability_marked");
  prompts->add_flag("--triples", triples_only, "Only the intersectional triples");

  CLI11_PARSE(app, argc, argv);

  try {
    const Format format = parse_format(format_text);
    if (grid->parsed()) {
      const auto plan = load_plan_file(plan_path);
      AuditHooks hooks;
      hooks.stop_after_pairs = stop_after;
      if (!quiet) {
        hooks.progress = [](std::size_t done, std::size_t total) {
          if (done % 50 == 0 || done == total) std::cerr << "  " << done << "/" << total << " pairs\n";
        };
      }
      print_manifest(run_grid_audit(plan, hooks));
    } else if (prefix->parsed()) {
      std::cout << emit(prefix_table(run_prefix_counterfactual(load_plan_file(plan_path))), format);
    } else if (swap->parsed()) {
      std::cout << emit(swap_table(run_person_first_swap(load_plan_file(plan_path))), format);
    } else if (few_shot->parsed()) {
      std::cout << emit(calibration_table(run_few_shot_calibration(load_plan_file(plan_path))), format);
    } else if (size_type->parsed()) {
      const auto plan = load_plan_file(plan_path);
      const auto audit = run_grid_audit(plan);
      const auto run = load_run(audit.dir);
      std::cout << emit(null_delta_table(null_delta_all_axes(run, parse_grouping(grouping_text), plan.transform,
                                                             plan.scope)),
                        format);
    } else if (report->parsed()) {
      const auto run = sel.load();
      const auto t = parse_transform(sel.transform);
      const auto s = parse_scope(sel.scope);
      ScanOptions scan{alpha, parse_triple_set(triple_set_text)};
      Table table;
      if (table_name == "models") {
        table = aggregate_means(run, {}, t, s);
      } else if (table_name == "gender" || table_name == "religion" || table_name == "disability") {
        table = aggregate_means(run, {parse_axis(table_name)}, t, s);
      } else if (table_name == "ranks") {
        table = ranks_table(rank_combinations(run, top_n, arity, t, s));
      } else if (table_name == "scan" || table_name == "intersectional") {
        const auto cells = pooled_cells(run, t, s);
        const auto grid_specs = enumerate_grid(run_categories(run));
        const auto result = intersectional_scan(cells, grid_specs, scan);
        table = table_name == "scan" ? scan_table(result) : intersectional_table(result, cells);
      } else if (table_name == "regression") {
        table = regression_table(run_regression(run, t, s));
      } else if (table_name == "null-delta") {
        table = null_delta_table(null_delta_all_axes(run, parse_grouping(grouping_text), t, s));
      } else if (table_name == "correlations") {
        table = tests_table(correlation_report(run, t, s));
      } else {
        table = tests_table(axis_anova(run, t, s));
      }
      write_output(emit(table, format), out_path);
    } else if (summary_cmd->parsed()) {
      const auto run = sum_sel.load();
      ScanOptions scan;
      scan.alpha = alpha;
      write_output(summary(run, parse_transform(sum_sel.transform), parse_scope(sum_sel.scope), scan), out_path);
    } else if (topics->parsed()) {
      const auto run = top_sel.load();
      const auto stop = stopwords_path.empty() ? default_stopwords() : load_stopwords(stopwords_path);
      const auto corpus = preprocess(prompt_texts(run, prompt_text, model_filter, parse_scope(top_sel.scope)), stop);
      const auto model = lda_fit(corpus, lda);
      std::cout << emit(topics_table(top_words(model, std::min(top_words_n, model.vocab_size()))), format);
    } else if (wordfreq->parsed()) {
      const auto run = wf_sel.load();
      const auto stop = stopwords_path.empty() ? default_stopwords() : load_stopwords(stopwords_path);
      const auto corpus = preprocess(prompt_texts(run, prompt_text, model_filter, parse_scope(wf_sel.scope)), stop);
      write_output(export_frequencies(word_frequencies(corpus)), out_path);
    } else if (prompts->parsed()) {
      const auto categories =
          categories_path.empty() ? default_categories() : load_category_config_file(categories_path);
      auto specs = enumerate_grid(categories);
      if (triples_only) specs = triple_specs(specs, parse_triple_set(triple_set_text));
      for (const auto& spec : specs) std::cout << render_prompt(spec, prompt_prefix).surface << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "biasgrid: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "biasgrid: unexpected error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
