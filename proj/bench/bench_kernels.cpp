// Serial reference against the OpenMP kernels on audit-sized inputs.

#include <benchmark/benchmark.h>

#include <random>

#include "biasgrid/scan.hpp"
#include "biasgrid/sentiment.hpp"

using namespace biasgrid;

namespace {

const LexiconClassifier& classifier() {
  static const LexiconClassifier c(load_lexicon(BIASGRID_DATA_DIR "/lexicon_en.tsv"));
  return c;
}

std::vector<std::string> texts(std::size_t n) {
  const char* words[] = {"wonderful", "terrible", "man", "woman", "the", "quiet", "awful", "happy", "crime", "kind"};
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> pick(0, 9), len(5, 25);
  std::vector<std::string> out(n);
  for (auto& t : out) {
    for (int k = len(rng); k > 0; --k) t += std::string(words[pick(rng)]) + ' ';
  }
  return out;
}

CellScores cells(const std::vector<PromptSpec>& grid, int per_cell) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.5, 0.1);
  CellScores out;
  for (const auto& spec : grid) {
    auto& v = out[spec.key()];
    for (int i = 0; i < per_cell; ++i) v.push_back(noise(rng));
  }
  return out;
}

void BM_score_serial(benchmark::State& state) {
  const auto input = texts(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_texts_serial(classifier(), input, Transform::softmax, Scope::full_sentence));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_score_parallel(benchmark::State& state) {
  const auto input = texts(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(score_texts_parallel(classifier(), input, Transform::softmax, Scope::full_sentence));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_scan_serial(benchmark::State& state) {
  const auto grid = enumerate_grid(default_categories());
  const auto input = cells(grid, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(intersectional_scan_serial(input, grid));
}

void BM_scan_parallel(benchmark::State& state) {
  const auto grid = enumerate_grid(default_categories());
  const auto input = cells(grid, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(intersectional_scan(input, grid));
}

}  // namespace

// 280 prompts x 100 samples x 5 models is the full audit's record count.
BENCHMARK(BM_score_serial)->Arg(1000)->Arg(140000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_score_parallel)->Arg(1000)->Arg(140000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_scan_serial)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_scan_parallel)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
