#include <doctest.h>

#include <omp.h>

#include <cstring>
#include <random>

#include "biasgrid/report.hpp"
#include "biasgrid/scan.hpp"
#include "biasgrid/sentiment.hpp"
#include "support.hpp"

using namespace biasgrid;

namespace {

std::vector<std::string> random_texts(std::size_t n, std::uint64_t seed) {
  const std::vector<std::string> words = {"wonderful", "terrible", "man",   "woman", "crime", "great", "the",
                                          "quiet",     "awful",    "happy", "a",     "lost",  "kind",  "\xc3\xa9t\xc3\xa9"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1), len(0, 25);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    for (std::size_t k = len(rng); k > 0; --k) t += words[pick(rng)] + (k % 5 == 0 ? ". " : " ");
    out.push_back(t);
  }
  return out;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

CellScores random_cells(const std::vector<PromptSpec>& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.08);
  CellScores cells;
  for (const auto& spec : grid) {
    const double shift = spec.arity() == 3 && spec.gender.label == "woman" ? -0.2 : 0.0;
    for (int i = 0; i < 30; ++i) cells[spec.key()].push_back(0.5 + shift + noise(rng));
  }
  return cells;
}

}  // namespace

TEST_CASE("parallel scoring matches the serial kernel bit for bit") {
  const LexiconClassifier classifier(load_lexicon(testing::data_path("lexicon_en.tsv")));
  const auto texts = random_texts(20000, 8);
  for (Transform t : {Transform::softmax, Transform::sigmoid}) {
    const auto serial = score_texts_serial(classifier, texts, t, Scope::full_sentence);
    for (int threads : {1, 2, 3, 8}) {
      omp_set_num_threads(threads);
      const auto parallel = score_texts_parallel(classifier, texts, t, Scope::full_sentence);
      REQUIRE(parallel.size() == serial.size());
      std::size_t mismatches = 0;
      for (std::size_t i = 0; i < serial.size(); ++i) {
        if (!same_bits(serial[i].value, parallel[i].value) || serial[i].neutral_empty != parallel[i].neutral_empty ||
            serial[i].transform != parallel[i].transform || serial[i].backend_id != parallel[i].backend_id) {
          ++mismatches;
        }
      }
      CHECK(mismatches == 0);
    }
  }
  CHECK(score_texts_parallel(classifier, {}, Transform::softmax, Scope::full_sentence).empty());
}

TEST_CASE("parallel scan matches the serial scan") {
  const auto grid = enumerate_grid(default_categories());
  for (std::uint64_t seed : {1u, 2u}) {
    auto cells = random_cells(grid, seed);
    // A missing distribution exercises the skip path.
    cells.erase(grid[57].key());
    for (TripleSet which : {TripleSet::full_combinations, TripleSet::disability_marked}) {
      const ScanOptions options{0.001, which};
      const auto serial = intersectional_scan_serial(cells, grid, options);
      for (int threads : {1, 4, 7}) {
        omp_set_num_threads(threads);
        const auto parallel = intersectional_scan(cells, grid, options);
        CHECK(emit(scan_table(parallel), Format::json_lines) == emit(scan_table(serial), Format::json_lines));
        CHECK(parallel.skipped == serial.skipped);
        CHECK(parallel.triple_counts.evaluated == serial.triple_counts.evaluated);
        CHECK(parallel.triple_counts.lower_than_all_singles == serial.triple_counts.lower_than_all_singles);
        CHECK(parallel.triple_counts.lower_than_all_singles_and_pairs ==
              serial.triple_counts.lower_than_all_singles_and_pairs);
        CHECK(parallel.pair_counts.higher_than_all_singles == serial.pair_counts.higher_than_all_singles);
        REQUIRE(parallel.triples.size() == serial.triples.size());
        for (std::size_t i = 0; i < serial.triples.size(); ++i) {
          CHECK(same_bits(parallel.triples[i].mean, serial.triples[i].mean));
          CHECK(same_bits(parallel.triples[i].singles_mean, serial.triples[i].singles_mean));
        }
      }
      CHECK(serial.triple_counts.lower_than_all_singles > 0);
    }
  }
}
