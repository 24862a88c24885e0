#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "biasgrid/error.hpp"
#include "biasgrid/report.hpp"
#include "support.hpp"
#include "synthetic.hpp"

using namespace biasgrid;

namespace {

Table sample_table() {
  Table t;
  t.title = "Sample, with \"quotes\"";
  t.columns = {{"label"}, {"value", 3}, {"count"}, {"note"}};
  t.rows.push_back({std::string("a, b"), 0.1234567890123, 3LL, Cell{}});
  t.rows.push_back({std::string("pipe | here"), -2.5, -7LL, std::string("x\"y")});
  t.rows.push_back({std::string(""), 1e-300, 0LL, std::string("é")});
  return t;
}

double hash_score(const PromptSpec& s, const testing::SyntheticModel& m, int i) {
  const auto h = std::hash<std::string>{}(s.key() + m.id + std::to_string(i));
  return static_cast<double>(h % 10007) / 10007.0;
}

}  // namespace

TEST_CASE("json-lines round trip") {
  const auto t = sample_table();
  const auto back = parse_json_lines(emit(t, Format::json_lines));
  CHECK(back == t);
  Table empty;
  empty.title = "nothing";
  empty.columns = {{"a"}, {"b", 4}};
  CHECK(parse_json_lines(emit(empty, Format::json_lines)) == empty);
}

TEST_CASE("csv and markdown rendering") {
  const auto t = sample_table();
  const auto csv = emit(t, Format::csv);
  CHECK(csv.starts_with("label,value,count,note\n\"a, b\",0.1234567890123,3,\n"));
  CHECK(csv.find("\"x\"\"y\"") != std::string::npos);

  const auto md = emit(t, Format::md);
  CHECK(md.find("| a, b | 0.123 | 3 |  |") != std::string::npos);
  CHECK(md.find("| pipe \\| here | -2.500 | -7 | x\"y |") != std::string::npos);
  // Every table line has one more pipe than columns.
  std::istringstream in(md);
  int table_lines = 0;
  for (std::string line; std::getline(in, line);) {
    if (!line.starts_with("|")) continue;
    ++table_lines;
    std::size_t pipes = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '|' && (i == 0 || line[i - 1] != '\\')) ++pipes;
    }
    CHECK(pipes == t.columns.size() + 1);
  }
  CHECK(table_lines == 2 + 3);

  Table header_only;
  header_only.columns = {{"a"}, {"b"}};
  CHECK(emit(header_only, Format::csv) == "a,b\n");
  CHECK(emit(header_only, Format::md) == "| a | b |\n| --- | --- |\n");

  CHECK(parse_format("json-lines") == Format::json_lines);
  CHECK(parse_format("structured") == Format::json_lines);
  CHECK(parse_format("md") == Format::md);
  CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("aggregate means against brute force") {
  const auto set = default_categories();
  const std::vector<testing::SyntheticModel> models = {{"a", 124, 40}, {"b", 355, 40}, {"c", 125, 800}};
  const auto run = testing::synthetic_run(set, models, 3, hash_score);

  for (Axis axis : {Axis::gender, Axis::religion, Axis::disability}) {
    const auto table = aggregate_means(run, {axis}, Transform::softmax, Scope::full_sentence);
    CHECK(table.rows.size() == set.values(axis).size());
    REQUIRE(table.columns.size() == 5);
    CHECK(table.columns.back().name == "Ave");
    double previous = 2.0;
    for (const auto& row : table.rows) {
      const auto label = std::get<std::string>(row[0]);
      double sum_of_means = 0.0;
      for (std::size_t m = 0; m < models.size(); ++m) {
        double sum = 0.0;
        int n = 0;
        for (const auto& spec : enumerate_grid(set)) {
          if (display_label(spec.value(axis)) != label) continue;
          for (int i = 0; i < 3; ++i, ++n) sum += hash_score(spec, models[m], i);
        }
        CHECK(std::fabs(std::get<double>(row[1 + m]) - sum / n) < 1e-12);
        sum_of_means += sum / n;
      }
      const double ave = std::get<double>(row[4]);
      CHECK(std::fabs(ave - sum_of_means / 3.0) < 1e-12);
      CHECK(ave <= previous);
      previous = ave;
    }
  }

  const auto all = aggregate_means(run, {}, Transform::softmax, Scope::full_sentence);
  REQUIRE(all.rows.size() == 1);
  CHECK(std::get<std::string>(all.rows[0][0]) == "All prompts");

  const auto two = aggregate_means(run, {Axis::gender, Axis::religion}, Transform::softmax, Scope::full_sentence);
  CHECK(two.rows.size() == 4 * 7);
  CHECK(two.columns[0].name == "gender / religion");
}

TEST_CASE("aggregate means on a two-value example") {
  const auto set = load_category_config("gender: [man, person]\nreligion: ['']\ndisability: ['']\n");
  const auto run = testing::synthetic_run(set, {{"only", 124, 40}}, 2, [](const PromptSpec& s, const auto&, int) {
    return s.gender.label == "man" ? 0.2 : 0.4;
  });
  const auto t = aggregate_means(run, {Axis::gender}, Transform::sigmoid, Scope::continuation_only);
  REQUIRE(t.rows.size() == 2);
  CHECK(std::get<std::string>(t.rows[0][0]) == "person");
  CHECK(std::get<double>(t.rows[0][1]) == doctest::Approx(0.4));
  CHECK(std::get<std::string>(t.rows[1][0]) == "man");
  CHECK(std::get<double>(t.rows[1][1]) == doctest::Approx(0.2));
  // With one model the Ave column equals the model column.
  for (const auto& row : t.rows) CHECK(std::get<double>(row[1]) == std::get<double>(row[2]));
}

TEST_CASE("rankings") {
  const auto set = default_categories();
  const std::vector<testing::SyntheticModel> models = {{"a", 124, 40}, {"b", 355, 40}};
  const auto run = testing::synthetic_run(set, models, 2, hash_score);
  const auto r = rank_combinations(run, 10, std::nullopt, Transform::softmax, Scope::full_sentence);
  REQUIRE(r.top.size() == 10);
  REQUIRE(r.bottom.size() == 10);
  CHECK(r.models == std::vector<std::string>{"a", "b"});
  for (std::size_t i = 1; i < 10; ++i) {
    CHECK(r.top[i - 1].mean >= r.top[i].mean);
    CHECK(r.bottom[i - 1].mean <= r.bottom[i].mean);
  }
  CHECK(r.top[0].mean >= r.bottom[0].mean);
  for (const auto& p : r.top) {
    CHECK(p.mean == doctest::Approx((p.per_model[0] + p.per_model[1]) / 2).epsilon(1e-12));
  }

  const auto triples = rank_combinations(run, 5, 3, Transform::softmax, Scope::full_sentence);
  for (const auto& p : triples.top) CHECK(p.spec.arity() == 3);
  CHECK_THROWS_AS(rank_combinations(run, 281, std::nullopt, Transform::softmax, Scope::full_sentence), DomainError);
  CHECK_NOTHROW(rank_combinations(run, 280, std::nullopt, Transform::softmax, Scope::full_sentence));

  // Input order does not matter.
  auto shuffled = run;
  std::mt19937 rng(3);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), rng);
  std::shuffle(shuffled.scores.begin(), shuffled.scores.end(), rng);
  const auto again = rank_combinations(shuffled, 10, std::nullopt, Transform::softmax, Scope::full_sentence);
  CHECK(emit(ranks_table(again), Format::csv) == emit(ranks_table(r), Format::csv));
  CHECK(emit(aggregate_means(shuffled, {Axis::religion}, Transform::softmax, Scope::full_sentence), Format::csv) ==
        emit(aggregate_means(run, {Axis::religion}, Transform::softmax, Scope::full_sentence), Format::csv));
}

TEST_CASE("ranking ties break by surface") {
  const auto set = load_category_config("gender: [woman, man, person]\nreligion: ['']\ndisability: ['']\n");
  const auto run = testing::synthetic_run(set, {{"m", 124, 40}}, 1, [](const auto&, const auto&, int) { return 0.5; });
  const auto r = rank_combinations(run, 3, std::nullopt, Transform::softmax, Scope::full_sentence);
  CHECK(r.top[0].surface == "A man");
  CHECK(r.top[1].surface == "A person");
  CHECK(r.top[2].surface == "A woman");
  const auto t = ranks_table(r);
  CHECK(t.rows.size() == 6);
}

TEST_CASE("order-free mean") {
  std::vector<double> xs = {0.1, 1e16, -1e16, 0.3, 0.7, 1e-9};
  const double m = order_free_mean(xs);
  std::reverse(xs.begin(), xs.end());
  CHECK(order_free_mean(xs) == m);
  std::rotate(xs.begin(), xs.begin() + 2, xs.end());
  CHECK(order_free_mean(xs) == m);
  CHECK(std::isnan(order_free_mean({})));
}

TEST_CASE("table builders") {
  RegressionResult reg;
  reg.coefficients = {{"const", 0.5, 0.01, 50, 0}, {"gender_mask", -0.1, 0.02, -5, 1e-6}};
  reg.r_squared = 0.25;
  reg.n = 100;
  const auto rt = regression_table(reg);
  CHECK(rt.rows.size() == 4);
  CHECK(std::get<long long>(rt.rows.back()[1]) == 100);
  CHECK(emit(rt, Format::md).find("| gender_mask | -0.100 | 0.020 | -5.0 | 0.000 |") != std::string::npos);

  CHECK(topics_table({{"a", "b"}, {"c"}}).rows.size() == 2);
  CalibrationReport cal;
  cal.model_id = "m";
  CHECK(calibration_table(cal).rows.size() == 5);

  const auto set = default_categories();
  const auto run = testing::synthetic_run(set, {{"a", 124, 40}, {"b", 1558, 40}}, 2, hash_score);
  const auto deltas = null_delta_all_axes(run, ModelGrouping::size, Transform::softmax, Scope::full_sentence);
  CHECK(deltas.size() == 3 + 6 + 9);
  CHECK(null_delta_table(deltas).rows.size() == deltas.size());

  const auto text = summary(run, Transform::softmax, Scope::full_sentence);
  CHECK(text.starts_with("# Bias audit summary: synthetic"));
  CHECK(summary(run, Transform::softmax, Scope::full_sentence) == text);
}
