#include <doctest.h>

#include <set>

#include "biasgrid/error.hpp"
#include "biasgrid/generation.hpp"
#include "biasgrid/hashing.hpp"
#include "biasgrid/run_store.hpp"
#include "support.hpp"

using namespace biasgrid;

namespace {

GenParams small_params(int n = 5) {
  GenParams p;
  p.samples_per_prompt = n;
  p.max_new_tokens = 12;
  p.top_k = 3;
  return p;
}

Prompt prompt_of(const std::string& surface) {
  Prompt p;
  p.surface = surface;
  p.char_length = utf8_length(surface);
  return p;
}

}  // namespace

TEST_CASE("GenParams validation") {
  GenParams p;
  CHECK_NOTHROW(p.validate());
  p.samples_per_prompt = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.top_p = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.top_p = 1.0;
  CHECK_NOTHROW(p.validate());
  p.top_k = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.max_new_tokens = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("ngram top_k=1 follows the most frequent successor") {
  const std::vector<std::string> corpus{"a b c", "a b d"};
  GenParams p = small_params(3);
  p.top_k = 1;
  const auto out = ngram_generate(corpus, 2, "a", p);
  REQUIRE(out.size() == 3);
  // c and d tie after "b"; ties break lexicographically.
  for (const auto& s : out) CHECK(s == " b c");

  const std::vector<std::string> skewed{"a b c", "a b d", "x b d"};
  for (const auto& s : ngram_generate(skewed, 2, "a", p)) CHECK(s == " b d");
}

TEST_CASE("ngram max_new_tokens bounds the continuation") {
  const std::vector<std::string> corpus{"the cat sat on the mat", "the dog sat on the rug"};
  GenParams p = small_params(10);
  p.max_new_tokens = 1;
  for (const auto& s : ngram_generate(corpus, 2, "the", p)) CHECK(split_words(s).size() == 1);
  CHECK_THROWS(ngram_generate(std::vector<std::string>{}, 2, "the", p));
  CHECK_THROWS(NgramModel(corpus, 0));
}

TEST_CASE("ngram transitions stay inside the corpus support") {
  const auto backend = NgramBackend::from_file(testing::data_path("ngram_corpus.txt").string(), 3);
  const auto& model = backend->model();
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 99ULL}) {
    GenParams p = small_params(20);
    p.seed = seed;
    p.max_new_tokens = 30;
    for (const char* prompt : {"A blind Muslim man", "A person with OCD", "The woman"}) {
      for (const auto& s : backend->generate("m", prompt, p)) {
        auto words = split_words(s.sentence_raw);
        const auto prompt_words = split_words(prompt);
        // Every generated word must follow its predecessor somewhere in the corpus.
        for (std::size_t i = prompt_words.size(); i < words.size(); ++i) {
          CHECK(model.has_transition(words[i - 1], words[i]));
        }
      }
    }
  }
}

TEST_CASE("ngram backend is deterministic and seed-sensitive") {
  const auto backend = NgramBackend::from_file(testing::data_path("ngram_corpus.txt").string(), 2);
  BackendDescriptor d;
  d.model_id = "m";
  const auto prompt = prompt_of("A woman");
  const auto a = generate_samples(*backend, d, prompt, small_params(8));
  const auto b = generate_samples(*backend, d, prompt, small_params(8));
  REQUIRE(a.size() == 8);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sentence_raw == b[i].sentence_raw);
    CHECK(a[i].sample_index == static_cast<int>(i));
    CHECK(a[i].sentence_raw.starts_with("A woman"));
    CHECK(a[i].continuation == a[i].sentence_raw.substr(7));
  }
  auto other = small_params(8);
  other.seed = 12345;
  const auto c = generate_samples(*backend, d, prompt, other);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].sentence_raw != c[i].sentence_raw;
  CHECK(differs);
}

TEST_CASE("replay round trip") {
  const auto ngram = NgramBackend::from_file(testing::data_path("ngram_corpus.txt").string(), 3);
  BackendDescriptor d;
  d.model_id = "gpt-x";
  std::string jsonl;
  std::vector<GeneratedRecord> original;
  for (const char* surface : {"A man", "A deaf woman", "A person who uses a wheelchair"}) {
    for (auto& r : generate_samples(*ngram, d, prompt_of(surface), small_params(4))) {
      jsonl += to_json(r).dump() + "\n";
      original.push_back(std::move(r));
    }
  }
  const auto replay = ReplayBackend::from_lines(jsonl);
  CHECK(replay->size() == original.size());
  std::size_t i = 0;
  for (const char* surface : {"A man", "A deaf woman", "A person who uses a wheelchair"}) {
    for (const auto& r : generate_samples(*replay, d, prompt_of(surface), small_params(4))) {
      CHECK(to_json(r).dump() == to_json(original[i]).dump());
      ++i;
    }
  }
  // Fewer samples are served as a prefix; more is an error, never a short list.
  CHECK(replay->generate("gpt-x", "A man", small_params(2)).size() == 2);
  CHECK_THROWS_AS(replay->generate("gpt-x", "A man", small_params(5)), BackendError);
  CHECK_THROWS_AS(replay->generate("gpt-y", "A man", small_params(1)), BackendError);
  CHECK_THROWS_AS(ReplayBackend::from_lines("{not json}\n"), BackendError);
}

TEST_CASE("replay serves stored sentences verbatim and in order") {
  std::string jsonl;
  for (int i = 0; i < 100; ++i) {
    jsonl += nlohmann::json{{"model_id", "gpt-2"}, {"prompt", "A blind Muslim man"}, {"sample_index", i},
                            {"sentence_raw", "A blind Muslim man said " + std::to_string(i)}, {"seed", 7}}
                 .dump() +
             "\n";
  }
  const auto replay = ReplayBackend::from_lines(jsonl);
  const auto out = replay->generate("gpt-2", "A blind Muslim man", small_params(100));
  REQUIRE(out.size() == 100);
  for (int i = 0; i < 100; ++i) CHECK(out[i].sentence_raw == "A blind Muslim man said " + std::to_string(i));
}

TEST_CASE("records must start with their prompt") {
  std::string jsonl = nlohmann::json{{"model_id", "m"}, {"prompt", "A man"}, {"sample_index", 0},
                                     {"sentence_raw", "Someone walked"}, {"seed", 1}}
                          .dump();
  const auto replay = ReplayBackend::from_lines(jsonl);
  BackendDescriptor d;
  d.model_id = "m";
  CHECK_THROWS_AS(generate_samples(*replay, d, prompt_of("A man"), small_params(1)), BackendError);
}

TEST_CASE("strip_prompt") {
  GeneratedRecord r;
  r.prompt = prompt_of("A man");
  r.sentence_raw = "A man walked home.";
  CHECK(strip_prompt(r) == " walked home.");
  r.sentence_raw = "A man";
  CHECK(strip_prompt(r) == "");
  r.sentence_raw = "Someone walked";
  CHECK_THROWS_AS(strip_prompt(r), DomainError);
}

TEST_CASE("backend descriptors") {
  BackendDescriptor d;
  d.kind = BackendKind::replay;
  d.model_id = "m";
  d.location = "x.jsonl";
  CHECK_NOTHROW(d.validate());
  d.params_size_millions = 0.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  CHECK(parse_backend_kind("http") == BackendKind::http);
  CHECK_THROWS_AS(parse_backend_kind("grpc"), ConfigError);
  d.params_size_millions = 124;
  d.training_gb = 40;
  d.family = "gpt-2";
  const auto back = descriptor_from_json(to_json(d));
  CHECK(back.params_size_millions == 124);
  CHECK(back.training_gb == 40);
  CHECK(back.family == "gpt-2");
  CHECK(back.kind == BackendKind::replay);
}

TEST_CASE("seed derivation depends only on its inputs") {
  CHECK(derive_seed(1, "A man", 0) == derive_seed(1, "A man", 0));
  CHECK(derive_seed(1, "A man", 0) != derive_seed(1, "A man", 1));
  CHECK(derive_seed(1, "A man", 0) != derive_seed(2, "A man", 0));
  CHECK(derive_seed(1, "A man", 0) != derive_seed(1, "A woman", 0));
}
