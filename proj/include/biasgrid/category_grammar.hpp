#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace biasgrid {

enum class Axis { gender, religion, disability };
enum class Position { pre_noun, post_noun, noun_head };

std::string_view to_string(Axis axis);
std::string_view to_string(Position position);
Axis parse_axis(std::string_view text);
Position parse_position(std::string_view text);

// The un-gendered noun head. It is the gender axis' neutral value rather
// than an empty null marker.
inline constexpr std::string_view kNeutralGender = "person";

struct CategoryValue {
  std::string label;
  Position position = Position::pre_noun;
  Axis axis = Axis::religion;

  // True when the value actually marks a category in the prompt.
  bool is_marker() const;

  friend bool operator==(const CategoryValue&, const CategoryValue&) = default;
};

// Placement a label gets when none is configured: gender values are the
// noun head, "with ..." / "who ..." disabilities follow the noun, the rest
// precede it.
Position infer_position(Axis axis, std::string_view label);

// Rendered label for tables: null markers show as "[None]".
std::string display_label(const CategoryValue& value);

struct CategorySet {
  std::vector<CategoryValue> gender;
  std::vector<CategoryValue> religion;
  std::vector<CategoryValue> disability;

  const std::vector<CategoryValue>& values(Axis axis) const;
  std::size_t grid_size() const { return gender.size() * religion.size() * disability.size(); }
};

struct PromptSpec {
  CategoryValue gender;
  CategoryValue religion;
  CategoryValue disability;

  // Number of category markers present, 0..3.
  int arity() const;
  const CategoryValue& value(Axis axis) const;
  // Stable "gender|religion|disability" key used in stores and maps.
  std::string key() const;

  friend bool operator==(const PromptSpec&, const PromptSpec&) = default;
};

struct Prompt {
  PromptSpec spec;
  std::string surface;
  std::string prefix;
  int char_length = 0;
  int term_count = 0;
};

// The built-in category axes: 4 genders, 7 religions (with null), 10
// disabilities (with null).
CategorySet default_categories();

// Parses a category document (YAML or JSON). `preset: default`
// yields default_categories(). Throws ConfigError.
CategorySet load_category_config(std::string_view source);
CategorySet load_category_config_file(const std::string& path);

// Checks the axis invariants; throws ConfigError on violation.
void validate(const CategorySet& set);

Prompt render_prompt(const PromptSpec& spec, std::string_view prefix = {});

// Cartesian product, gender-major, then religion, then disability.
std::vector<PromptSpec> enumerate_grid(const CategorySet& set);

// Every spec obtained by nulling one or more markers of `spec`, ordered by
// ascending arity (the all-null spec first). Throws DomainError on arity 0.
std::vector<PromptSpec> subsets_of(const PromptSpec& spec);

// Which grid cells count as "three-category" prompts in the intersectional
// scan. full_combinations needs both religion and disability marked, with
// any gender head including "person": 6 x 4 x 9 = 216 on the default axes.
// Person-headed triples have arity 2, so their only proper subsets are the
// two singles. disability_marked keeps every religion/gender with a
// disability marker (7 x 4 x 9 = 252).
enum class TripleSet { full_combinations, disability_marked };

TripleSet parse_triple_set(std::string_view text);
std::vector<PromptSpec> triple_specs(const std::vector<PromptSpec>& grid, TripleSet which);

// Number of Unicode code points in a UTF-8 string.
int utf8_length(std::string_view text);

}  // namespace biasgrid
