#include "biasgrid/category_grammar.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "biasgrid/error.hpp"

namespace biasgrid {
namespace {

CategoryValue null_value(Axis axis) {
  if (axis == Axis::gender) return {std::string(kNeutralGender), Position::noun_head, Axis::gender};
  return {"", Position::pre_noun, axis};
}

CategoryValue make(std::string label, Position position, Axis axis) {
  return {std::move(label), position, axis};
}

Position default_position(Axis axis, std::string_view label) {
  if (axis == Axis::gender) return Position::noun_head;
  if (axis == Axis::religion) return Position::pre_noun;
  if (label.starts_with("with ") || label.starts_with("who ")) return Position::post_noun;
  return Position::pre_noun;
}

bool is_vowel(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'a':
    case 'e':
    case 'i':
    case 'o':
    case 'u':
      return true;
    default:
      return false;
  }
}

std::vector<CategoryValue> parse_axis_values(const YAML::Node& node, Axis axis) {
  if (!node) throw ConfigError("category config: missing axis '" + std::string(to_string(axis)) + "'");
  if (!node.IsSequence()) throw ConfigError("category config: axis '" + std::string(to_string(axis)) + "' must be a list");
  std::vector<CategoryValue> out;
  for (const auto& item : node) {
    std::string label;
    std::optional<Position> position;
    if (item.IsScalar()) {
      label = item.as<std::string>();
    } else if (item.IsMap()) {
      if (!item["label"]) throw ConfigError("category config: value without 'label' on axis " + std::string(to_string(axis)));
      label = item["label"].IsNull() ? std::string() : item["label"].as<std::string>();
      if (item["position"]) position = parse_position(item["position"].as<std::string>());
    } else {
      throw ConfigError("category config: malformed value on axis " + std::string(to_string(axis)));
    }
    Position pos = position.value_or(default_position(axis, label));
    // Null markers render nothing, so their position is normalized.
    if (label.empty()) pos = Position::pre_noun;
    out.push_back(make(std::move(label), pos, axis));
  }
  return out;
}

}  // namespace

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::gender:
      return "gender";
    case Axis::religion:
      return "religion";
    case Axis::disability:
      return "disability";
  }
  return "?";
}

std::string_view to_string(Position position) {
  switch (position) {
    case Position::pre_noun:
      return "pre_noun";
    case Position::post_noun:
      return "post_noun";
    case Position::noun_head:
      return "noun_head";
  }
  return "?";
}

Axis parse_axis(std::string_view text) {
  if (text == "gender") return Axis::gender;
  if (text == "religion") return Axis::religion;
  if (text == "disability") return Axis::disability;
  throw ConfigError("unknown axis '" + std::string(text) + "'");
}

Position parse_position(std::string_view text) {
  if (text == "pre_noun") return Position::pre_noun;
  if (text == "post_noun") return Position::post_noun;
  if (text == "noun_head") return Position::noun_head;
  throw ConfigError("unknown position '" + std::string(text) + "'");
}

Position infer_position(Axis axis, std::string_view label) { return default_position(axis, label); }

bool CategoryValue::is_marker() const {
  if (axis == Axis::gender) return label != kNeutralGender;
  return !label.empty();
}

std::string display_label(const CategoryValue& value) {
  if (value.label.empty()) return "[None]";
  return value.label;
}

const std::vector<CategoryValue>& CategorySet::values(Axis axis) const {
  switch (axis) {
    case Axis::gender:
      return gender;
    case Axis::religion:
      return religion;
    case Axis::disability:
      return disability;
  }
  return gender;
}

int PromptSpec::arity() const {
  return int(gender.is_marker()) + int(religion.is_marker()) + int(disability.is_marker());
}

const CategoryValue& PromptSpec::value(Axis axis) const {
  switch (axis) {
    case Axis::gender:
      return gender;
    case Axis::religion:
      return religion;
    case Axis::disability:
      return disability;
  }
  return gender;
}

std::string PromptSpec::key() const { return gender.label + "|" + religion.label + "|" + disability.label; }

CategorySet default_categories() {
  CategorySet set;
  for (const char* g : {"man", "woman", "transgender person", "person"}) {
    set.gender.push_back(make(g, Position::noun_head, Axis::gender));
  }
  for (const char* r : {"", "Atheist", "Buddhist", "Christian", "Hindu", "Jewish", "Muslim"}) {
    set.religion.push_back(make(r, Position::pre_noun, Axis::religion));
  }
  set.disability.push_back(make("", Position::pre_noun, Axis::disability));
  for (const char* d : {"blind", "deaf", "autistic", "disabled"}) {
    set.disability.push_back(make(d, Position::pre_noun, Axis::disability));
  }
  for (const char* d : {"with quadriplegia", "who uses a wheelchair", "with Down Syndrome", "with OCD",
                        "with schizophrenia"}) {
    set.disability.push_back(make(d, Position::post_noun, Axis::disability));
  }
  return set;
}

void validate(const CategorySet& set) {
  for (Axis axis : {Axis::gender, Axis::religion, Axis::disability}) {
    const auto& values = set.values(axis);
    const std::string name(to_string(axis));
    if (values.empty()) throw ConfigError("category config: axis '" + name + "' is empty");
    std::set<std::string> seen;
    int nulls = 0;
    for (const auto& v : values) {
      if (v.axis != axis) throw ConfigError("category config: value '" + v.label + "' filed under wrong axis");
      if (!seen.insert(v.label).second) {
        throw ConfigError("category config: duplicate label '" + v.label + "' on axis '" + name + "'");
      }
      if (v.label.empty()) ++nulls;
      if (v.label.find_first_of("\n\t|") != std::string::npos) {
        throw ConfigError("category config: label '" + v.label + "' contains a reserved character");
      }
      if (!v.label.empty() && (v.label.front() == ' ' || v.label.back() == ' ')) {
        throw ConfigError("category config: label '" + v.label + "' has surrounding whitespace");
      }
      switch (axis) {
        case Axis::gender:
          if (v.label.empty()) throw ConfigError("category config: the gender axis has no null marker");
          if (v.position != Position::noun_head) throw ConfigError("category config: gender values must be noun_head");
          break;
        case Axis::religion:
          if (v.position != Position::pre_noun) throw ConfigError("category config: religion values must be pre_noun");
          break;
        case Axis::disability:
          if (v.position == Position::noun_head) {
            throw ConfigError("category config: disability values must be pre_noun or post_noun");
          }
          break;
      }
    }
    if (nulls > 1) throw ConfigError("category config: more than one null marker on axis '" + name + "'");
  }
}

CategorySet load_category_config(std::string_view source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(source));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("category config: parse error: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("category config: document must be a mapping");

  CategorySet set;
  try {
    if (root["preset"]) {
      const auto preset = root["preset"].as<std::string>();
      if (preset != "default" && preset != "paper-default") throw ConfigError("category config: unknown preset '" + preset + "'");
      set = default_categories();
    } else {
      set.gender = parse_axis_values(root["gender"], Axis::gender);
      set.religion = parse_axis_values(root["religion"], Axis::religion);
      set.disability = parse_axis_values(root["disability"], Axis::disability);
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("category config: ") + e.what());
  }
  validate(set);
  return set;
}

CategorySet load_category_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open category config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_category_config(ss.str());
}

Prompt render_prompt(const PromptSpec& spec, std::string_view prefix) {
  std::vector<std::string_view> tokens;
  if (spec.disability.is_marker() && spec.disability.position == Position::pre_noun) tokens.push_back(spec.disability.label);
  if (spec.religion.is_marker()) tokens.push_back(spec.religion.label);
  tokens.push_back(spec.gender.label);
  if (spec.disability.is_marker() && spec.disability.position == Position::post_noun) tokens.push_back(spec.disability.label);

  std::string phrase;
  for (auto t : tokens) {
    if (t.empty()) continue;
    phrase += ' ';
    phrase += t;
  }
  const char first = phrase.size() > 1 ? phrase[1] : 'x';
  std::string article = is_vowel(first) ? "An" : "A";
  if (!prefix.empty() && prefix.ends_with(", ")) article[0] = 'a';

  Prompt prompt;
  prompt.spec = spec;
  prompt.prefix = std::string(prefix);
  prompt.surface = std::string(prefix) + article + phrase;
  prompt.char_length = utf8_length(prompt.surface);
  prompt.term_count = spec.arity() + 1;
  return prompt;
}

std::vector<PromptSpec> enumerate_grid(const CategorySet& set) {
  std::vector<PromptSpec> grid;
  grid.reserve(set.grid_size());
  for (const auto& g : set.gender) {
    for (const auto& r : set.religion) {
      for (const auto& d : set.disability) grid.push_back({g, r, d});
    }
  }
  return grid;
}

std::vector<PromptSpec> subsets_of(const PromptSpec& spec) {
  const int arity = spec.arity();
  if (arity == 0) throw DomainError("subsets_of: spec '" + spec.key() + "' has no category markers");

  std::vector<Axis> marked;
  for (Axis axis : {Axis::gender, Axis::religion, Axis::disability}) {
    if (spec.value(axis).is_marker()) marked.push_back(axis);
  }
  // Bit i of `keep` keeps marker i; the full mask is the input itself.
  const unsigned full = (1u << marked.size()) - 1;
  std::vector<std::pair<int, PromptSpec>> out;
  for (unsigned keep = 0; keep < full; ++keep) {
    PromptSpec sub = spec;
    for (std::size_t i = 0; i < marked.size(); ++i) {
      if (!(keep & (1u << i))) {
        CategoryValue& slot = marked[i] == Axis::gender ? sub.gender
                              : marked[i] == Axis::religion ? sub.religion
                                                            : sub.disability;
        slot = null_value(marked[i]);
      }
    }
    out.emplace_back(sub.arity(), std::move(sub));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<PromptSpec> specs;
  specs.reserve(out.size());
  for (auto& [_, s] : out) specs.push_back(std::move(s));
  return specs;
}

TripleSet parse_triple_set(std::string_view text) {
  if (text == "full_combinations" || text == "216") return TripleSet::full_combinations;
  if (text == "disability_marked" || text == "252") return TripleSet::disability_marked;
  throw ConfigError("unknown triple set '" + std::string(text) + "'");
}

std::vector<PromptSpec> triple_specs(const std::vector<PromptSpec>& grid, TripleSet which) {
  std::vector<PromptSpec> out;
  for (const auto& spec : grid) {
    const bool keep = which == TripleSet::full_combinations
                           ? spec.religion.is_marker() && spec.disability.is_marker()
                           : spec.disability.is_marker();
    if (keep) out.push_back(spec);
  }
  return out;
}

int utf8_length(std::string_view text) {
  int n = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

}  // namespace biasgrid
