#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medbot/corpus.hpp"

namespace medbot {

enum class EntityCategory { Disease, Chemical, Form, Route, Frequency, Dosage, Strength, Duration };

inline constexpr EntityCategory kAllCategories[] = {
    EntityCategory::Disease,   EntityCategory::Chemical, EntityCategory::Form,     EntityCategory::Route,
    EntityCategory::Frequency, EntityCategory::Dosage,   EntityCategory::Strength, EntityCategory::Duration};

// "DISEASE", "CHEMICAL", ...
std::string_view to_string(EntityCategory c);
// Case-insensitive; std::nullopt for anything outside the closed set.
std::optional<EntityCategory> parse_category(std::string_view tag);

// DISEASE and CHEMICAL mentions become graph nodes; the other six categories
// describe a drug and become attribute edges.
constexpr bool is_node_category(EntityCategory c) {
  return c == EntityCategory::Disease || c == EntityCategory::Chemical;
}
constexpr bool is_attribute_category(EntityCategory c) { return !is_node_category(c); }

struct Entity {
  std::string surface;
  std::string lemma_key;
  EntityCategory category = EntityCategory::Disease;
  std::string doc_id;
  std::size_t sentence_index = 0;
  std::size_t start = 0;  // byte offsets into Sentence::text
  std::size_t end = 0;

  bool operator==(const Entity&) const = default;
};

// Lowercase, lemmatize every token, collapse whitespace: "Magnesium  Hydroxides" → "magnesium hydroxide".
std::string normalize(std::string_view surface, const Lemmatizer& lemmatizer);

using LemmaSequence = std::vector<std::string>;

struct GazetteerEntry {
  EntityCategory category;
  std::string canonical;  // lemma_key emitted for matches
};

// Number + unit pattern, e.g. "5 days" → DURATION. `unit` is a lemma sequence.
struct UnitPattern {
  LemmaSequence unit;
  EntityCategory category;
};

class Gazetteer {
 public:
  Gazetteer() = default;

  // term,category[,canonical] CSV with '#' comments. Terms are normalized with
  // `lemmatizer`. Two rows whose lemma sequences coincide but disagree on
  // category (or canonical form) throw ConfigError naming the term. An empty
  // file yields an empty gazetteer with a warning.
  static Gazetteer load(const std::filesystem::path& path, const Lemmatizer& lemmatizer);

  // unit,category per line; categories must be attribute categories.
  void load_units(const std::filesystem::path& path, const Lemmatizer& lemmatizer);

  void add(std::string_view term, EntityCategory category, std::string_view canonical, const Lemmatizer& lemmatizer);
  void add_unit(std::string_view unit, EntityCategory category, const Lemmatizer& lemmatizer);

  const GazetteerEntry* find(const LemmaSequence& seq) const;
  std::size_t max_term_length() const { return max_len_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<LemmaSequence, GazetteerEntry>& entries() const { return entries_; }
  const std::vector<UnitPattern>& units() const { return units_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Distinct canonical keys of one category, sorted.
  std::vector<std::string> canonical_keys(EntityCategory category) const;
  std::optional<EntityCategory> category_of_key(std::string_view canonical) const;

 private:
  std::map<LemmaSequence, GazetteerEntry> entries_;
  std::map<std::string, EntityCategory, std::less<>> canonical_category_;
  std::vector<UnitPattern> units_;  // longest unit first
  std::vector<std::string> warnings_;
  std::size_t max_len_ = 0;
};

// Extraction interface: a learned model can replace the gazetteer behind it.
class EntityExtractor {
 public:
  virtual ~EntityExtractor() = default;
  virtual std::vector<Entity> extract(const Sentence& sentence) const = 0;
};

/// Greedy left-to-right longest match of token lemma sequences against the
/// gazetteer; then number+unit patterns over tokens no gazetteer match covers.
/// Spans never overlap and the result is ordered by start offset.
/// Mentions are polarity-blind: "no fever" still yields fever.
std::vector<Entity> extract_entities(const Sentence& sentence, const Gazetteer& gazetteer);

class GazetteerExtractor final : public EntityExtractor {
 public:
  explicit GazetteerExtractor(const Gazetteer& gazetteer) : gazetteer_(&gazetteer) {}
  std::vector<Entity> extract(const Sentence& sentence) const override {
    return extract_entities(sentence, *gazetteer_);
  }

 private:
  const Gazetteer* gazetteer_;
};

// True for digit strings ("5", "2.5") and the number words one..twelve, once, twice, thrice, half.
bool is_number_token(std::string_view lemma);

}  // namespace medbot
