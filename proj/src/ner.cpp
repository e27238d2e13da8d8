#include "medbot/ner.hpp"

#include <algorithm>

#include "medbot/error.hpp"
#include "medbot/util.hpp"

namespace medbot {

std::string_view to_string(EntityCategory c) {
  switch (c) {
    case EntityCategory::Disease: return "DISEASE";
    case EntityCategory::Chemical: return "CHEMICAL";
    case EntityCategory::Form: return "FORM";
    case EntityCategory::Route: return "ROUTE";
    case EntityCategory::Frequency: return "FREQUENCY";
    case EntityCategory::Dosage: return "DOSAGE";
    case EntityCategory::Strength: return "STRENGTH";
    case EntityCategory::Duration: return "DURATION";
  }
  return "DISEASE";
}

std::optional<EntityCategory> parse_category(std::string_view tag) {
  std::string upper(trim(tag));
  for (char& c : upper) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  for (auto c : kAllCategories) {
    if (to_string(c) == upper) return c;
  }
  return std::nullopt;
}

namespace {

LemmaSequence lemma_sequence(std::string_view text, const Lemmatizer& lemmatizer) {
  LemmaSequence seq;
  for (const auto& t : tokenize(text)) seq.push_back(lemmatizer.lemmatize(t.surface));
  return seq;
}

}  // namespace

std::string normalize(std::string_view surface, const Lemmatizer& lemmatizer) {
  return join(lemma_sequence(surface, lemmatizer), " ");
}

bool is_number_token(std::string_view lemma) {
  static const std::vector<std::string_view> words = {"one",   "two",  "three", "four",   "five", "six",
                                                      "seven", "eight", "nine", "ten",    "eleven", "twelve",
                                                      "once",  "twice", "thrice", "half"};
  if (std::find(words.begin(), words.end(), lemma) != words.end()) return true;
  if (lemma.empty() || lemma.front() < '0' || lemma.front() > '9') return false;
  bool dot = false;
  for (char c : lemma) {
    if (c == '.' && !dot) {
      dot = true;
    } else if (c < '0' || c > '9') {
      return false;
    }
  }
  return lemma.back() != '.';
}

void Gazetteer::add(std::string_view term, EntityCategory category, std::string_view canonical,
                    const Lemmatizer& lemmatizer) {
  LemmaSequence seq = lemma_sequence(term, lemmatizer);
  if (seq.empty()) throw ConfigError("empty gazetteer term");
  std::string key = normalize(trim(canonical).empty() ? term : canonical, lemmatizer);
  std::string shown(trim(term));

  if (auto it = entries_.find(seq); it != entries_.end()) {
    if (it->second.category != category || it->second.canonical != key) {
      throw ConfigError("conflicting gazetteer entry for term '" + shown + "'");
    }
    return;
  }
  if (auto it = canonical_category_.find(key); it != canonical_category_.end() && it->second != category) {
    throw ConfigError("conflicting gazetteer entry for term '" + shown + "' (canonical '" + key +
                      "' already has category " + std::string(to_string(it->second)) + ")");
  }
  canonical_category_.emplace(key, category);
  max_len_ = std::max(max_len_, seq.size());
  entries_.emplace(std::move(seq), GazetteerEntry{category, std::move(key)});
}

void Gazetteer::add_unit(std::string_view unit, EntityCategory category, const Lemmatizer& lemmatizer) {
  if (!is_attribute_category(category)) {
    throw ConfigError("unit '" + std::string(unit) + "' must map to an attribute category");
  }
  LemmaSequence seq = lemma_sequence(unit, lemmatizer);
  if (seq.empty()) throw ConfigError("empty unit");
  for (const auto& u : units_) {
    if (u.unit == seq) {
      if (u.category != category) throw ConfigError("conflicting unit '" + std::string(unit) + "'");
      return;
    }
  }
  units_.push_back({std::move(seq), category});
  std::stable_sort(units_.begin(), units_.end(),
                   [](const UnitPattern& a, const UnitPattern& b) { return a.unit.size() > b.unit.size(); });
}

Gazetteer Gazetteer::load(const std::filesystem::path& path, const Lemmatizer& lemmatizer) {
  if (!std::filesystem::exists(path)) throw IoError("gazetteer not found: " + path.string());
  Gazetteer gaz;
  for (const auto& line : read_data_lines(path)) {
    auto fields = split_csv_line(line.text);
    auto where = path.string() + ":" + std::to_string(line.line_no);
    if (fields.size() < 2 || fields.size() > 3) throw ConfigError(where + ": expected term,category[,canonical]");
    auto category = parse_category(fields[1]);
    if (!category) throw ConfigError(where + ": unknown category '" + fields[1] + "'");
    gaz.add(trim(fields[0]), *category, fields.size() == 3 ? trim(fields[2]) : std::string_view{}, lemmatizer);
  }
  if (gaz.entries_.empty()) gaz.warnings_.push_back("empty gazetteer: " + path.string());
  return gaz;
}

void Gazetteer::load_units(const std::filesystem::path& path, const Lemmatizer& lemmatizer) {
  if (!std::filesystem::exists(path)) throw IoError("units file not found: " + path.string());
  for (const auto& line : read_data_lines(path)) {
    auto fields = split_csv_line(line.text);
    auto where = path.string() + ":" + std::to_string(line.line_no);
    if (fields.size() != 2) throw ConfigError(where + ": expected unit,category");
    auto category = parse_category(fields[1]);
    if (!category) throw ConfigError(where + ": unknown category '" + fields[1] + "'");
    add_unit(trim(fields[0]), *category, lemmatizer);
  }
}

const GazetteerEntry* Gazetteer::find(const LemmaSequence& seq) const {
  auto it = entries_.find(seq);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Gazetteer::canonical_keys(EntityCategory category) const {
  std::vector<std::string> keys;
  for (const auto& [key, c] : canonical_category_) {
    if (c == category) keys.push_back(key);
  }
  return keys;
}

std::optional<EntityCategory> Gazetteer::category_of_key(std::string_view canonical) const {
  auto it = canonical_category_.find(canonical);
  if (it == canonical_category_.end()) return std::nullopt;
  return it->second;
}

std::vector<Entity> extract_entities(const Sentence& sentence, const Gazetteer& gazetteer) {
  const auto& tokens = sentence.tokens;
  const std::size_t n = tokens.size();
  std::vector<bool> covered(n, false);
  std::vector<Entity> out;

  auto make = [&](std::size_t first, std::size_t last, std::string key, EntityCategory category) {
    Entity e;
    e.start = tokens[first].start;
    e.end = tokens[last].end;
    e.surface = sentence.text.substr(e.start, e.end - e.start);
    e.lemma_key = std::move(key);
    e.category = category;
    e.doc_id = sentence.doc_id;
    e.sentence_index = sentence.index;
    for (std::size_t k = first; k <= last; ++k) covered[k] = true;
    out.push_back(std::move(e));
  };
  auto lemma_at = [&](std::size_t k) -> const std::string& {
    return tokens[k].lemma.empty() ? tokens[k].surface : tokens[k].lemma;
  };

  std::size_t i = 0;
  LemmaSequence window;
  while (i < n) {
    if (tokens[i].is_punct) {
      ++i;
      continue;
    }
    bool matched = false;
    for (std::size_t len = std::min(gazetteer.max_term_length(), n - i); len >= 1; --len) {
      window.clear();
      for (std::size_t k = i; k < i + len; ++k) window.push_back(lemma_at(k));
      if (const auto* entry = gazetteer.find(window)) {
        make(i, i + len - 1, entry->canonical, entry->category);
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }

  i = 0;
  while (i < n) {
    if (covered[i] || !is_number_token(lemma_at(i))) {
      ++i;
      continue;
    }
    bool matched = false;
    for (const auto& unit : gazetteer.units()) {
      const std::size_t len = unit.unit.size();
      if (i + 1 + len > n) continue;
      bool ok = true;
      for (std::size_t k = 0; k < len && ok; ++k) {
        ok = !covered[i + 1 + k] && lemma_at(i + 1 + k) == unit.unit[k];
      }
      if (!ok) continue;
      std::vector<std::string> lemmas;
      for (std::size_t k = i; k <= i + len; ++k) lemmas.push_back(lemma_at(k));
      make(i, i + len, join(lemmas, " "), unit.category);
      i += len + 1;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }

  std::sort(out.begin(), out.end(), [](const Entity& a, const Entity& b) { return a.start < b.start; });
  return out;
}

}  // namespace medbot
