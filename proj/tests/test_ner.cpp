#include <fstream>
#include <random>

#include "doctest.h"
#include "medbot/error.hpp"
#include "support.hpp"

using namespace medbot;
using medbot::test::make_sentence;
using medbot::test::resources;

namespace {

std::vector<std::pair<std::string, EntityCategory>> keys(const std::vector<Entity>& ents) {
  std::vector<std::pair<std::string, EntityCategory>> out;
  for (const auto& e : ents) out.emplace_back(e.lemma_key, e.category);
  return out;
}

std::vector<Entity> extract(const std::string& text) {
  return extract_entities(make_sentence(text), resources().gazetteer);
}

}  // namespace

TEST_CASE("category names round-trip") {
  for (auto c : kAllCategories) CHECK(parse_category(to_string(c)) == c);
  CHECK(parse_category("chemical") == EntityCategory::Chemical);
  CHECK_FALSE(parse_category("GENE"));
  CHECK(is_node_category(EntityCategory::Disease));
  CHECK(is_attribute_category(EntityCategory::Duration));
}

TEST_CASE("normalize") {
  const auto& lem = resources().pipeline.lemmatizer();
  CHECK(normalize("Magnesium  Hydroxides", lem) == "magnesium hydroxide");
  CHECK(normalize("Fevers", lem) == "fever");
  CHECK(normalize("", lem).empty());
}

TEST_CASE("bundled gazetteer loads with 60 entries and no warnings") {
  const auto& g = resources().gazetteer;
  CHECK(g.size() == 60);
  CHECK(g.warnings().empty());
  CHECK(g.category_of_key("remdesivir") == EntityCategory::Chemical);
  CHECK(g.category_of_key("anosmia") == EntityCategory::Disease);
}

TEST_CASE("extract_entities on the reference sentence") {
  auto s = make_sentence("Magnesium hydroxide was given for 5 days.", "k2", 0);
  auto ents = extract_entities(s, resources().gazetteer);
  REQUIRE(ents.size() == 2);
  CHECK(ents[0].lemma_key == "magnesium hydroxide");
  CHECK(ents[0].category == EntityCategory::Chemical);
  CHECK(ents[0].surface == "Magnesium hydroxide");
  CHECK(ents[0].start == 0);
  CHECK(ents[0].end == 19);
  CHECK(ents[1].surface == "5 days");
  CHECK(ents[1].lemma_key == "5 day");
  CHECK(ents[1].category == EntityCategory::Duration);
  CHECK(ents[1].doc_id == "k2");
}

TEST_CASE("extract_entities longest match, synonyms and patterns") {
  CHECK(keys(extract("Loss of smell and fever")) ==
        std::vector<std::pair<std::string, EntityCategory>>{{"anosmia", EntityCategory::Disease},
                                                            {"fever", EntityCategory::Disease}});
  CHECK(keys(extract("Shortness of breath")) ==
        std::vector<std::pair<std::string, EntityCategory>>{{"dyspnea", EntityCategory::Disease}});
  CHECK(keys(extract("Acetaminophen 500 mg twice daily")) ==
        std::vector<std::pair<std::string, EntityCategory>>{{"paracetamol", EntityCategory::Chemical},
                                                            {"500 mg", EntityCategory::Strength},
                                                            {"twice daily", EntityCategory::Frequency}});
  CHECK(keys(extract("two tablets three times a day")) ==
        std::vector<std::pair<std::string, EntityCategory>>{{"two tablet", EntityCategory::Dosage},
                                                            {"three time a day", EntityCategory::Frequency}});
  // Polarity is ignored.
  CHECK(keys(extract("No fever was observed")) ==
        std::vector<std::pair<std::string, EntityCategory>>{{"fever", EntityCategory::Disease}});
  CHECK(extract("").empty());
  CHECK(extract("The weather is nice today.").empty());
  CHECK(extract("5 apples").empty());
}

TEST_CASE("extracted spans are ordered, disjoint and match their surfaces") {
  std::mt19937 rng(3);
  const std::vector<std::string> words = {"fever", "and",    "cough",  "loss", "of",   "smell",   "5",
                                          "days",  "mg",     "twice",  "daily", "remdesivir", "sore", "throat",
                                          "the",   "covid-19", "shortness", "breath", ",",     "."};
  for (int trial = 0; trial < 400; ++trial) {
    std::string text;
    int len = static_cast<int>(rng() % 15);
    for (int i = 0; i < len; ++i) text += words[rng() % words.size()] + " ";
    auto s = make_sentence(text);
    auto ents = extract_entities(s, resources().gazetteer);
    std::size_t prev_end = 0;
    for (const auto& e : ents) {
      CAPTURE(text);
      REQUIRE(e.start >= prev_end);
      REQUIRE(e.start < e.end);
      REQUIRE(s.text.substr(e.start, e.end - e.start) == e.surface);
      prev_end = e.end;
    }
  }
}

TEST_CASE("gazetteer conflicts and load errors") {
  const auto& lem = resources().pipeline.lemmatizer();
  Gazetteer g;
  g.add("fever", EntityCategory::Disease, "", lem);
  g.add("fevers", EntityCategory::Disease, "", lem);  // same lemma sequence, same category
  CHECK(g.size() == 1);
  CHECK_THROWS_WITH_AS(g.add("Fever", EntityCategory::Chemical, "", lem),
                       "conflicting gazetteer entry for term 'Fever'", ConfigError);
  CHECK_THROWS_AS(g.add("pyrexia", EntityCategory::Chemical, "fever", lem), ConfigError);
  CHECK_THROWS_AS(g.add_unit("mg", EntityCategory::Disease, lem), ConfigError);

  auto dir = test::temp_dir("gaz");
  CHECK_THROWS_AS(Gazetteer::load(dir / "none.csv", lem), IoError);
  std::ofstream(dir / "empty.csv").close();
  auto empty = Gazetteer::load(dir / "empty.csv", lem);
  CHECK(empty.size() == 0);
  CHECK(empty.warnings().size() == 1);
  {
    std::ofstream out(dir / "bad.csv");
    out << "fever,DISEASE\nfever,CHEMICAL\n";
  }
  CHECK_THROWS_WITH_AS(Gazetteer::load(dir / "bad.csv", lem), "conflicting gazetteer entry for term 'fever'",
                       ConfigError);
  {
    std::ofstream out(dir / "cat.csv");
    out << "fever,SYMPTOM\n";
  }
  CHECK_THROWS_AS(Gazetteer::load(dir / "cat.csv", lem), ConfigError);
}

TEST_CASE("is_number_token") {
  CHECK(is_number_token("5"));
  CHECK(is_number_token("2.5"));
  CHECK(is_number_token("twice"));
  CHECK_FALSE(is_number_token("5."));
  CHECK_FALSE(is_number_token("1.2.3"));
  CHECK_FALSE(is_number_token("five5"));
  CHECK_FALSE(is_number_token(""));
}

TEST_CASE("GazetteerExtractor delegates") {
  GazetteerExtractor ex(resources().gazetteer);
  auto s = make_sentence("Fever and cough");
  CHECK(ex.extract(s) == extract_entities(s, resources().gazetteer));
}
