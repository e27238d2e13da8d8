#include <fstream>
#include <random>
#include <unordered_map>

#include "doctest.h"
#include "medbot/error.hpp"
#include "support.hpp"

using namespace medbot;
using medbot::test::fixture;
using medbot::test::resources;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

}  // namespace

TEST_CASE("load_corpus maps a JSONL record field by field") {
  auto dir = test::temp_dir("corpus");
  auto path = dir / "one.jsonl";
  {
    std::ofstream out(path);
    out << R"({"doc_id":"d1","title":"Fever in SARS","abstract":"...","publish_date":"2020-03-01"})" << "\n";
  }
  LoadReport report;
  auto docs = load_corpus(path, CorpusFormat::Jsonl, &report);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].doc_id == "d1");
  CHECK(docs[0].title == "Fever in SARS");
  CHECK(docs[0].abstract == "...");
  CHECK(docs[0].body.empty());
  REQUIRE(docs[0].publish_date);
  CHECK(format_date(*docs[0].publish_date) == "2020-03-01");
  CHECK(report.skipped == 0);
}

TEST_CASE("load_corpus error paths") {
  auto dir = test::temp_dir("corpus-err");
  std::ofstream(dir / "empty.jsonl").close();
  CHECK_THROWS_AS(load_corpus(dir / "empty.jsonl", CorpusFormat::Jsonl), EmptyCorpusError);
  CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl", CorpusFormat::Jsonl), IoError);
  CHECK_THROWS_AS(parse_corpus_format("xml"), ConfigError);
  CHECK(parse_corpus_format("jsonl") == CorpusFormat::Jsonl);
  CHECK(parse_corpus_format("metadata-csv+json-dir") == CorpusFormat::Cord19);

  {
    std::ofstream out(dir / "dups.jsonl");
    out << R"({"doc_id":"a","title":"x"})" << "\n" << R"({"doc_id":"a","title":"y"})" << "\n";
    out << R"({"doc_id":"b","title":"z","publish_date":"2020-02-30"})" << "\n";
  }
  LoadReport report;
  auto docs = load_corpus(dir / "dups.jsonl", CorpusFormat::Jsonl, &report);
  CHECK(docs.size() == 1);
  CHECK(docs[0].title == "x");
  CHECK(report.skipped == 2);
}

TEST_CASE("fixture with two malformed lines loads 18 of 20 records") {
  LoadReport report;
  auto docs = load_corpus(fixture("literature_malformed.jsonl"), CorpusFormat::Jsonl, &report);
  CHECK(docs.size() == 18);
  CHECK(report.loaded == 18);
  CHECK(report.skipped == 2);
  CHECK(report.problems.size() == 2);
}

TEST_CASE("CORD-19 metadata csv with per-paper JSON") {
  LoadReport report;
  auto docs = load_corpus(fixture("cord19"), CorpusFormat::Cord19, &report);
  REQUIRE(docs.size() == 2);
  CHECK(report.skipped == 1);
  CHECK(docs[0].doc_id == "ug7v899j");
  CHECK(docs[0].abstract == "Fever and cough were common.\nDiarrhea was rare.");
  CHECK(docs[0].body == "Patients presented with fever.\nRemdesivir was given for 5 days.");
  CHECK(format_date(*docs[0].publish_date) == "2020-02-15");
  // Missing full text keeps title + abstract; a year-only date is treated as undated.
  CHECK(docs[1].body.empty());
  CHECK(docs[1].title == "Influenza in 2019");
  CHECK_FALSE(docs[1].publish_date);
}

TEST_CASE("tokenize") {
  CHECK(surfaces(tokenize("fever and cough")) == std::vector<std::string>{"fever", "and", "cough"});
  CHECK(surfaces(tokenize("COVID-19, fever.")) == std::vector<std::string>{"COVID-19", ",", "fever", "."});
  CHECK(tokenize("").empty());
  CHECK(surfaces(tokenize("I can't smell; 2.5 mg/kg (daily)")) ==
        std::vector<std::string>{"I", "can't", "smell", ";", "2.5", "mg/kg", "(", "daily", ")"});
  CHECK(surfaces(tokenize("well-known -x- end-")) ==
        std::vector<std::string>{"well-known", "-", "x", "-", "end", "-"});
  auto toks = tokenize("a , b");
  CHECK(toks[1].is_punct);
  CHECK_FALSE(toks[0].is_punct);
}

TEST_CASE("tokenize round-trips offsets on arbitrary bytes") {
  std::mt19937 rng(7);
  const std::string alphabet = "abcXYZ019 -'./,;!?()\t\n\xC3\xA9\xE2\x80\x99";
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    int len = static_cast<int>(rng() % 60);
    for (int i = 0; i < len; ++i) text.push_back(alphabet[rng() % alphabet.size()]);
    auto tokens = tokenize(text);
    std::size_t prev_end = 0;
    for (const auto& t : tokens) {
      REQUIRE(t.start < t.end);
      REQUIRE(t.start >= prev_end);
      REQUIRE(text.substr(t.start, t.end - t.start) == t.surface);
      prev_end = t.end;
    }
  }
}

TEST_CASE("lemmatize on a hand list of medical inflections") {
  const auto& lem = resources().pipeline.lemmatizer();
  // (inflected, expected) checked by hand against the rule table and exceptions file.
  const std::vector<std::pair<std::string, std::string>> gold = {
      {"Fevers", "fever"},           {"fever", "fever"},           {"coughing", "cough"},
      {"coughed", "cough"},          {"coughs", "cough"},          {"headaches", "headache"},
      {"symptoms", "symptom"},       {"patients", "patient"},      {"infections", "infection"},
      {"allergies", "allergy"},      {"therapies", "therapy"},     {"studies", "study"},
      {"rashes", "rash"},            {"viruses", "virus"},         {"virus", "virus"},
      {"diagnoses", "diagnosis"},    {"diagnosis", "diagnosis"},   {"bronchitis", "bronchitis"},
      {"lungs", "lung"},             {"days", "day"},              {"weeks", "week"},
      {"tablets", "tablet"},         {"capsules", "capsule"},      {"doses", "dose"},
      {"dosing", "dose"},            {"vomiting", "vomit"},        {"vomited", "vomit"},
      {"sneezing", "sneeze"},        {"breathing", "breathe"},     {"swelling", "swell"},
      {"stopped", "stop"},           {"admitted", "admit"},        {"reported", "report"},
      {"developed", "develop"},      {"hospitalized", "hospitalize"}, {"vaccinated", "vaccinate"},
      {"treated", "treat"},          {"treating", "treat"},        {"treats", "treat"},
      {"taking", "take"},            {"took", "take"},             {"children", "child"},
      {"aches", "ache"},             {"diabetes", "diabetes"},     {"measles", "measles"},
      {"chills", "chills"},          {"increased", "increase"},    {"illness", "illness"},
      {"was", "be"},                 {"COVID-19", "covid-19"},
  };
  REQUIRE(gold.size() == 50);
  for (const auto& [word, lemma] : gold) {
    CAPTURE(word);
    CHECK(lem.lemmatize(word) == lemma);
  }
  Token t;
  t.surface = "Fevers";
  CHECK(lemmatize(t, lem).lemma == "fever");
}

TEST_CASE("lemmatize is idempotent and case-insensitive") {
  const auto& lem = resources().pipeline.lemmatizer();
  std::mt19937 rng(11);
  const std::string letters = "abcdeghilmnorstuyz";
  for (int trial = 0; trial < 3000; ++trial) {
    std::string w;
    int len = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < len; ++i) w.push_back(letters[rng() % letters.size()]);
    if (rng() % 3 == 0) w += std::vector<std::string>{"s", "es", "ies", "ing", "ed", "sses"}[rng() % 6];
    std::string once = lem.lemmatize(w);
    CAPTURE(w);
    REQUIRE(lem.lemmatize(once) == once);
    std::string upper = w;
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    REQUIRE(lem.lemmatize(upper) == once);
  }
}

TEST_CASE("lemma exceptions must be fixed points") {
  CHECK_THROWS_AS(Lemmatizer(std::unordered_map<std::string, std::string>{{"foo", "fevers"}}), ConfigError);
  CHECK_NOTHROW(Lemmatizer(std::unordered_map<std::string, std::string>{{"foo", "fever"}}));
}

TEST_CASE("remove_stopwords") {
  const auto& pipe = resources().pipeline;
  auto kept = remove_stopwords(pipe.analyze("the fever is high"), pipe.stopwords());
  CHECK(surfaces(kept) == std::vector<std::string>{"fever", "high"});
  CHECK(remove_stopwords(std::vector<Token>{}, pipe.stopwords()).empty());

  // Unflagged tokens are checked against the lexicon directly.
  auto raw = tokenize("The fever, is high");
  CHECK(surfaces(remove_stopwords(raw, pipe.stopwords())) == std::vector<std::string>{"fever", "high"});

  // Hand count: 30 tokens; stopwords In, our, with, and, were, in, the, and, for, most (10) + 3 punctuation.
  const std::string sentence =
      "In our study, patients with severe fever and dry cough were treated in the hospital wards, and remdesivir "
      "reduced viral load within 5 days for most adults.";
  auto tokens = pipe.analyze(sentence);
  CHECK(tokens.size() == 30);
  CHECK(remove_stopwords(tokens, pipe.stopwords()).size() == 17);

  CHECK_THROWS_AS(StopwordLexicon::load("/nonexistent/stopwords.txt"), ConfigError);
}

TEST_CASE("split_sentences") {
  Document d;
  d.doc_id = "x";
  d.abstract = "Fever is common. Cough follows.";
  auto s = split_sentences(d);
  REQUIRE(s.size() == 2);
  CHECK(s[0].text == "Fever is common.");
  CHECK(s[1].text == "Cough follows.");
  CHECK(s[1].index == 1);

  CHECK(split_sentences(Document{"e", "", "", "", std::nullopt}).empty());

  // Hand annotation of c03: title; "Neurological ... e.g. headache and dizziness."; "Wang et al. observed ...";
  // "The median age was 56 years."; body "Follow-up continued for 14 days after discharge." → 5.
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  auto c03 = std::find_if(docs.begin(), docs.end(), [](const Document& doc) { return doc.doc_id == "c03"; });
  REQUIRE(c03 != docs.end());
  auto sentences = split_sentences(*c03, &resources().pipeline);
  REQUIRE(sentences.size() == 5);
  CHECK(sentences[1].text == "Neurological findings are increasingly reported, e.g. headache and dizziness.");
  CHECK(sentences[2].text == "Wang et al. observed fever in most admitted patients.");
}

TEST_CASE("sentences partition the document text") {
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  for (const auto& d : docs) {
    std::string text = document_text(d);
    std::size_t prev_end = 0;
    for (const auto& s : split_sentences(d, &resources().pipeline)) {
      REQUIRE_FALSE(s.text.empty());
      REQUIRE(s.begin >= prev_end);
      REQUIRE(text.substr(s.begin, s.text.size()) == s.text);
      // Nothing but whitespace between consecutive sentences.
      for (std::size_t i = prev_end; i < s.begin; ++i) REQUIRE(std::isspace(static_cast<unsigned char>(text[i])));
      for (const auto& t : s.tokens) REQUIRE(s.text.substr(t.start, t.end - t.start) == t.surface);
      prev_end = s.begin + s.text.size();
    }
  }
}

TEST_CASE("filter_covid_docs") {
  Document kept{"a", "SARS-CoV-2 outcomes", "", "", std::nullopt};
  Document dropped{"b", "Influenza vaccination", "", "", std::nullopt};
  Document body_only{"c", "Outcomes", "", "Testing for HCoV-OC43.", std::nullopt};
  std::vector<Document> docs{kept, dropped, body_only};
  auto out = filter_covid_docs(docs);
  REQUIRE(out.size() == 2);
  CHECK(out[0].doc_id == "a");
  CHECK(out[1].doc_id == "c");

  auto corpus = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  auto covid = filter_covid_docs(corpus);
  CHECK(covid.size() == 12);
  // Order-preserving subset.
  std::size_t pos = 0;
  for (const auto& d : covid) {
    while (pos < corpus.size() && corpus[pos].doc_id != d.doc_id) ++pos;
    REQUIRE(pos < corpus.size());
  }
}
