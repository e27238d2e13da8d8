#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "medbot/error.hpp"
#include "support.hpp"

using namespace medbot;
using medbot::test::fixture;
using medbot::test::make_sentence;
using medbot::test::resources;

namespace {

KnowledgeGraph build(const std::vector<Document>& docs, unsigned threads = 1) {
  GazetteerExtractor ex(resources().gazetteer);
  return build_graph(docs, resources().pipeline, ex, &resources().relations, nullptr, threads);
}

KnowledgeGraph small_graph() { return build(load_corpus(fixture("kg_small.jsonl"), CorpusFormat::Jsonl)); }

void add(KnowledgeGraph& g, const std::string& text, const std::string& doc = "t", std::size_t idx = 0) {
  auto s = make_sentence(text, doc, idx);
  auto ents = extract_entities(s, resources().gazetteer);
  g.add_sentence(ents, s);
  for (const auto& e : extract_semantic_edges(s, ents, resources().relations)) g.add_semantic_edge(e, s.text);
}

}  // namespace

TEST_CASE("neighbors of cough on the small fixture") {
  auto g = small_graph();
  auto n = g.neighbors("cough", 10);
  REQUIRE(n.size() == 2);
  CHECK(n[0].lemma_key == "fever");
  CHECK(n[0].probability.numerator == 3);
  CHECK(n[0].probability.denominator == 4);
  CHECK(n[0].probability.value() == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(n[1].lemma_key == "diarrhea");
  CHECK(n[1].probability.value() == doctest::Approx(0.25));
  CHECK(g.neighbors("cough", 1).size() == 1);
  CHECK(g.neighbors("cough", 0).empty());
  CHECK_THROWS_AS(g.neighbors("pyrexia", 5), UnknownNodeError);
  CHECK(g.neighbors("cough", 5, EntityCategory::Chemical).empty());
}

TEST_CASE("conditional probability edge cases") {
  auto g = small_graph();
  CHECK(g.conditional_probability("fever", "cough").value() == doctest::Approx(0.75));
  CHECK(g.conditional_probability("cough", "cough").value() == 1.0);
  CHECK(g.conditional_probability("remdesivir", "cough").numerator == 0);
  CHECK_THROWS_AS(g.conditional_probability("fever", "pyrexia"), UndefinedConditionalError);
  CHECK(g.edge_weight("fever", "fever") == 0);
  CHECK(g.edge_weight("fever", "cough") == g.edge_weight("cough", "fever"));
  CHECK(g.edge_weight("fever", "nothing") == 0);
}

TEST_CASE("node counts use sentences, mentions are totals") {
  KnowledgeGraph g;
  add(g, "Fever, fever and more fever with cough.");
  const auto* fever = g.node("fever");
  REQUIRE(fever);
  CHECK(fever->mention_count == 3);
  CHECK(fever->sentence_count == 1);
  CHECK(g.edge_weight("fever", "cough") == 1);
  CHECK(g.total_sentences() == 1);
  add(g, "Nothing here.", "t", 1);
  CHECK(g.total_sentences() == 2);
}

TEST_CASE("semantic edges") {
  auto g = small_graph();
  auto edges = g.semantic_edges();
  auto has = [&](const std::string& s, const std::string& o, const std::string& d) {
    return std::any_of(edges.begin(), edges.end(), [&](const SemanticEdge& e) {
      return e.subject == s && e.object == o && e.descriptor == d;
    });
  };
  CHECK(has("headache", "covid-19", "symptom"));
  CHECK(has("remdesivir", "covid-19", "treats"));
  CHECK(edges.size() == 2);

  auto s = make_sentence("Pneumonia is caused by influenza.");
  auto ents = extract_entities(s, resources().gazetteer);
  auto rev = extract_semantic_edges(s, ents, resources().relations);
  REQUIRE(rev.size() == 1);
  CHECK(rev[0].subject == "influenza");
  CHECK(rev[0].object == "pneumonia");
  CHECK(rev[0].descriptor == "causes");

  auto none = make_sentence("Fever and cough.");
  CHECK(extract_semantic_edges(none, extract_entities(none, resources().gazetteer), resources().relations).empty());

  KnowledgeGraph empty;
  CHECK_THROWS_AS(empty.add_semantic_edge(rev[0]), Error);
}

TEST_CASE("attribute edges: duration values of a drug") {
  KnowledgeGraph g;
  add(g, "Magnesium hydroxide was given for 5 days.", "a", 0);
  add(g, "Patients received magnesium hydroxide for 5 days.", "a", 1);
  add(g, "Magnesium hydroxide for 5 days was tolerated.", "b", 0);
  add(g, "Magnesium hydroxide was continued for 7 days.", "c", 0);
  auto values = g.query_attribute("magnesium hydroxide", EntityCategory::Duration);
  REQUIRE(values.size() == 2);
  CHECK(values[0].value == "5 days");
  CHECK(values[0].count == 3);
  CHECK(values[0].evidence.size() == 3);
  CHECK(values[1].value == "7 days");
  CHECK(values[1].count == 1);
  CHECK(g.sentence_text(values[1].evidence[0]) == "Magnesium hydroxide was continued for 7 days.");
  CHECK(g.query_attribute("magnesium hydroxide", EntityCategory::Strength).empty());
  CHECK_THROWS_AS(g.query_attribute("aspirin", EntityCategory::Duration), UnknownDrugError);
  add(g, "Fever lasted 3 days.", "d", 0);
  CHECK_THROWS_AS(g.query_attribute("fever", EntityCategory::Duration), UnknownDrugError);
  // An attribute with no drug in its sentence is dropped.
  CHECK(g.attribute_edges().size() == 2);
  // Attribute mentions never become nodes.
  CHECK_FALSE(g.node("5 day"));
}

TEST_CASE("attributes attach to the nearest drug") {
  KnowledgeGraph g;
  add(g, "Remdesivir for 10 days, then ibuprofen 400 mg.");
  CHECK(g.query_attribute("remdesivir", EntityCategory::Duration).size() == 1);
  CHECK(g.query_attribute("remdesivir", EntityCategory::Strength).empty());
  CHECK(g.query_attribute("ibuprofen", EntityCategory::Strength).at(0).value == "400 mg");
}

TEST_CASE("evidence lists are capped and keep the smallest references") {
  KnowledgeGraph g;
  for (int i = 30; i > 0; --i) add(g, "Remdesivir for 5 days.", "d" + std::to_string(100 + i), 0);
  auto v = g.query_attribute("remdesivir", EntityCategory::Duration);
  REQUIRE(v.size() == 1);
  CHECK(v[0].count == 30);
  REQUIRE(v[0].evidence.size() == kEvidenceCap);
  CHECK(v[0].evidence.front().doc_id == "d101");
  CHECK(v[0].evidence.back().doc_id == "d120");
}

TEST_CASE("co-occurrence counts match a brute-force recount") {
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  auto corpus = test::annotate(docs);
  auto oracle = test::brute_force_counts(corpus);
  auto g = build(docs);
  CHECK(g.total_sentences() == oracle.sentences);
  CHECK(g.nodes().size() == oracle.sentence_count.size());
  for (const auto& [key, node] : g.nodes()) {
    CAPTURE(key);
    CHECK(node.sentence_count == oracle.sentence_count.at(key));
    CHECK(node.mention_count == oracle.mention_count.at(key));
  }
  auto edges = g.cooccurrence_edges();
  CHECK(edges.size() == oracle.pair_count.size());
  for (const auto& e : edges) CHECK(e.count == oracle.pair_count.at({e.a, e.b}));
  for (const auto& [key, node] : g.nodes()) {
    auto expected = test::oracle_neighbors(oracle, key, 5);
    auto got = g.neighbors(key, 5);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].lemma_key == expected[i].first);
      CHECK(got[i].probability.value() == doctest::Approx(expected[i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("merge is associative and commutative, threading is invisible") {
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  std::vector<Document> a(docs.begin(), docs.begin() + 6), b(docs.begin() + 6, docs.begin() + 13),
      c(docs.begin() + 13, docs.end());
  auto ga = build(a), gb = build(b), gc = build(c);

  KnowledgeGraph left = ga;
  left.merge(gb);
  left.merge(gc);
  KnowledgeGraph bc = gb;
  bc.merge(gc);
  KnowledgeGraph right = ga;
  right.merge(bc);
  KnowledgeGraph swapped = gc;
  swapped.merge(ga);
  swapped.merge(gb);
  auto whole = build(docs);
  CHECK(left == whole);
  CHECK(right == whole);
  CHECK(swapped == whole);
  CHECK(build(docs, 4) == whole);
  CHECK(export_graph_json(build(docs, 3)) == export_graph_json(whole));
}

TEST_CASE("graph is independent of document order") {
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  const auto reference = export_graph_json(build(docs));
  std::mt19937 rng(17);
  for (int i = 0; i < 5; ++i) {
    std::shuffle(docs.begin(), docs.end(), rng);
    CHECK(export_graph_json(build(docs)) == reference);
  }
}

TEST_CASE("build report") {
  auto docs = load_corpus(fixture("kg_small.jsonl"), CorpusFormat::Jsonl);
  GazetteerExtractor ex(resources().gazetteer);
  BuildReport r;
  auto g = build_graph(docs, resources().pipeline, ex, &resources().relations, &r);
  CHECK(r.documents == 3);
  CHECK(r.sentences == g.total_sentences());
  CHECK(r.nodes == g.nodes().size());
  CHECK(r.semantic_edges == 2);
  CHECK(r.attribute_edges == 1);
}

TEST_CASE("export and import round-trip") {
  auto g = small_graph();
  auto text = export_graph_json(g);
  auto back = import_graph_json(text);
  CHECK(back == g);
  CHECK(export_graph_json(back) == text);
  CHECK(back.query_attribute("magnesium hydroxide", EntityCategory::Duration).at(0).value == "5 days");
  CHECK(back.sentence_text({"k2", 2}) == "A headache is a symptom of COVID-19.");

  auto dir = test::temp_dir("kg");
  export_graph(g, dir / "graph.json");
  CHECK(import_graph(dir / "graph.json") == g);
  CHECK_THROWS_AS(import_graph(dir / "absent.json"), IoError);

  KnowledgeGraph empty;
  CHECK(import_graph_json(export_graph_json(empty)) == empty);
}

TEST_CASE("import rejects other versions and corrupt files") {
  auto text = export_graph_json(small_graph());
  auto j = nlohmann::json::parse(text);
  j["schema_version"] = "2";
  CHECK_THROWS_AS(import_graph_json(j.dump()), VersionError);

  try {
    import_graph_json(text.substr(0, text.size() / 2), "graph.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("graph.json: at byte") == 0);
  }

  auto bad = nlohmann::json::parse(text);
  bad["cooccurrence"][0]["count"] = -1;
  try {
    import_graph_json(bad.dump());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("/cooccurrence/0/count") != std::string::npos);
  }

  auto dangling = nlohmann::json::parse(text);
  dangling["cooccurrence"][0]["b"] = "not-a-node";
  CHECK_THROWS_AS(import_graph_json(dangling.dump()), ParseError);
  CHECK_THROWS_AS(import_graph_json("[]"), ParseError);
}

TEST_CASE("graph handle swaps snapshots") {
  GraphHandle h;
  auto before = h.get();
  CHECK(before->nodes().empty());
  h.replace(std::make_shared<const KnowledgeGraph>(small_graph()));
  CHECK(before->nodes().empty());
  CHECK(h.get()->node("cough"));
}
