#include <fstream>
#include <sstream>

#include "doctest.h"
#include "httplib.h"
#include "medbot/cli.hpp"
#include "medbot/json_io.hpp"
#include "medbot/kg.hpp"
#include "medbot/service.hpp"
#include "support.hpp"

using namespace medbot;
using medbot::test::fixture;
using medbot::test::temp_dir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args, const std::string& input = {}) {
  args.insert(args.begin(), "medbot");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

std::string small_graph(const std::filesystem::path& dir) {
  auto path = (dir / "g.json").string();
  auto r = run({"ingest", "--corpus", fixture("kg_small.jsonl").string(), "--out", path});
  REQUIRE(r.code == 0);
  return path;
}

}  // namespace

TEST_CASE("ingest writes a graph and a report") {
  auto dir = temp_dir("cli");
  auto path = (dir / "g.json").string();
  auto r = run({"ingest", "--corpus", fixture("literature.jsonl").string(), "--out", path, "--threads", "3"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("documents: 20\n") != std::string::npos);
  auto g = import_graph(path);

  // Same graph as a direct single-threaded build.
  auto docs = load_corpus(fixture("literature.jsonl"), CorpusFormat::Jsonl);
  GazetteerExtractor ex(test::resources().gazetteer);
  auto direct = build_graph(docs, test::resources().pipeline, ex, &test::resources().relations);
  CHECK(export_graph_json(g) == export_graph_json(direct));
  CHECK(r.out.find("nodes: " + std::to_string(direct.nodes().size()) + "\n") != std::string::npos);

  auto covid = run({"ingest", "--corpus", fixture("literature.jsonl").string(), "--out", path, "--covid-only"});
  REQUIRE(covid.code == 0);
  CHECK(covid.out.find("documents: 12\n") != std::string::npos);
  auto filtered = filter_covid_docs(docs);
  CHECK(export_graph_json(import_graph(path)) ==
        export_graph_json(build_graph(filtered, test::resources().pipeline, ex, &test::resources().relations)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("ingest error paths") {
  auto dir = temp_dir("cli");
  auto out = (dir / "g.json").string();
  auto corpus = fixture("kg_small.jsonl").string();
  CHECK(run({"ingest", "--corpus", corpus, "--gazetteer", (dir / "none.csv").string(), "--out", out}).code == 1);
  CHECK(run({"ingest", "--corpus", (dir / "none.jsonl").string(), "--out", out}).code == 1);
  CHECK(run({"ingest", "--corpus", corpus, "--out", (dir / "no/such/dir/g.json").string()}).code == 1);
  CHECK(run({"ingest", "--corpus", corpus}).code == 2);
  CHECK_FALSE(std::filesystem::exists(out));
  std::filesystem::remove_all(dir);
}

TEST_CASE("analyze") {
  auto corpus = fixture("literature.jsonl").string();
  auto top = run({"analyze", "top-symptoms", "--corpus", corpus, "--top", "3"});
  REQUIRE(top.code == 0);
  CHECK(top.out == "term,count\nfever,10\ncough,7\ndiarrhea,5\n");

  auto json = run({"analyze", "top-symptoms", "--corpus", corpus, "--top", "3", "--format", "json"});
  REQUIRE(json.code == 0);
  CHECK(Json::parse(json.out)[0]["term"] == "fever");

  auto trend = run({"analyze", "trend", "--corpus", corpus, "--term", "fever"});
  REQUIRE(trend.code == 0);
  std::istringstream lines(trend.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "month,count");
  std::optional<YearMonth> prev;
  while (std::getline(lines, line)) {
    auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    auto ym = parse_year_month(line.substr(0, comma));
    REQUIRE(ym);
    if (prev) CHECK(format_year_month(*ym) == format_year_month(*prev + std::chrono::months{1}));
    prev = ym;
  }
  CHECK(prev);

  auto words = run({"analyze", "title-words", "--corpus", corpus, "--top", "2"});
  CHECK(words.code == 0);
  CHECK(std::count(words.out.begin(), words.out.end(), '\n') == 3);

  auto dir = temp_dir("cli");
  auto file = (dir / "top.csv").string();
  CHECK(run({"analyze", "top-symptoms", "--corpus", corpus, "--out", file}).code == 0);
  CHECK(read_file(file).rfind("term,count\nfever,10\n", 0) == 0);
  std::filesystem::remove_all(dir);

  CHECK(run({"analyze", "bogus", "--corpus", corpus}).code == 2);
  CHECK(run({"analyze", "trend", "--corpus", corpus}).code == 2);
  CHECK(run({"analyze", "top-symptoms", "--corpus", corpus, "--format", "xml"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("query matches the HTTP endpoints") {
  auto dir = temp_dir("cli");
  auto graph = small_graph(dir);
  auto n = run({"query", "neighbors", "cough", "-k", "1", "--graph", graph});
  CHECK(n.code == 0);
  CHECK(n.out == "fever 0.75\n");
  auto a = run({"query", "attribute", "magnesium hydroxide", "DURATION", "--graph", graph});
  CHECK(a.code == 0);
  CHECK(a.out == "5 days (count 1)\n");
  CHECK(run({"query", "neighbors", "zzz", "--graph", graph}).code == 1);
  CHECK(run({"query", "attribute", "unobtainium", "DURATION", "--graph", graph}).code == 1);
  CHECK(run({"query", "attribute", "magnesium hydroxide", "DISEASE", "--graph", graph}).code == 1);
  CHECK(run({"query", "neighbors", "cough", "-k", "0", "--graph", graph}).code == 2);
  CHECK(run({"query", "neighbors", "cough", "--graph", (dir / "none.json").string()}).code == 1);

  ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_dir = dir / "store";
  cfg.graph_path = graph;
  cfg.resource_dir = test::data_dir();
  Service service(cfg);
  httplib::Client client("127.0.0.1", service.start());
  for (const auto& [args, path] : std::vector<std::pair<std::vector<std::string>, std::string>>{
           {{"query", "neighbors", "fever", "-k", "3"}, "/api/graph/neighbors?node=fever&k=3"},
           {{"query", "neighbors", "Coughs", "-k", "10"}, "/api/graph/neighbors?node=Coughs&k=10"},
           {{"query", "attribute", "magnesium hydroxide", "DURATION"},
            "/api/graph/attribute?drug=magnesium%20hydroxide&category=DURATION"}}) {
    auto full = args;
    for (const char* extra : {"--graph", graph.c_str(), "--format", "json"}) full.push_back(extra);
    auto cli_out = run(full);
    REQUIRE(cli_out.code == 0);
    auto res = client.Get(path);
    REQUIRE(res);
    CHECK(Json::parse(cli_out.out) == Json::parse(res->body));
  }
  service.stop();
  std::filesystem::remove_all(dir);
}

TEST_CASE("query reads graph_path from the config") {
  auto dir = temp_dir("cli");
  auto graph = small_graph(dir);
  auto cfg = dir / "medbot.json";
  std::ofstream(cfg) << R"({"graph_path": "g.json"})";
  auto r = run({"query", "neighbors", "cough", "-k", "1", "--config", cfg.string()});
  CHECK(r.code == 0);
  CHECK(r.out == "fever 0.75\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("serve rejects a bad config before binding") {
  auto dir = temp_dir("cli");
  auto cfg = dir / "medbot.json";
  std::ofstream(cfg) << R"({"port": 0, "colour": "blue"})";
  auto r = run({"serve", "--config", cfg.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("unknown config key 'colour'") != std::string::npos);
  CHECK(run({"serve", "--config", (dir / "none.json").string()}).code == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("chat relays to the service") {
  auto dir = temp_dir("cli");
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_dir = dir / "store";
  cfg.graph_path = small_graph(dir);
  cfg.resource_dir = test::data_dir();
  Service service(cfg);
  int port = service.start();
  auto r = run({"chat", "--patient", "shell", "--url", "http://127.0.0.1:" + std::to_string(port)},
               "hello\nI have a fever\n\n");
  CHECK(r.code == 0);
  CHECK(r.out.find("Symptom recorded: fever.") != std::string::npos);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') >= 3);
  auto p = service.store().get("shell");
  REQUIRE(p);
  CHECK(p->sessions.at(0).events.size() == 1);
  service.stop();
  CHECK(run({"chat", "--patient", "x", "--url", "http://127.0.0.1:" + std::to_string(port)}, "hi\n").code == 1);
  CHECK(run({"chat"}).code == 2);
  std::filesystem::remove_all(dir);
}
