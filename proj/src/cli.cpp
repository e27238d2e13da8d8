#include "medbot/cli.hpp"

#include <signal.h>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "httplib.h"
#include "medbot/analysis.hpp"
#include "medbot/error.hpp"
#include "medbot/json_io.hpp"
#include "medbot/kg.hpp"
#include "medbot/resources.hpp"
#include "medbot/service.hpp"
#include "medbot/util.hpp"

namespace medbot::cli {

namespace {

struct Options {
  std::string config;
  std::string resources;

  // ingest / analyze
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string gazetteer;
  std::string out;
  bool covid_only = false;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string format = "csv";
  std::string term;
  std::size_t top_n = 20;

  // query
  std::string graph;
  std::string node;
  std::size_t k = 10;
  std::string drug;
  std::string category;

  // chat
  std::string patient;
  std::string url = "http://127.0.0.1:8080";
};

void require_exists(const std::string& path, const std::string& what) {
  if (!std::filesystem::exists(path)) throw IoError(what + " not found: " + path);
}

void require_out_dir(const std::string& path) {
  if (path.empty()) return;
  auto parent = std::filesystem::absolute(path).parent_path();
  if (!std::filesystem::is_directory(parent)) throw IoError("output directory does not exist: " + parent.string());
}

std::filesystem::path resource_dir(const Options& o) {
  return o.resources.empty() ? default_resource_dir() : std::filesystem::path(o.resources);
}

void emit(const Options& o, const std::string& text, std::ostream& out) {
  if (o.out.empty()) {
    out << text;
  } else {
    write_file_atomic(o.out, text);
  }
}

std::vector<Document> load_docs(const Options& o, std::ostream& err) {
  require_exists(o.corpus, "corpus");
  LoadReport report;
  auto docs = load_corpus(o.corpus, parse_corpus_format(o.corpus_format), &report);
  for (const auto& p : report.problems) err << "warning: " << p << "\n";
  return docs;
}

int do_ingest(const Options& o, std::ostream& out, std::ostream& err) {
  require_exists(o.corpus, "corpus");
  if (!o.gazetteer.empty()) require_exists(o.gazetteer, "gazetteer");
  require_out_dir(o.out);
  auto nlp = NlpResources::load(resource_dir(o), o.gazetteer.empty() ? std::nullopt
                                                                     : std::optional<std::filesystem::path>(o.gazetteer));
  for (const auto& w : nlp.gazetteer.warnings()) err << "warning: " << w << "\n";
  auto docs = load_docs(o, err);
  if (o.covid_only) {
    docs = filter_covid_docs(docs);
    if (docs.empty()) throw EmptyCorpusError("no COVID documents in " + o.corpus);
  }
  GazetteerExtractor extractor(nlp.gazetteer);
  BuildReport report;
  auto graph = build_graph(docs, nlp.pipeline, extractor, &nlp.relations, &report, o.threads);
  export_graph(graph, o.out);
  out << "documents: " << report.documents << "\n"
      << "sentences: " << report.sentences << "\n"
      << "entities: " << report.entities << "\n"
      << "nodes: " << report.nodes << "\n"
      << "cooccurrence_edges: " << report.cooccurrence_edges << "\n"
      << "semantic_edges: " << report.semantic_edges << "\n"
      << "attribute_edges: " << report.attribute_edges << "\n"
      << "graph: " << o.out << "\n";
  return kOk;
}

int do_analyze(const std::string& which, const Options& o, std::ostream& out, std::ostream& err) {
  require_out_dir(o.out);
  auto nlp = NlpResources::load(resource_dir(o));
  auto docs = load_docs(o, err);
  bool json = o.format == "json";
  if (which == "top-symptoms") {
    auto table = symptom_document_counts(docs, nlp.gazetteer, nlp.pipeline);
    if (o.top_n > 0 && table.size() > o.top_n) table.resize(o.top_n);
    emit(o, json ? to_json(table) : to_csv(table), out);
  } else if (which == "title-words") {
    auto table = title_word_frequencies(docs, o.top_n, nlp.pipeline);
    emit(o, json ? to_json(table) : to_csv(table), out);
  } else {
    auto series = monthly_trend(docs, o.term, nlp.pipeline);
    emit(o, json ? to_json(series) : to_csv(series), out);
  }
  return kOk;
}

std::filesystem::path graph_path(const Options& o) {
  if (!o.graph.empty()) return o.graph;
  auto cfg = load_service_config(o.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.config));
  if (cfg.graph_path.empty()) throw ConfigError("no graph given: pass --graph or set graph_path");
  return cfg.graph_path;
}

std::string format_probability(double p) {
  std::ostringstream s;
  s << p;
  return s.str();
}

int do_query(const std::string& which, const Options& o, std::ostream& out) {
  auto path = graph_path(o);
  require_exists(path.string(), "graph");
  auto graph = import_graph(path);
  auto nlp = NlpResources::load(resource_dir(o));
  const auto& lem = nlp.pipeline.lemmatizer();
  bool json = o.format == "json";
  if (which == "neighbors") {
    auto ns = graph.neighbors(normalize(o.node, lem), o.k);
    if (json) {
      out << neighbors_to_json(ns).dump() << "\n";
    } else {
      for (const auto& n : ns) out << n.lemma_key << " " << format_probability(n.probability.value()) << "\n";
    }
  } else {
    auto category = parse_category(o.category);
    if (!category || !is_attribute_category(*category)) {
      throw ConfigError("category must be one of FORM, ROUTE, FREQUENCY, DOSAGE, STRENGTH, DURATION");
    }
    auto values = graph.query_attribute(normalize(o.drug, lem), *category);
    if (json) {
      out << attributes_to_json(values, graph).dump() << "\n";
    } else {
      for (const auto& v : values) out << v.value << " (count " << v.count << ")\n";
    }
  }
  return kOk;
}

int do_serve(const Options& o, std::ostream& out) {
  auto cfg = load_service_config(o.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.config));
  sigset_t signals, previous;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, &previous);
  int received = 0;
  {
    Service service(cfg);
    int port = service.start();
    out << "listening on http://" << cfg.host << ":" << port << std::endl;
    sigwait(&signals, &received);
    service.stop();
  }
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  out << "stopped (signal " << received << ")" << std::endl;
  return kOk;
}

int do_chat(const Options& o, std::istream& in, std::ostream& out) {
  httplib::Client client(o.url);
  client.set_read_timeout(30, 0);
  auto call = [&](const std::string& path, const Json& body) {
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw IoError("cannot reach " + o.url + ": " + httplib::to_string(res.error()));
    auto j = Json::parse(res->body, nullptr, false);
    if (j.is_discarded()) throw IoError("unexpected reply from " + o.url);
    if (j.contains("reply_text")) {
      out << "bot> " << j["reply_text"].get<std::string>() << std::endl;
    } else {
      out << "error> " << j.value("error", std::string("HTTP ") + std::to_string(res->status)) << std::endl;
    }
  };
  call("/api/conversations/start", {{"patient_id", o.patient}});
  std::string line;
  while (out << "you> " << std::flush, std::getline(in, line)) {
    if (trim(line).empty()) continue;
    call("/api/chat", {{"patient_id", o.patient}, {"message", line}});
  }
  out << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"medbot: literature knowledge graph and patient chatbot"};
  app.name("medbot");
  app.require_subcommand(1);
  app.add_option("--resources", o.resources, "Language resource directory (default: bundled data)");

  auto* ingest = app.add_subcommand("ingest", "Build a knowledge graph from a corpus");
  ingest->add_option("--corpus", o.corpus, "JSONL file or CORD-19 directory")->required();
  ingest->add_option("--corpus-format", o.corpus_format, "jsonl | cord19")->check(CLI::IsMember({"jsonl", "cord19"}));
  ingest->add_option("--gazetteer", o.gazetteer, "Gazetteer CSV (default: bundled)");
  ingest->add_option("--out", o.out, "Graph JSON output path")->required();
  ingest->add_flag("--covid-only", o.covid_only, "Keep only COVID documents");
  ingest->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "Corpus analytics");
  analyze->require_subcommand(1);
  std::string analysis;
  for (const char* name : {"top-symptoms", "title-words", "trend"}) {
    auto* sub = analyze->add_subcommand(name);
    sub->add_option("--corpus", o.corpus, "JSONL file or CORD-19 directory")->required();
    sub->add_option("--corpus-format", o.corpus_format, "jsonl | cord19")->check(CLI::IsMember({"jsonl", "cord19"}));
    sub->add_option("--format", o.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--out", o.out, "Write to a file instead of stdout");
    if (std::string(name) == "trend") {
      sub->add_option("--term", o.term, "Term to track")->required();
    } else {
      sub->add_option("--top", o.top_n, "Rows to keep (0: all)");
    }
    sub->callback([&analysis, name] { analysis = name; });
  }

  auto* query = app.add_subcommand("query", "Query a graph file");
  query->require_subcommand(1);
  std::string query_kind;
  auto* neighbors = query->add_subcommand("neighbors", "Top-k co-occurring nodes");
  neighbors->add_option("node", o.node)->required();
  neighbors->add_option("-k", o.k, "Neighbors to list")->check(CLI::PositiveNumber);
  auto* attribute = query->add_subcommand("attribute", "Attribute values of a drug");
  attribute->add_option("drug", o.drug)->required();
  attribute->add_option("category", o.category, "FORM, ROUTE, FREQUENCY, DOSAGE, STRENGTH or DURATION")->required();
  for (auto* sub : {neighbors, attribute}) {
    sub->add_option("--graph", o.graph, "Graph JSON (default: graph_path from config)");
    sub->add_option("--config", o.config, "Service config file");
    sub->add_option("--format", o.format, "text | json")->check(CLI::IsMember({"text", "json"}));
  }
  neighbors->callback([&] { query_kind = "neighbors"; });
  attribute->callback([&] { query_kind = "attribute"; });

  auto* serve = app.add_subcommand("serve", "Run the HTTP service until SIGINT or SIGTERM");
  serve->add_option("--config", o.config, "Service config file");

  auto* chat = app.add_subcommand("chat", "Chat with a running service from the terminal");
  chat->add_option("--patient", o.patient, "Patient id")->required();
  chat->add_option("--url", o.url, "Service base URL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    // Help of the innermost subcommand that was named.
    const CLI::App* sub = &app;
    while (!sub->get_subcommands().empty()) sub = sub->get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    if (*ingest) return do_ingest(o, out, err);
    if (*analyze) return do_analyze(analysis, o, out, err);
    if (*query) return do_query(query_kind, o, out);
    if (*serve) return do_serve(o, out);
    if (*chat) return do_chat(o, in, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace medbot::cli
