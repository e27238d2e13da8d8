#include "medbot/corpus.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "medbot/error.hpp"
#include "medbot/util.hpp"

namespace medbot {

using nlohmann::json;

CorpusFormat parse_corpus_format(std::string_view tag) {
  if (tag == "jsonl") return CorpusFormat::Jsonl;
  if (tag == "cord19" || tag == "metadata-csv+json-dir") return CorpusFormat::Cord19;
  throw ConfigError("unknown corpus format '" + std::string(tag) + "' (expected jsonl or cord19)");
}

namespace {

// Optional string field: absent or null → "", anything but a string → malformed.
bool read_text_field(const json& obj, const char* key, std::string& out) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    out.clear();
    return true;
  }
  if (!it->is_string()) return false;
  out = it->get<std::string>();
  return true;
}

std::optional<Document> parse_jsonl_record(std::string_view line, std::string& why) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) {
    why = "not a JSON object";
    return std::nullopt;
  }
  Document doc;
  auto id = obj.find("doc_id");
  if (id == obj.end() || !id->is_string() || id->get<std::string>().empty()) {
    why = "missing or empty doc_id";
    return std::nullopt;
  }
  doc.doc_id = id->get<std::string>();
  if (!read_text_field(obj, "title", doc.title) || !read_text_field(obj, "abstract", doc.abstract) ||
      !read_text_field(obj, "body", doc.body)) {
    why = "non-string text field";
    return std::nullopt;
  }
  auto date = obj.find("publish_date");
  if (date != obj.end() && !date->is_null()) {
    if (!date->is_string()) {
      why = "publish_date is not a string";
      return std::nullopt;
    }
    doc.publish_date = parse_date(date->get<std::string>());
    if (!doc.publish_date) {
      why = "invalid publish_date";
      return std::nullopt;
    }
  }
  return doc;
}

std::string body_from_paper_json(const std::filesystem::path& file) {
  json paper = json::parse(read_file(file), nullptr, false);
  if (paper.is_discarded()) return {};
  std::vector<std::string> paragraphs;
  if (auto it = paper.find("body_text"); it != paper.end() && it->is_array()) {
    for (const auto& para : *it) {
      if (para.is_object() && para.contains("text") && para["text"].is_string()) {
        paragraphs.push_back(para["text"].get<std::string>());
      }
    }
  }
  return join(paragraphs, "\n");
}

void load_cord19(const std::filesystem::path& dir, std::vector<std::optional<Document>>& records,
                 std::vector<std::string>& problems) {
  auto rows = parse_csv(read_file(dir / "metadata.csv"));
  if (rows.empty()) return;
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  auto uid = column("cord_uid"), title = column("title"), abstract = column("abstract"),
       published = column("publish_time"), pmc = column("pmc_json_files"), pdf = column("pdf_json_files");
  if (!uid) throw ParseError(dir.string() + "/metadata.csv: no cord_uid column");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](std::optional<std::size_t> c) -> std::string {
      return c && *c < row.size() ? std::string(trim(row[*c])) : std::string{};
    };
    if (row.size() != header.size() || cell(uid).empty()) {
      problems.push_back("metadata.csv row " + std::to_string(r + 1) + ": malformed row");
      records.emplace_back(std::nullopt);
      continue;
    }
    Document doc;
    doc.doc_id = cell(uid);
    doc.title = cell(title);
    doc.abstract = cell(abstract);
    doc.publish_date = parse_date(cell(published));
    for (const auto& files : {cell(pmc), cell(pdf)}) {
      if (!doc.body.empty() || files.empty()) continue;
      std::string first = files.substr(0, files.find(';'));
      auto path = dir / std::string(trim(first));
      if (std::filesystem::exists(path)) doc.body = body_from_paper_json(path);
    }
    records.emplace_back(std::move(doc));
  }
}

}  // namespace

std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format, LoadReport* report) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) throw IoError("corpus path does not exist: " + path.string());
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = {};

  std::vector<std::optional<Document>> records;
  if (format == CorpusFormat::Jsonl) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (trim(line).empty()) continue;
      std::string why;
      auto doc = parse_jsonl_record(line, why);
      if (!doc) rep.problems.push_back("line " + std::to_string(n) + ": " + why);
      records.push_back(std::move(doc));
    }
  } else {
    load_cord19(path, records, rep.problems);
  }

  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  for (auto& rec : records) {
    if (!rec) {
      ++rep.skipped;
      continue;
    }
    if (!seen.insert(rec->doc_id).second) {
      ++rep.skipped;
      rep.problems.push_back("duplicate doc_id " + rec->doc_id);
      continue;
    }
    docs.push_back(std::move(*rec));
  }
  rep.loaded = docs.size();
  if (docs.empty()) throw EmptyCorpusError("no documents loaded from " + path.string());
  return docs;
}

std::string document_text(const Document& doc) {
  std::vector<std::string> parts;
  for (const auto* field : {&doc.title, &doc.abstract, &doc.body}) {
    if (!field->empty()) parts.push_back(*field);
  }
  return join(parts, "\n");
}

// ---------------------------------------------------------------- tokenizer

namespace {

bool is_word_byte(char c) {
  auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || u >= 0x80;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_joiner(char c) { return c == '-' || c == '\'' || c == '.' || c == '/'; }

bool has_word_byte(std::string_view s) { return std::any_of(s.begin(), s.end(), is_word_byte); }

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (is_word_byte(c)) {
      while (i < text.size()) {
        if (is_word_byte(text[i])) {
          ++i;
        } else if (is_joiner(text[i]) && i + 1 < text.size() && is_word_byte(text[i + 1])) {
          i += 2;
        } else {
          break;
        }
      }
    } else {
      ++i;
    }
    Token t;
    t.surface = std::string(text.substr(start, i - start));
    t.start = start;
    t.end = i;
    t.is_punct = !has_word_byte(t.surface);
    tokens.push_back(std::move(t));
  }
  return tokens;
}

// --------------------------------------------------------------- lemmatizer

namespace {

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool all_ascii_letters(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

std::string replace_curly_apostrophes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        static_cast<unsigned char>(s[i + 2]) == 0x99) {
      out.push_back('\'');
      i += 2;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

// Restores the stem after stripping -ing / -ed.
std::string fix_stem(std::string stem) {
  std::size_t n = stem.size();
  if (n >= 2 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' && stem[n - 1] != 's' &&
      stem[n - 1] != 'z') {
    stem.pop_back();
    return stem;
  }
  if (n >= 3 && ((ends_with(stem, "at") && !is_vowel(stem[n - 3])) || ends_with(stem, "bl") || ends_with(stem, "iz"))) {
    stem.push_back('e');
  }
  return stem;
}

bool has_vowel(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](char c) { return is_vowel(c) || c == 'y'; });
}

}  // namespace

Lemmatizer::Lemmatizer(std::unordered_map<std::string, std::string> exceptions) : exceptions_(std::move(exceptions)) {
  for (const auto& [word, lemma] : exceptions_) {
    if (this->lemmatize(lemma) != lemma) {
      throw ConfigError("lemma exception '" + word + " " + lemma + "': target is not a fixed point");
    }
  }
}

Lemmatizer Lemmatizer::load(const std::filesystem::path& exceptions_path) {
  if (!std::filesystem::exists(exceptions_path)) {
    throw ConfigError("lemma exceptions file not found: " + exceptions_path.string());
  }
  std::unordered_map<std::string, std::string> ex;
  for (const auto& line : read_data_lines(exceptions_path)) {
    std::istringstream in(line.text);
    std::string word, lemma;
    if (!(in >> word >> lemma)) {
      throw ConfigError(exceptions_path.string() + ":" + std::to_string(line.line_no) + ": expected 'word lemma'");
    }
    ex[to_lower(word)] = to_lower(lemma);
  }
  return Lemmatizer(std::move(ex));
}

std::string Lemmatizer::apply_rules(const std::string& w) const {
  if (auto it = exceptions_.find(w); it != exceptions_.end()) return it->second;
  if (w.size() <= 3 || !all_ascii_letters(w)) return w;
  std::size_t n = w.size();
  if (ends_with(w, "ies") && n > 4) return w.substr(0, n - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, n - 2);
  if (ends_with(w, "shes") || ends_with(w, "xes") || ends_with(w, "zzes") ||
      (ends_with(w, "ches") && !ends_with(w, "aches"))) {
    return w.substr(0, n - 2);
  }
  if (ends_with(w, "s")) {
    if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
    return w.substr(0, n - 1);
  }
  if (ends_with(w, "ing")) {
    std::string stem = w.substr(0, n - 3);
    if (stem.size() >= 3 && has_vowel(stem)) return fix_stem(std::move(stem));
    return w;
  }
  if (ends_with(w, "ed") && !ends_with(w, "eed")) {
    std::string stem = w.substr(0, n - 2);
    if (stem.size() >= 3 && has_vowel(stem)) return fix_stem(std::move(stem));
    return w;
  }
  return w;
}

std::string Lemmatizer::lemmatize(std::string_view word) const {
  std::string cur = replace_curly_apostrophes(to_lower(word));
  // Each rule application shortens the word or jumps to a checked fixed point,
  // so the loop terminates well before the bound.
  for (int i = 0; i < 16; ++i) {
    std::string next = apply_rules(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  return cur;
}

Token Lemmatizer::lemmatize(Token token) const {
  token.lemma = lemmatize(token.surface);
  return token;
}

Token lemmatize(Token token, const Lemmatizer& lemmatizer) { return lemmatizer.lemmatize(std::move(token)); }

// ---------------------------------------------------------------- stopwords

StopwordLexicon StopwordLexicon::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("stopword lexicon not found: " + path.string());
  std::unordered_set<std::string> words;
  for (const auto& line : read_data_lines(path)) words.insert(to_lower(line.text));
  return StopwordLexicon(std::move(words));
}

std::vector<Token> remove_stopwords(std::span<const Token> tokens, const StopwordLexicon& lexicon) {
  std::vector<Token> out;
  for (const auto& t : tokens) {
    if (t.is_punct || t.is_stopword || !has_word_byte(t.surface)) continue;
    if (lexicon.contains(to_lower(t.surface))) continue;
    if (!t.lemma.empty() && lexicon.contains(t.lemma)) continue;
    out.push_back(t);
  }
  return out;
}

std::vector<Token> TextPipeline::analyze(std::string_view text) const {
  auto tokens = tokenize(text);
  for (auto& t : tokens) {
    t.lemma = lemmatizer_.lemmatize(t.surface);
    t.is_stopword = stopwords_.contains(to_lower(t.surface)) || stopwords_.contains(t.lemma);
  }
  return tokens;
}

std::vector<Sentence> TextPipeline::sentences(const Document& doc) const { return split_sentences(doc, this); }

// ---------------------------------------------------------------- sentences

namespace {

const std::unordered_set<std::string>& abbreviations() {
  static const std::unordered_set<std::string> set = {
      "e.g.", "i.e.", "al.",  "et al.", "fig.", "figs.", "dr.",  "drs.", "vs.",  "approx.", "no.",  "nos.",
      "ref.", "refs.", "mr.", "mrs.",   "ms.",  "prof.", "st.",  "cf.",  "resp.", "eq.",    "ca.",  "vol.",
      "p.",   "pp.",  "ed.",  "eds.",   "jan.", "feb.",  "mar.", "apr.", "aug.", "sep.",    "sept.", "oct.",
      "nov.", "dec.", "min.", "max.",   "incl.", "viz."};
  return set;
}

// Word ending at `dot` (inclusive), lowercased, e.g. "e.g.".
bool is_abbreviation(std::string_view line, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_space(line[b - 1]) && line[b - 1] != '(') --b;
  std::string word = to_lower(line.substr(b, dot - b + 1));
  if (abbreviations().count(word)) return true;
  if (word.size() == 2 && word[0] >= 'a' && word[0] <= 'z' && line[b] >= 'A' && line[b] <= 'Z') return true;
  return false;
}

bool is_closer(char c) { return c == ')' || c == ']' || c == '"' || c == '\''; }

}  // namespace

std::vector<Sentence> split_sentences(const Document& doc, const TextPipeline* pipeline) {
  std::vector<Sentence> out;
  const std::string text = document_text(doc);
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b == e) return;
    Sentence s;
    s.doc_id = doc.doc_id;
    s.index = out.size();
    s.begin = b;
    s.text = text.substr(b, e - b);
    s.tokens = pipeline ? pipeline->analyze(s.text) : tokenize(s.text);
    out.push_back(std::move(s));
  };

  std::size_t line_begin = 0;
  while (line_begin <= text.size()) {
    std::size_t line_end = text.find('\n', line_begin);
    if (line_end == std::string::npos) line_end = text.size();
    std::string_view line(text.data() + line_begin, line_end - line_begin);
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < line.size()) {
      char c = line[i];
      if (c != '.' && c != '!' && c != '?') {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < line.size() && (line[j] == '.' || line[j] == '!' || line[j] == '?')) ++j;
      while (j < line.size() && is_closer(line[j])) ++j;
      bool boundary = j == line.size() || is_space(line[j]);
      if (boundary && c == '.' && j == i + 1 && is_abbreviation(line, i)) boundary = false;
      if (boundary) {
        emit(line_begin + start, line_begin + j);
        start = j;
      }
      i = j;
    }
    emit(line_begin + start, line_end);
    line_begin = line_end + 1;
  }
  return out;
}

// -------------------------------------------------------------------- covid

const std::vector<std::string>& covid_keywords() {
  static const std::vector<std::string> keywords = {"covid-19", "coronavirus", "cov-2",    "sars-cov-2",
                                                    "sars-cov", "hcov",        "2019-ncov"};
  return keywords;
}

bool is_covid_document(const Document& doc) {
  for (const auto* field : {&doc.title, &doc.abstract, &doc.body}) {
    std::string lower = to_lower(*field);
    for (const auto& kw : covid_keywords()) {
      if (lower.find(kw) != std::string::npos) return true;
    }
  }
  return false;
}

std::vector<Document> filter_covid_docs(std::span<const Document> docs) {
  std::vector<Document> out;
  std::copy_if(docs.begin(), docs.end(), std::back_inserter(out), is_covid_document);
  return out;
}

}  // namespace medbot
