#include "denc/data.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace denc {
namespace {

using nlohmann::json;

std::string line_error(const std::string& path, int64_t line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> cols;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      cols.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cols.push_back(cur);
  return cols;
}

std::string json_string_field(const json& j, const char* key, int64_t line,
                              const std::string& path) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw std::runtime_error(line_error(path, line, std::string("missing string field '") + key + "'"));
  }
  return j[key].get<std::string>();
}

PairLabel parse_generic_label(const std::string& s, int64_t line, const std::string& path) {
  if (s == "positive") return PairLabel::positive;
  if (s == "negative") return PairLabel::negative;
  throw std::runtime_error(line_error(path, line, "unknown label '" + s + "'"));
}

// NLI three-way labels fold into the pair label; contradiction pairs carry no
// usable signal for retrieval and are dropped.
bool map_nli_label(const std::string& s, PairLabel& out, int64_t line, const std::string& path) {
  if (s == "entailment") {
    out = PairLabel::positive;
    return true;
  }
  if (s == "neutral") {
    out = PairLabel::negative;
    return true;
  }
  if (s == "contradiction") return false;
  throw std::runtime_error(line_error(path, line, "unknown nli label '" + s + "'"));
}

DocumentRecord doc_from_entities(const json& j, int64_t line, const std::string& path) {
  DocumentRecord doc;
  if (j.contains("id")) {
    if (!j["id"].is_string()) throw std::runtime_error(line_error(path, line, "'id' must be a string"));
    doc.id = j["id"].get<std::string>();
  } else {
    doc.id = "p" + std::to_string(line);
  }
  if (!j.contains("entities") || !j["entities"].is_array() || j["entities"].empty()) {
    throw std::runtime_error(line_error(path, line, "missing non-empty 'entities' array"));
  }
  for (const auto& e : j["entities"]) {
    if (!e.is_object() || !e.contains("kind") || !e.contains("text") || !e["kind"].is_string() ||
        !e["text"].is_string()) {
      throw std::runtime_error(line_error(path, line, "entity needs string 'kind' and 'text'"));
    }
    DocEntity ent;
    try {
      ent.kind = parse_entity_kind(e["kind"].get<std::string>());
    } catch (const std::exception& ex) {
      throw std::runtime_error(line_error(path, line, ex.what()));
    }
    ent.text = e["text"].get<std::string>();
    doc.entities.push_back(ent);
  }
  if (j.contains("language")) doc.language = j["language"].get<std::string>();
  try {
    validate_document(doc);
  } catch (const std::exception& ex) {
    throw std::runtime_error(line_error(path, line, ex.what()));
  }
  return doc;
}

DocumentRecord single_entity_doc(const std::string& text, int64_t line) {
  DocumentRecord doc;
  doc.id = "p" + std::to_string(line);
  doc.entities.push_back({EntityKind::other, text});
  return doc;
}

// Returns false when the line is dropped on purpose (nli contradiction).
bool parse_line(const std::string& raw, FileFormat format, DataSchema schema, int64_t line,
                const std::string& path, PairExample& out) {
  out = PairExample{};
  if (format == FileFormat::tsv) {
    std::vector<std::string> cols = split_tsv(raw);
    switch (schema) {
      case DataSchema::click: {
        if (cols.size() != 5) {
          throw std::runtime_error(line_error(path, line, "expected 5 columns (query, title, description, url, language), got " +
                                                              std::to_string(cols.size())));
        }
        out.query = cols[0];
        out.doc.id = "p" + std::to_string(line);
        out.doc.entities.push_back({EntityKind::title, cols[1]});
        out.doc.entities.push_back({EntityKind::description, cols[2]});
        out.doc.entities.push_back({EntityKind::url, cols[3]});
        out.doc.language = cols[4];
        out.language = cols[4];
        out.label = PairLabel::positive;
        break;
      }
      case DataSchema::nli: {
        if (cols.size() != 3) {
          throw std::runtime_error(line_error(path, line, "expected 3 columns (premise, hypothesis, label), got " +
                                                              std::to_string(cols.size())));
        }
        PairLabel label;
        if (!map_nli_label(cols[2], label, line, path)) return false;
        out.query = cols[0];
        out.doc = single_entity_doc(cols[1], line);
        out.label = label;
        break;
      }
      case DataSchema::translation: {
        if (cols.size() != 2 && cols.size() != 3) {
          throw std::runtime_error(line_error(path, line, "expected 2 or 3 columns (source, target[, language]), got " +
                                                              std::to_string(cols.size())));
        }
        out.query = cols[0];
        out.doc = single_entity_doc(cols[1], line);
        if (cols.size() == 3) {
          out.language = cols[2];
          out.doc.language = cols[2];
        }
        out.label = PairLabel::positive;
        break;
      }
      case DataSchema::generic: {
        if (cols.size() != 3 && cols.size() != 4) {
          throw std::runtime_error(line_error(path, line, "expected 3 or 4 columns (query, text, label[, language]), got " +
                                                              std::to_string(cols.size())));
        }
        out.query = cols[0];
        out.doc = single_entity_doc(cols[1], line);
        out.label = parse_generic_label(cols[2], line, path);
        if (cols.size() == 4) {
          out.language = cols[3];
          out.doc.language = cols[3];
        }
        break;
      }
    }
    if (out.query.empty()) throw std::runtime_error(line_error(path, line, "empty query"));
    return true;
  }

  json j;
  try {
    j = json::parse(raw);
  } catch (const json::exception& ex) {
    throw std::runtime_error(line_error(path, line, std::string("bad JSON: ") + ex.what()));
  }
  if (!j.is_object()) throw std::runtime_error(line_error(path, line, "line is not a JSON object"));
  switch (schema) {
    case DataSchema::click: {
      out.query = json_string_field(j, "query", line, path);
      out.doc.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                           : "p" + std::to_string(line);
      out.doc.entities.push_back({EntityKind::title, json_string_field(j, "title", line, path)});
      out.doc.entities.push_back({EntityKind::description, json_string_field(j, "description", line, path)});
      out.doc.entities.push_back({EntityKind::url, json_string_field(j, "url", line, path)});
      if (j.contains("language")) {
        out.language = j["language"].get<std::string>();
        out.doc.language = out.language;
      }
      out.label = PairLabel::positive;
      break;
    }
    case DataSchema::nli: {
      std::string premise = json_string_field(j, "premise", line, path);
      std::string hypothesis = json_string_field(j, "hypothesis", line, path);
      PairLabel label;
      if (!map_nli_label(json_string_field(j, "label", line, path), label, line, path)) return false;
      out.query = premise;
      out.doc = single_entity_doc(hypothesis, line);
      out.label = label;
      break;
    }
    case DataSchema::translation: {
      out.query = json_string_field(j, "source", line, path);
      out.doc = single_entity_doc(json_string_field(j, "target", line, path), line);
      if (j.contains("language")) {
        out.language = j["language"].get<std::string>();
        out.doc.language = out.language;
      }
      out.label = PairLabel::positive;
      break;
    }
    case DataSchema::generic: {
      out.query = json_string_field(j, "query", line, path);
      out.doc = doc_from_entities(j, line, path);
      out.label = parse_generic_label(json_string_field(j, "label", line, path), line, path);
      if (j.contains("language")) out.language = j["language"].get<std::string>();
      break;
    }
  }
  if (out.query.empty()) throw std::runtime_error(line_error(path, line, "empty query"));
  return true;
}

}  // namespace

DataSchema parse_schema(const std::string& s) {
  if (s == "click") return DataSchema::click;
  if (s == "nli") return DataSchema::nli;
  if (s == "translation") return DataSchema::translation;
  if (s == "generic") return DataSchema::generic;
  throw std::runtime_error("unknown schema '" + s + "' (valid: click, nli, translation, generic)");
}

FileFormat parse_format(const std::string& s) {
  if (s == "tsv") return FileFormat::tsv;
  if (s == "jsonl") return FileFormat::jsonl;
  throw std::runtime_error("unknown format '" + s + "' (valid: tsv, jsonl)");
}

std::string to_string(DataSchema s) {
  switch (s) {
    case DataSchema::click: return "click";
    case DataSchema::nli: return "nli";
    case DataSchema::translation: return "translation";
    case DataSchema::generic: return "generic";
  }
  throw std::runtime_error("bad schema value");
}

std::string to_string(FileFormat f) {
  switch (f) {
    case FileFormat::tsv: return "tsv";
    case FileFormat::jsonl: return "jsonl";
  }
  throw std::runtime_error("bad format value");
}

std::vector<PairExample> load_pair_dataset(const std::string& path, FileFormat format,
                                           DataSchema schema, bool skip_malformed,
                                           LoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  LoadStats local;
  std::vector<PairExample> out;
  std::string raw;
  int64_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    PairExample ex;
    try {
      if (!parse_line(raw, format, schema, line, path, ex)) {
        ++local.dropped_contradiction;
        continue;
      }
    } catch (const std::exception&) {
      if (!skip_malformed) throw;
      ++local.skipped_malformed;
      continue;
    }
    ex.task = to_string(schema);
    out.push_back(std::move(ex));
    ++local.loaded;
  }
  if (stats != nullptr) *stats = local;
  return out;
}

std::vector<DocumentRecord> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  std::vector<DocumentRecord> docs;
  std::string raw;
  int64_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::exception& ex) {
      throw std::runtime_error(line_error(path, line, std::string("bad JSON: ") + ex.what()));
    }
    if (!j.contains("id") || !j["id"].is_string()) {
      throw std::runtime_error(line_error(path, line, "missing string field 'id'"));
    }
    docs.push_back(doc_from_entities(j, line, path));
  }
  return docs;
}

void save_corpus(const std::string& path, const std::vector<DocumentRecord>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const DocumentRecord& doc : docs) {
    json j;
    j["id"] = doc.id;
    j["language"] = doc.language;
    j["entities"] = json::array();
    for (const DocEntity& e : doc.entities) {
      j["entities"].push_back({{"kind", to_string(e.kind)}, {"text", e.text}});
    }
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing corpus file: " + path);
}

JudgedSet load_judged_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open judged set file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw std::runtime_error(path + ": bad JSON: " + ex.what());
  }
  if (!j.contains("queries") || !j["queries"].is_array()) {
    throw std::runtime_error(path + ": missing 'queries' array");
  }
  JudgedSet judged;
  for (const auto& q : j["queries"]) {
    JudgedQuery jq;
    jq.query_id = q.at("query_id").get<std::string>();
    jq.text = q.at("text").get<std::string>();
    for (const auto& pair : q.at("judgments")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw std::runtime_error(path + ": judgment entries must be [doc_id, gain] pairs");
      }
      jq.judgments.emplace_back(pair[0].get<std::string>(), pair[1].get<double>());
    }
    judged.queries.push_back(std::move(jq));
  }
  return judged;
}

void save_judged_set(const std::string& path, const JudgedSet& judged) {
  json j;
  j["queries"] = json::array();
  for (const JudgedQuery& q : judged.queries) {
    json jq;
    jq["query_id"] = q.query_id;
    jq["text"] = q.text;
    jq["judgments"] = json::array();
    for (const auto& [doc_id, gain] : q.judgments) {
      jq["judgments"].push_back({doc_id, gain});
    }
    j["queries"].push_back(std::move(jq));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write judged set file: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed while writing judged set file: " + path);
}

}  // namespace denc
