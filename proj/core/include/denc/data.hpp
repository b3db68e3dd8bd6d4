#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denc/eval.hpp"
#include "denc/pooling.hpp"

namespace denc {

enum class PairLabel { positive, negative };

// One training example: a query against a multi-entity document.
struct PairExample {
  std::string query;
  DocumentRecord doc;
  PairLabel label = PairLabel::positive;
  std::string language = "en";
  std::string task;
};

enum class DataSchema { click, nli, translation, generic };
enum class FileFormat { tsv, jsonl };

DataSchema parse_schema(const std::string& s);
FileFormat parse_format(const std::string& s);
std::string to_string(DataSchema s);
std::string to_string(FileFormat f);

struct LoadStats {
  int64_t loaded = 0;
  int64_t dropped_contradiction = 0;
  int64_t skipped_malformed = 0;
};

// Reads one file into pair examples.
//   click:       query / title / description / url / language, always positive
//   nli:         entailment -> positive, neutral -> negative, contradiction dropped
//   translation: source / target, always positive
//   generic:     query / entities / label / language
// Malformed lines throw with the 1-based line number unless skip_malformed,
// which counts them instead.
std::vector<PairExample> load_pair_dataset(const std::string& path, FileFormat format,
                                           DataSchema schema, bool skip_malformed = false,
                                           LoadStats* stats = nullptr);

// Corpus files are JSONL: {"id", "entities": [{"kind", "text"}...], "language"}.
std::vector<DocumentRecord> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<DocumentRecord>& docs);

// Judged sets are one JSON document listing queries and graded judgments.
JudgedSet load_judged_set(const std::string& path);
void save_judged_set(const std::string& path, const JudgedSet& judged);

}  // namespace denc
