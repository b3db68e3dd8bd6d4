#include "denc/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "denc/data.hpp"
#include "denc/rng.hpp"
#include "json.hpp"

namespace denc {
namespace {

using nlohmann::json;

constexpr const char* kConsonants = "bdfghjklmnprstvz";  // 16
constexpr const char* kVowels = "aeiou";                 // 5

// Distinct rng stream per artifact so files do not depend on emission order.
enum Stream : uint64_t {
  kStreamBpe = 101,
  kStreamCorpusSemantic = 102,
  kStreamCorpusClick = 103,
  kStreamCorpusNoisy = 104,
  kStreamClickPairs = 105,
  kStreamSemanticPairs = 106,
  kStreamValPairs = 107,
  kStreamNoisyPairs = 108,
  kStreamTranslationPairs = 109,
  kStreamJudgedSemantic = 110,
  kStreamJudgedClick = 111,
  kStreamJudgedNoisy = 112,
  kStreamDistill = 113,
};

std::string pad4(int64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld", static_cast<long long>(n));
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  return out;
}

struct WordSpace {
  const SynthSpec& spec;

  // Filler slots are split so evaluation queries never repeat a training
  // query string: training text draws from the first half, held-out text
  // from the second.
  int64_t filler_begin() const { return spec.subtopics; }
  int64_t filler_split() const { return spec.subtopics + (kSynthSlotCount - spec.subtopics) / 2; }

  int64_t train_filler(Rng& rng) const {
    return filler_begin() + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(filler_split() - filler_begin())));
  }
  int64_t eval_filler(Rng& rng) const {
    return filler_split() + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(kSynthSlotCount - filler_split())));
  }

  std::string word(int64_t topic, int64_t slot, bool register_b) const {
    return synth_topic_word(topic, slot, register_b);
  }

  std::string query_text(int64_t topic, int64_t subtopic, Rng& rng, bool held_out) const {
    std::string text = word(topic, subtopic, false);
    int64_t extra = held_out ? 2 : 1 + static_cast<int64_t>(rng.next_below(2));
    for (int64_t i = 0; i < extra; ++i) {
      int64_t f = held_out ? eval_filler(rng) : train_filler(rng);
      text += " " + word(topic, f, false);
    }
    return text;
  }

  std::string noise_word(Rng& rng) const {
    int64_t len = 8 + static_cast<int64_t>(rng.next_below(5));
    std::string w;
    for (int64_t i = 0; i < len; ++i) w.push_back(static_cast<char>('0' + rng.next_below(10)));
    return w;
  }

  DocumentRecord corpus_doc(int64_t topic, int64_t subtopic, Rng& rng, bool register_b,
                            bool noisy_url, const std::string& id_prefix) const {
    bool b = register_b;
    DocumentRecord doc;
    doc.id = id_prefix + pad4(topic * spec.subtopics + subtopic);
    std::string key = word(topic, subtopic, b);
    std::string title = key + " " + word(topic, train_filler(rng), b);
    std::string desc = word(topic, train_filler(rng), b) + " " + word(topic, train_filler(rng), b);
    if (rng.next_below(2) == 0) desc += " " + word(topic, train_filler(rng), b);
    std::string url = noisy_url ? noise_word(rng) : "www." + key + ".xyz";
    doc.entities.push_back({EntityKind::title, title});
    doc.entities.push_back({EntityKind::description, desc});
    doc.entities.push_back({EntityKind::url, url});
    return doc;
  }
};

// Every (topic, subtopic) combination appears at least once among the
// positives when the budget allows, so retrieval truth is fully covered.
std::vector<std::pair<int64_t, int64_t>> shuffled_combos(const SynthSpec& spec, Rng& rng) {
  std::vector<std::pair<int64_t, int64_t>> combos;
  combos.reserve(static_cast<size_t>(spec.topics * spec.subtopics));
  for (int64_t t = 0; t < spec.topics; ++t) {
    for (int64_t s = 0; s < spec.subtopics; ++s) combos.emplace_back(t, s);
  }
  rng.shuffle(combos);
  return combos;
}

std::pair<int64_t, int64_t> next_combo(const std::vector<std::pair<int64_t, int64_t>>& combos,
                                       int64_t& cursor, const SynthSpec& spec, Rng& rng) {
  if (cursor < static_cast<int64_t>(combos.size())) return combos[cursor++];
  return {static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.topics))),
          static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.subtopics)))};
}

int64_t write_bpe_corpus(const std::filesystem::path& path, const WordSpace& ws, Rng& rng) {
  std::ofstream out = open_out(path);
  int64_t lines = 0;
  // Standalone syllables only: the learned merges can then never cross a
  // syllable boundary inside a task word, so every register word encodes to
  // exactly its three syllable tokens.
  for (int64_t t = 0; t < ws.spec.topics; ++t) {
    std::string line;
    for (int64_t rep = 0; rep < 8; ++rep) {
      line += synth_syllable(2 * t) + " " + synth_syllable(2 * t + 1) + " ";
    }
    out << line << "\n";
    ++lines;
  }
  for (int64_t rep = 0; rep < 16; ++rep) {
    std::string line;
    for (int64_t i = 0; i < 80; ++i) line += synth_syllable(i) + " ";
    out << line << "\n";
    ++lines;
  }
  for (int64_t rep = 0; rep < 4; ++rep) {
    std::string line;
    for (int64_t i = 0; i < 80; ++i) line += synth_transliterate(synth_syllable(i)) + " ";
    out << line << "\n";
    ++lines;
  }
  for (int64_t i = 0; i < 20; ++i) {
    out << "www xyz www xyz www xyz\n";
    ++lines;
  }
  for (int64_t i = 0; i < 6; ++i) {
    std::string line;
    for (int64_t k = 0; k < 10; ++k) line += ws.noise_word(rng) + " ";
    out << line << "\n";
    ++lines;
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return lines;
}

int64_t write_corpus_file(const std::filesystem::path& path, const WordSpace& ws, Rng& rng,
                          bool register_b, bool noisy_url, const std::string& id_prefix) {
  std::vector<DocumentRecord> docs;
  for (int64_t t = 0; t < ws.spec.topics; ++t) {
    for (int64_t s = 0; s < ws.spec.subtopics; ++s) {
      docs.push_back(ws.corpus_doc(t, s, rng, register_b, noisy_url, id_prefix));
    }
  }
  save_corpus(path.string(), docs);
  return static_cast<int64_t>(docs.size());
}

int64_t write_click_pairs(const std::filesystem::path& path, const WordSpace& ws, Rng& rng) {
  const SynthSpec& spec = ws.spec;
  std::ofstream out = open_out(path);
  std::vector<std::pair<int64_t, int64_t>> combos = shuffled_combos(spec, rng);
  int64_t cursor = 0;
  for (int64_t i = 0; i < spec.click_pairs; ++i) {
    auto [t, s] = next_combo(combos, cursor, spec, rng);
    std::string key = ws.word(t, s, false);
    std::string query = ws.query_text(t, s, rng, false);
    std::string title = key + " " + ws.word(t, ws.train_filler(rng), false);
    std::string desc =
        ws.word(t, ws.train_filler(rng), false) + " " + ws.word(t, ws.train_filler(rng), false);
    std::string url = "www." + key + ".xyz";
    out << query << "\t" << title << "\t" << desc << "\t" << url << "\ten\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return spec.click_pairs;
}

json semantic_pair_json(const WordSpace& ws, Rng& rng, int64_t t, int64_t s, bool positive,
                        bool held_out) {
  int64_t doc_topic = t;
  if (!positive) {
    // Topic-mismatch negative sharing the subtopic slot: surface token
    // overlap with the query is identical for positives and negatives, so
    // only the register mapping separates them.
    int64_t offset = 1 + static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(ws.spec.topics - 1)));
    doc_topic = (t + offset) % ws.spec.topics;
  }
  std::string title =
      ws.word(doc_topic, s, true) + " " + ws.word(doc_topic, ws.train_filler(rng), true);
  json j;
  j["query"] = ws.query_text(t, s, rng, held_out);
  j["entities"] = json::array({{{"kind", "title"}, {"text", title}}});
  j["label"] = positive ? "positive" : "negative";
  j["language"] = "en";
  j["topic"] = t;
  j["doc_topic"] = doc_topic;
  j["subtopic"] = s;
  return j;
}

int64_t write_semantic_pairs(const std::filesystem::path& path, const WordSpace& ws, Rng& rng,
                             int64_t count, bool held_out) {
  const SynthSpec& spec = ws.spec;
  std::ofstream out = open_out(path);
  std::vector<int> labels(static_cast<size_t>(count));
  for (int64_t i = 0; i < count / 2; ++i) labels[static_cast<size_t>(i)] = 1;
  rng.shuffle(labels);
  std::vector<std::pair<int64_t, int64_t>> combos = shuffled_combos(spec, rng);
  int64_t cursor = 0;
  for (int label : labels) {
    auto [t, s] = label == 1 ? next_combo(combos, cursor, spec, rng)
                             : std::pair<int64_t, int64_t>{
                                   static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.topics))),
                                   static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.subtopics)))};
    out << semantic_pair_json(ws, rng, t, s, label == 1, held_out).dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return count;
}

int64_t write_noisy_pairs(const std::filesystem::path& path, const WordSpace& ws, Rng& rng) {
  const SynthSpec& spec = ws.spec;
  std::ofstream out = open_out(path);
  std::vector<std::pair<int64_t, int64_t>> combos = shuffled_combos(spec, rng);
  int64_t cursor = 0;
  for (int64_t i = 0; i < spec.noisy_pairs; ++i) {
    auto [t, s] = next_combo(combos, cursor, spec, rng);
    std::string key = ws.word(t, s, false);
    json j;
    j["query"] = ws.query_text(t, s, rng, false);
    j["entities"] = json::array(
        {{{"kind", "title"}, {"text", key + " " + ws.word(t, ws.train_filler(rng), false)}},
         {{"kind", "description"},
          {"text", ws.word(t, ws.train_filler(rng), false) + " " + ws.word(t, ws.train_filler(rng), false)}},
         {{"kind", "url"}, {"text", ws.noise_word(rng)}}});
    j["label"] = "positive";
    j["language"] = "en";
    j["topic"] = t;
    j["doc_topic"] = t;
    j["subtopic"] = s;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return spec.noisy_pairs;
}

int64_t write_translation_pairs(const std::filesystem::path& path, const WordSpace& ws, Rng& rng) {
  const SynthSpec& spec = ws.spec;
  std::ofstream out = open_out(path);
  for (int64_t i = 0; i < spec.translation_pairs; ++i) {
    int64_t t = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.topics)));
    int64_t s = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.subtopics)));
    std::string source = ws.query_text(t, s, rng, false);
    out << source << "\t" << synth_transliterate(source) << "\txx\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return spec.translation_pairs;
}

int64_t write_judged_set(const std::filesystem::path& path, const WordSpace& ws, Rng& rng,
                         int64_t n_queries, const std::string& query_prefix,
                         const std::string& doc_prefix) {
  const SynthSpec& spec = ws.spec;
  std::vector<std::pair<int64_t, int64_t>> combos = shuffled_combos(spec, rng);
  auto doc_id = [&](int64_t t, int64_t s) { return doc_prefix + pad4(t * spec.subtopics + s); };
  JudgedSet judged;
  for (int64_t i = 0; i < n_queries; ++i) {
    auto [t, s] = combos[static_cast<size_t>(i)];
    JudgedQuery q;
    q.query_id = query_prefix + pad4(i);
    q.text = ws.query_text(t, s, rng, true);
    q.judgments.emplace_back(doc_id(t, s), 3.0);
    std::vector<int64_t> others;
    for (int64_t s2 = 0; s2 < spec.subtopics; ++s2) {
      if (s2 != s) others.push_back(s2);
    }
    rng.shuffle(others);
    for (int64_t k = 0; k < 4 && k < static_cast<int64_t>(others.size()); ++k) {
      q.judgments.emplace_back(doc_id(t, others[static_cast<size_t>(k)]), 1.0);
    }
    int64_t zeros = 0;
    while (zeros < 5) {
      int64_t t2 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.topics)));
      if (t2 == t) continue;
      int64_t s2 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.subtopics)));
      std::string id = doc_id(t2, s2);
      bool dup = false;
      for (const auto& [jid, gain] : q.judgments) dup = dup || jid == id;
      if (dup) continue;
      q.judgments.emplace_back(id, 0.0);
      ++zeros;
    }
    judged.queries.push_back(std::move(q));
  }
  save_judged_set(path.string(), judged);
  return n_queries;
}

int64_t write_distill_queries(const std::filesystem::path& path, const WordSpace& ws, Rng& rng) {
  const SynthSpec& spec = ws.spec;
  std::ofstream out = open_out(path);
  for (int64_t i = 0; i < spec.distill_queries; ++i) {
    int64_t t = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.topics)));
    int64_t s = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(spec.subtopics)));
    std::string text = ws.query_text(t, s, rng, false);
    if (i % 5 == 4) text = synth_transliterate(text);
    out << text << "\n";
  }
  if (!out) throw std::runtime_error("failed while writing " + path.string());
  return spec.distill_queries;
}

}  // namespace

void SynthSpec::validate() const {
  if (topics < 2 || topics > 40) throw std::runtime_error("synth: topics must be in [2, 40]");
  if (subtopics < 5 || subtopics > kSynthSlotCount - 4) {
    throw std::runtime_error("synth: subtopics must be in [5, 36]");
  }
  if (semantic_pairs < 2 || semantic_pairs % 2 != 0) {
    throw std::runtime_error("synth: semantic_pairs must be positive and even");
  }
  if (val_pairs < 2 || val_pairs % 2 != 0) {
    throw std::runtime_error("synth: val_pairs must be positive and even");
  }
  if (click_pairs < 1 || noisy_pairs < 1 || translation_pairs < 1 || distill_queries < 1) {
    throw std::runtime_error("synth: pair and query counts must be positive");
  }
  int64_t combos = topics * subtopics;
  if (judged_semantic_queries < 1 || judged_click_queries < 1 || judged_noisy_queries < 1 ||
      judged_semantic_queries > combos || judged_click_queries > combos ||
      judged_noisy_queries > combos) {
    throw std::runtime_error("synth: judged query counts must be in [1, topics*subtopics]");
  }
  if ((topics - 1) * subtopics < 5) {
    throw std::runtime_error("synth: too few documents outside a topic for zero-gain judgments");
  }
}

std::string synth_syllable(int64_t index) {
  if (index < 0 || index >= 80) throw std::runtime_error("synth: syllable index out of range");
  std::string s;
  s.push_back(kConsonants[index / 5]);
  s.push_back(kVowels[index % 5]);
  return s;
}

std::string synth_topic_word(int64_t topic, int64_t slot, bool register_b) {
  if (topic < 0 || topic >= 40) throw std::runtime_error("synth: topic out of range");
  if (slot < 0 || slot >= kSynthSlotCount) throw std::runtime_error("synth: slot out of range");
  std::string outer = synth_syllable(2 * topic + (register_b ? 1 : 0));
  return outer + synth_syllable(slot) + outer;
}

std::string synth_transliterate(const std::string& latin) {
  auto map_char = [](char c) -> const char* {
    switch (c) {
      case 'a': return "а";
      case 'b': return "б";
      case 'd': return "д";
      case 'e': return "е";
      case 'f': return "ф";
      case 'g': return "г";
      case 'h': return "х";
      case 'i': return "и";
      case 'j': return "ж";
      case 'k': return "к";
      case 'l': return "л";
      case 'm': return "м";
      case 'n': return "н";
      case 'o': return "о";
      case 'p': return "п";
      case 'r': return "р";
      case 's': return "с";
      case 't': return "т";
      case 'u': return "у";
      case 'v': return "в";
      case 'z': return "з";
      default: return nullptr;
    }
  };
  std::string out;
  for (char c : latin) {
    const char* m = map_char(c);
    if (m != nullptr) {
      out += m;
    } else {
      out.push_back(c);
    }
  }
  return out;
}

SynthFiles generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  WordSpace ws{spec};
  auto stream = [&](Stream s) { return Rng(mix_seed(spec.seed, static_cast<uint64_t>(s))); };

  SynthFiles result;
  auto add = [&](const std::string& name, int64_t records) { result.files.emplace_back(name, records); };

  {
    Rng rng = stream(kStreamBpe);
    add("bpe_corpus.txt", write_bpe_corpus(dir / "bpe_corpus.txt", ws, rng));
  }
  {
    Rng rng = stream(kStreamCorpusSemantic);
    add("corpus.jsonl", write_corpus_file(dir / "corpus.jsonl", ws, rng, true, false, "doc-"));
  }
  {
    Rng rng = stream(kStreamCorpusClick);
    add("click_corpus.jsonl",
        write_corpus_file(dir / "click_corpus.jsonl", ws, rng, false, false, "cdoc-"));
  }
  {
    Rng rng = stream(kStreamCorpusNoisy);
    add("noisy_corpus.jsonl",
        write_corpus_file(dir / "noisy_corpus.jsonl", ws, rng, false, true, "ndoc-"));
  }
  {
    Rng rng = stream(kStreamClickPairs);
    add("click_pairs.tsv", write_click_pairs(dir / "click_pairs.tsv", ws, rng));
  }
  {
    Rng rng = stream(kStreamSemanticPairs);
    add("semantic_pairs.jsonl",
        write_semantic_pairs(dir / "semantic_pairs.jsonl", ws, rng, spec.semantic_pairs, false));
  }
  {
    Rng rng = stream(kStreamValPairs);
    add("semantic_pairs_val.jsonl",
        write_semantic_pairs(dir / "semantic_pairs_val.jsonl", ws, rng, spec.val_pairs, true));
  }
  {
    Rng rng = stream(kStreamNoisyPairs);
    add("noisy_pairs.jsonl", write_noisy_pairs(dir / "noisy_pairs.jsonl", ws, rng));
  }
  {
    Rng rng = stream(kStreamTranslationPairs);
    add("translation_pairs.tsv",
        write_translation_pairs(dir / "translation_pairs.tsv", ws, rng));
  }
  {
    Rng rng = stream(kStreamJudgedSemantic);
    add("judged_semantic.json", write_judged_set(dir / "judged_semantic.json", ws, rng,
                                                 spec.judged_semantic_queries, "sq-", "doc-"));
  }
  {
    Rng rng = stream(kStreamJudgedClick);
    add("judged_click.json", write_judged_set(dir / "judged_click.json", ws, rng,
                                              spec.judged_click_queries, "cq-", "cdoc-"));
  }
  {
    Rng rng = stream(kStreamJudgedNoisy);
    add("judged_noisy.json", write_judged_set(dir / "judged_noisy.json", ws, rng,
                                              spec.judged_noisy_queries, "nq-", "ndoc-"));
  }
  {
    Rng rng = stream(kStreamDistill);
    add("distill_queries.txt", write_distill_queries(dir / "distill_queries.txt", ws, rng));
  }

  json manifest;
  manifest["seed"] = spec.seed;
  manifest["spec"] = {{"topics", spec.topics},
                      {"subtopics", spec.subtopics},
                      {"click_pairs", spec.click_pairs},
                      {"semantic_pairs", spec.semantic_pairs},
                      {"val_pairs", spec.val_pairs},
                      {"noisy_pairs", spec.noisy_pairs},
                      {"translation_pairs", spec.translation_pairs},
                      {"judged_semantic_queries", spec.judged_semantic_queries},
                      {"judged_click_queries", spec.judged_click_queries},
                      {"judged_noisy_queries", spec.judged_noisy_queries},
                      {"distill_queries", spec.distill_queries}};
  manifest["files"] = json::array();
  for (const auto& [name, records] : result.files) {
    manifest["files"].push_back({{"name", name}, {"records", records}});
  }
  {
    std::ofstream out = open_out(dir / "synth_manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("failed while writing synth manifest");
  }
  add("synth_manifest.json", 1);
  return result;
}

}  // namespace denc
