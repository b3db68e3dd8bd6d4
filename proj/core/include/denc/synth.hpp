#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace denc {

// Knobs for the synthetic corpus. Sizes are exact: every emitted file has
// precisely the requested number of records, and balanced pair files are an
// exact 50/50 split.
struct SynthSpec {
  int64_t topics = 40;
  int64_t subtopics = 25;
  int64_t click_pairs = 4000;
  int64_t semantic_pairs = 4000;   // balanced, must be even
  int64_t val_pairs = 600;         // balanced held-out semantic pairs, must be even
  int64_t noisy_pairs = 2000;      // click-style with a pure-noise url entity
  int64_t translation_pairs = 1000;
  int64_t judged_semantic_queries = 200;
  int64_t judged_click_queries = 100;
  int64_t judged_noisy_queries = 100;
  int64_t distill_queries = 400;
  uint64_t seed = 7;

  void validate() const;
};

// Each topic owns two disjoint registers of words: register A is the surface
// vocabulary used by queries and click-style documents, register B is the
// synonym vocabulary used by semantic-style documents. A word is three
// hyphen-joined syllables; the outer syllable identifies (topic, register)
// and the middle syllable identifies the slot. Slots below `subtopics` are
// subtopic keys, the rest are topic-level filler.
inline constexpr int64_t kSynthSlotCount = 40;

std::string synth_syllable(int64_t index);  // index in [0, 80)
std::string synth_topic_word(int64_t topic, int64_t slot, bool register_b);

// Maps Latin letters to Cyrillic homophones; everything else passes through.
std::string synth_transliterate(const std::string& latin);

struct SynthFiles {
  // (file name relative to out_dir, record count)
  std::vector<std::pair<std::string, int64_t>> files;
};

// Writes the full fixture set into out_dir: a BPE training corpus, three
// document corpora (semantic, click, noisy-url), training pair files for each
// task, held-out validation pairs, graded judged sets, distillation queries,
// and a manifest. Deterministic in spec.seed.
SynthFiles generate_synthetic(const SynthSpec& spec, const std::string& out_dir);

}  // namespace denc
