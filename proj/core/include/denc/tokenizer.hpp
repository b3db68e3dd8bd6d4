#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace denc {

struct TokenSequence {
  std::vector<int> ids;     // padded to the requested max_len
  int64_t true_length = 0;  // count before padding
};

// Byte-level BPE vocabulary. Ids: pad=0, bos=1, eos=2, raw bytes 3..258,
// merged tokens from 259 in merge order. Every byte has a token, so encode
// is total on arbitrary strings. Immutable once trained or loaded.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kReserved = 3;  // pad/bos/eos
  static constexpr int kFirstMerged = kReserved + 256;

  static int byte_token(unsigned char b) { return kReserved + static_cast<int>(b); }

  Vocab();  // byte-only vocabulary, no merges

  int size() const { return kFirstMerged + static_cast<int>(merges_.size()); }

  // Token text (raw bytes). pad/bos/eos render as "<pad>", "<bos>", "<eos>".
  const std::string& token(int id) const;

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  // Appends a merge rule; both sides must already be tokens. Used by the
  // trainer and the file loader.
  void add_merge(std::string left, std::string right);

  // Applies the merge rules to one whitespace-free word, returning token ids.
  std::vector<int> segment_word(const std::string& word) const;

  bool has_token(const std::string& text) const { return text_to_id_.count(text) > 0; }

 private:
  std::vector<std::string> id_to_text_;
  std::unordered_map<std::string, int> text_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;

  struct PairHash {
    size_t operator()(const std::pair<std::string, std::string>& p) const {
      return std::hash<std::string>{}(p.first) * 1000003u ^ std::hash<std::string>{}(p.second);
    }
  };
  std::unordered_map<std::pair<std::string, std::string>, int, PairHash> rank_;
};

// Learns merge rules from corpus lines until the vocabulary reaches
// vocab_size (>= 259) or no adjacent pair is left to merge. Words are
// maximal runs of printable bytes; whitespace and control bytes (<= 0x20
// and 0x7f) stay single-byte tokens and are never merged, so decode is an
// exact inverse. Fully deterministic; count ties go to the
// lexicographically smallest (left, right). The seed is accepted for
// interface stability but the algorithm draws nothing from it.
Vocab train_bpe(const std::vector<std::string>& corpus_lines, int vocab_size, uint64_t seed = 0);

// Subword ids only: no specials, no padding, any length.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab);

// [bos] + subword tokens + [eos], padded with pad to max_len exactly.
// Longer sequences keep a prefix when truncate is set and throw otherwise.
TokenSequence encode(const std::string& text, const Vocab& vocab, int64_t max_len, bool truncate);

// Concatenation of token texts, skipping pad/bos/eos. Unknown id throws.
std::string decode(const std::vector<int>& ids, const Vocab& vocab);

// Text format: line 1 "denc-bpe 1", line 2 vocab size, then one merge per
// line as "left right" (token bytes contain no whitespace by construction).
void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

}  // namespace denc
