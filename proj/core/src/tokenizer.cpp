#include "denc/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace denc {

namespace {

bool is_word_byte(unsigned char b) { return b > 0x20 && b != 0x7f; }

// Splits text into (word, is_word) runs; non-word bytes come out one by one.
template <typename WordFn, typename ByteFn>
void for_each_segment(const std::string& text, WordFn&& on_word, ByteFn&& on_byte) {
  size_t i = 0;
  while (i < text.size()) {
    if (is_word_byte(static_cast<unsigned char>(text[i]))) {
      size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      on_word(text.substr(i, j - i));
      i = j;
    } else {
      on_byte(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
}

}  // namespace

Vocab::Vocab() {
  id_to_text_.reserve(kFirstMerged);
  id_to_text_.push_back("<pad>");
  id_to_text_.push_back("<bos>");
  id_to_text_.push_back("<eos>");
  for (int b = 0; b < 256; ++b) {
    id_to_text_.push_back(std::string(1, static_cast<char>(b)));
  }
  // Only byte tokens enter the text lookup: the specials' display names must
  // not collide with real text, and byte 0 is distinct from "<pad>".
  for (int b = 0; b < 256; ++b) {
    text_to_id_.emplace(id_to_text_[static_cast<size_t>(kReserved + b)], kReserved + b);
  }
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::runtime_error("unknown token id " + std::to_string(id) + " (vocab size " +
                             std::to_string(size()) + ")");
  }
  return id_to_text_[static_cast<size_t>(id)];
}

void Vocab::add_merge(std::string left, std::string right) {
  if (!has_token(left) || !has_token(right)) {
    throw std::runtime_error("merge rule references unknown token: '" + left + "' + '" + right +
                             "'");
  }
  std::string joined = left + right;
  if (has_token(joined)) {
    throw std::runtime_error("merge produces duplicate token '" + joined + "'");
  }
  const int id = size();
  rank_.emplace(std::make_pair(left, right), static_cast<int>(merges_.size()));
  merges_.emplace_back(std::move(left), std::move(right));
  text_to_id_.emplace(joined, id);
  id_to_text_.push_back(std::move(joined));
}

std::vector<int> Vocab::segment_word(const std::string& word) const {
  std::vector<std::string> pieces;
  pieces.reserve(word.size());
  for (char c : word) pieces.emplace_back(1, c);
  while (pieces.size() > 1) {
    // lowest-rank applicable pair, then left-to-right replacement of all its
    // occurrences
    int best = -1;
    for (size_t i = 0; i + 1 < pieces.size(); ++i) {
      auto it = rank_.find({pieces[i], pieces[i + 1]});
      if (it != rank_.end() && (best < 0 || it->second < best)) best = it->second;
    }
    if (best < 0) break;
    const std::string& left = merges_[static_cast<size_t>(best)].first;
    const std::string& right = merges_[static_cast<size_t>(best)].second;
    std::vector<std::string> next;
    next.reserve(pieces.size());
    for (size_t i = 0; i < pieces.size();) {
      if (i + 1 < pieces.size() && pieces[i] == left && pieces[i + 1] == right) {
        next.push_back(left + right);
        i += 2;
      } else {
        next.push_back(std::move(pieces[i]));
        ++i;
      }
    }
    pieces = std::move(next);
  }
  std::vector<int> ids;
  ids.reserve(pieces.size());
  for (const std::string& p : pieces) ids.push_back(text_to_id_.at(p));
  return ids;
}

Vocab train_bpe(const std::vector<std::string>& corpus_lines, int vocab_size, uint64_t seed) {
  (void)seed;
  if (vocab_size < Vocab::kFirstMerged) {
    throw std::runtime_error("vocab_size must be at least " +
                             std::to_string(Vocab::kFirstMerged) + ", got " +
                             std::to_string(vocab_size));
  }
  // word -> frequency, ordered so iteration (and thus tie handling) is
  // reproducible
  std::map<std::string, int64_t> word_freq;
  for (const std::string& line : corpus_lines) {
    for_each_segment(
        line, [&](std::string w) { ++word_freq[std::move(w)]; }, [](unsigned char) {});
  }
  if (word_freq.empty()) throw std::runtime_error("bpe training corpus has no words");

  Vocab vocab;
  const int target_merges = vocab_size - Vocab::kFirstMerged;

  // current tokenization of each distinct word, as strings
  std::vector<std::pair<std::vector<std::string>, int64_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    std::vector<std::string> pieces;
    pieces.reserve(w.size());
    for (char c : w) pieces.emplace_back(1, c);
    words.emplace_back(std::move(pieces), f);
  }

  for (int m = 0; m < target_merges; ++m) {
    std::map<std::pair<std::string, std::string>, int64_t> counts;
    for (const auto& [pieces, f] : words) {
      for (size_t i = 0; i + 1 < pieces.size(); ++i) {
        counts[{pieces[i], pieces[i + 1]}] += f;
      }
    }
    // best = highest count; ties go to the lexicographically smallest pair,
    // which is the first map key at that count
    std::pair<std::string, std::string> best;
    int64_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count && !vocab.has_token(pair.first + pair.second)) {
        best = pair;
        best_count = c;
      }
    }
    if (best_count < 1) break;  // no adjacent pairs left anywhere
    vocab.add_merge(best.first, best.second);
    for (auto& [pieces, f] : words) {
      if (pieces.size() < 2) continue;
      std::vector<std::string> next;
      next.reserve(pieces.size());
      for (size_t i = 0; i < pieces.size();) {
        if (i + 1 < pieces.size() && pieces[i] == best.first && pieces[i + 1] == best.second) {
          next.push_back(best.first + best.second);
          i += 2;
        } else {
          next.push_back(std::move(pieces[i]));
          ++i;
        }
      }
      pieces = std::move(next);
    }
  }
  return vocab;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> ids;
  for_each_segment(
      text,
      [&](const std::string& w) {
        std::vector<int> word_ids = vocab.segment_word(w);
        ids.insert(ids.end(), word_ids.begin(), word_ids.end());
      },
      [&](unsigned char b) { ids.push_back(Vocab::byte_token(b)); });
  return ids;
}

TokenSequence encode(const std::string& text, const Vocab& vocab, int64_t max_len,
                     bool truncate) {
  if (max_len < 1) throw std::runtime_error("encode: max_len must be >= 1");
  std::vector<int> ids;
  ids.push_back(Vocab::kBos);
  {
    std::vector<int> body = tokenize(text, vocab);
    ids.insert(ids.end(), body.begin(), body.end());
  }
  ids.push_back(Vocab::kEos);

  if (static_cast<int64_t>(ids.size()) > max_len) {
    if (!truncate) {
      throw std::runtime_error("encode: sequence length " + std::to_string(ids.size()) +
                               " exceeds max_len " + std::to_string(max_len) +
                               " and truncation is disabled");
    }
    ids.resize(static_cast<size_t>(max_len));
  }
  TokenSequence seq;
  seq.true_length = static_cast<int64_t>(ids.size());
  ids.resize(static_cast<size_t>(max_len), Vocab::kPad);
  seq.ids = std::move(ids);
  return seq;
}

std::string decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kEos) continue;
    out += vocab.token(id);  // throws on unknown id
  }
  return out;
}

void save_vocab(const std::string& path, const Vocab& vocab) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open vocab file for writing: " + path);
  os << "denc-bpe 1\n" << vocab.size() << "\n";
  for (const auto& [l, r] : vocab.merges()) os << l << ' ' << r << '\n';
  if (!os) throw std::runtime_error("write failed for vocab file: " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open vocab file: " + path);
  std::string header;
  if (!std::getline(is, header) || header != "denc-bpe 1") {
    throw std::runtime_error("bad vocab header in " + path + " (expected 'denc-bpe 1')");
  }
  std::string size_line;
  if (!std::getline(is, size_line)) throw std::runtime_error("missing vocab size in " + path);
  int declared = 0;
  try {
    declared = std::stoi(size_line);
  } catch (const std::exception&) {
    throw std::runtime_error("bad vocab size line in " + path + ": '" + size_line + "'");
  }
  Vocab vocab;
  std::string line;
  int line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size()) {
      throw std::runtime_error("bad merge line " + std::to_string(line_no) + " in " + path);
    }
    vocab.add_merge(line.substr(0, sp), line.substr(sp + 1));
  }
  if (vocab.size() != declared) {
    throw std::runtime_error("vocab size mismatch in " + path + ": header says " +
                             std::to_string(declared) + ", merges give " +
                             std::to_string(vocab.size()));
  }
  return vocab;
}

}  // namespace denc
