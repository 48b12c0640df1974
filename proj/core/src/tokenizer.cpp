#include "mgdr/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "mgdr/errors.hpp"

namespace mgdr {

namespace {

bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) ||
         (c >= 0x5b && c <= 0x60) || (c >= 0x7b && c <= 0x7e);
}

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d: case 0x20:
    case 0x85: case 0xa0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202f: case 0x205f: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200a;
  }
}

/// Minimal UTF-8 decode; invalid bytes pass through as single code points.
char32_t next_codepoint(std::string_view s, std::size_t& i) {
  const unsigned char b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if ((b0 & 0x80) == 0) {
    len = 1;
  } else if ((b0 & 0xe0) == 0xc0) {
    len = 2;
    cp = b0 & 0x1f;
  } else if ((b0 & 0xf0) == 0xe0) {
    len = 3;
    cp = b0 & 0x0f;
  } else if ((b0 & 0xf8) == 0xf0) {
    len = 4;
    cp = b0 & 0x07;
  }
  if (i + len > s.size()) len = 1;
  for (std::size_t k = 1; k < len; ++k) {
    const unsigned char b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xc0) != 0x80) {  // truncated sequence, treat lead byte alone
      len = 1;
      cp = b0;
      break;
    }
    cp = (cp << 6) | (b & 0x3f);
  }
  i += len;
  return cp;
}

void append_codepoint(std::string& out, char32_t cp, std::string_view raw_bytes) {
  if (cp < 0x80) {
    char c = static_cast<char>(cp);
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  } else {
    out.append(raw_bytes);
  }
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = next_codepoint(text, i);
    if (is_unicode_space(cp) || is_ascii_punct(cp)) {
      if (!cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      append_codepoint(cur, cp, text.substr(start, i - start));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Tokenizer Tokenizer::train(const std::vector<std::string>& texts, const TokenizerOptions& opts) {
  if (opts.guiding_slots < 0) throw ValidationError("tokenizer: guiding_slots must be >= 0");

  std::map<std::string, long long> word_counts;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) word_counts[w] += 1;
  }

  // Fallback alphabet: every code point seen, as word-initial and
  // continuation pieces.
  std::set<std::string> alphabet;
  for (const auto& [w, c] : word_counts) {
    std::size_t i = 0;
    while (i < w.size()) {
      const std::size_t start = i;
      next_codepoint(w, i);
      alphabet.insert(w.substr(start, i - start));
    }
  }

  Tokenizer tok;
  tok.guiding_slots_ = opts.guiding_slots;
  tok.tokens_ = {"[PAD]", "[UNK]", "[CLS]", "[MASK]"};
  for (int g = 0; g < opts.guiding_slots; ++g) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "[G%d]", g);
    tok.tokens_.push_back(buf);
  }
  for (const auto& a : alphabet) tok.tokens_.push_back(a);
  for (const auto& a : alphabet) tok.tokens_.push_back("##" + a);

  if (static_cast<int>(tok.tokens_.size()) > opts.max_vocab) {
    throw ValidationError("tokenizer: max_vocab too small for specials + fallback alphabet (" +
                          std::to_string(tok.tokens_.size()) + " required)");
  }

  std::set<std::string> present(tok.tokens_.begin(), tok.tokens_.end());
  auto push = [&](const std::string& t) {
    if (present.insert(t).second) tok.tokens_.push_back(t);
  };

  // Whole words ranked by frequency fill the budget first.
  std::vector<std::pair<long long, std::string>> ranked;
  ranked.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) {
    if (static_cast<int>(w.size()) <= opts.max_whole_word_len) ranked.push_back({c, w});
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (const auto& [c, w] : ranked) {
    if (static_cast<int>(tok.tokens_.size()) >= opts.max_vocab) break;
    push(w);
  }

  // Leftover budget goes to continuation pieces: word suffixes scored by the
  // total count of the words they appear in.
  if (static_cast<int>(tok.tokens_.size()) < opts.max_vocab) {
    std::map<std::string, long long> suffix_scores;
    for (const auto& [w, c] : word_counts) {
      // suffix start must fall on a code point boundary
      std::size_t i = 0;
      std::vector<std::size_t> bounds;
      while (i < w.size()) {
        bounds.push_back(i);
        next_codepoint(w, i);
      }
      for (std::size_t b = 1; b < bounds.size(); ++b) {
        const std::string suffix = w.substr(bounds[b]);
        if (bounds.size() - b >= 2) suffix_scores["##" + suffix] += c;
      }
    }
    std::vector<std::pair<long long, std::string>> pieces;
    pieces.reserve(suffix_scores.size());
    for (const auto& [s, c] : suffix_scores) pieces.push_back({c, s});
    std::sort(pieces.begin(), pieces.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (const auto& [c, s] : pieces) {
      if (static_cast<int>(tok.tokens_.size()) >= opts.max_vocab) break;
      push(s);
    }
  }

  tok.rebuild_lookup();
  return tok;
}

void Tokenizer::rebuild_lookup() {
  lookup_.clear();
  lookup_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) lookup_[tokens_[i]] = static_cast<int>(i);
}

int Tokenizer::guide_id(int slot) const {
  if (slot < 0 || slot >= guiding_slots_) {
    throw ValidationError("tokenizer: guiding slot " + std::to_string(slot) + " out of range (" +
                          std::to_string(guiding_slots_) + " reserved)");
  }
  return kFirstGuideId + slot;
}

int Tokenizer::id_of(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? kUnkId : it->second;
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("tokenizer: id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Tokenizer::wordpieces(std::string_view word) const {
  if (word.empty()) return {};
  if (auto it = lookup_.find(std::string(word)); it != lookup_.end()) {
    return {std::string(word)};
  }
  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (pos < word.size()) {
    std::size_t best_end = 0;
    std::string best;
    for (std::size_t end = word.size(); end > pos; --end) {
      std::string cand(word.substr(pos, end - pos));
      if (pos > 0) cand = "##" + cand;
      if (lookup_.count(cand)) {
        best_end = end;
        best = std::move(cand);
        break;
      }
    }
    if (best_end == 0) return {tokens_[kUnkId]};  // unseen character
    pieces.push_back(std::move(best));
    pos = best_end;
  }
  return pieces;
}

std::vector<std::string> Tokenizer::tokenize_text(std::string_view text) const {
  std::vector<std::string> out;
  for (const auto& w : split_words(text)) {
    auto pieces = wordpieces(w);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::vector<int> Tokenizer::encode_text(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : tokenize_text(text)) ids.push_back(id_of(t));
  return ids;
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write tokenizer file: " + path);
  out << "# tokenizer v1 guiding=" << guiding_slots_ << " size=" << size() << '\n';
  for (const auto& t : tokens_) out << t << '\n';
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tokenizer file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("tokenizer file empty: " + path);
  int guiding = 0, size = 0;
  if (std::sscanf(header.c_str(), "# tokenizer v1 guiding=%d size=%d", &guiding, &size) != 2) {
    throw ValidationError("tokenizer file has bad header: " + path);
  }
  Tokenizer tok;
  tok.guiding_slots_ = guiding;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tok.tokens_.push_back(line);
  }
  if (static_cast<int>(tok.tokens_.size()) != size) {
    throw ValidationError("tokenizer file token count mismatch: " + path);
  }
  tok.rebuild_lookup();
  return tok;
}

}  // namespace mgdr
