#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mgdr {

/// Lowercases, splits on Unicode whitespace and ASCII punctuation, drops
/// empty segments. "Home, Garden & Tools" -> {home, garden, tools}.
std::vector<std::string> split_words(std::string_view text);

struct TokenizerOptions {
  int max_vocab = 2048;
  /// Words longer than this never become whole-vocabulary entries and are
  /// always decomposed into pieces.
  int max_whole_word_len = 32;
  /// Reserved guiding-token slots ([G0], [G1], ...) right after the specials.
  int guiding_slots = 16;
};

/// Frequency-ranked WordPiece-style vocabulary with greedy longest-match
/// splitting. Continuation pieces carry the "##" prefix; every character
/// seen in training is kept as a fallback piece, so in-alphabet words always
/// decompose. Immutable after construction.
class Tokenizer {
public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kClsId = 2;
  static constexpr int kMaskId = 3;
  static constexpr int kFirstGuideId = 4;

  static Tokenizer train(const std::vector<std::string>& texts, const TokenizerOptions& opts);

  int size() const { return static_cast<int>(tokens_.size()); }
  int guiding_slots() const { return guiding_slots_; }
  int guide_id(int slot) const;
  /// First id that is neither a special nor a reserved guiding slot.
  int first_ordinary_id() const { return kFirstGuideId + guiding_slots_; }

  /// UNK for unknown tokens.
  int id_of(std::string_view token) const;
  const std::string& token(int id) const;
  bool contains(std::string_view token) const { return lookup_.count(std::string(token)) > 0; }

  /// Greedy longest-match decomposition of a single normalized word.
  /// Returns {"[UNK]"} when a character has no fallback piece.
  std::vector<std::string> wordpieces(std::string_view word) const;

  /// split_words + wordpieces, as surface forms / ids.
  std::vector<std::string> tokenize_text(std::string_view text) const;
  std::vector<int> encode_text(std::string_view text) const;

  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

private:
  Tokenizer() = default;
  void rebuild_lookup();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
  int guiding_slots_ = 0;
};

}  // namespace mgdr
