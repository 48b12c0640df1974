#pragma once

#include <array>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "mgdr/corpus.hpp"
#include "mgdr/tokenizer.hpp"

namespace mgdr {

enum class Granularity { phrase = 0, word = 1, token = 2 };
inline constexpr int kNumGranularities = 3;
inline constexpr std::array<Granularity, 3> kAllGranularities = {
    Granularity::phrase, Granularity::word, Granularity::token};

std::string to_string(Granularity g);
Granularity granularity_from_string(const std::string& s);

/// Lowercase + collapse whitespace runs; identity of a phrase-level value.
std::string normalize_phrase(std::string_view raw);

/// The finite value set of one (aspect, granularity), lexicographically
/// ordered for determinism.
struct ValueVocabulary {
  std::string aspect;
  Granularity granularity = Granularity::phrase;
  std::vector<std::string> values;
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(values.size()); }
  int index_of(const std::string& v) const;  // -1 when absent
};

ValueVocabulary build_value_vocab(const std::set<std::string>& phrase_values,
                                  const std::string& aspect, Granularity g,
                                  const Tokenizer& tok);

/// Decomposes one value into the token ids used for shared/averaged value
/// embeddings. Throws when the value yields zero tokens.
std::vector<int> value_token_ids(const std::string& value, Granularity g, const Tokenizer& tok);

/// All vocabularies of a schema, indexed by (aspect index, granularity).
class VocabularySet {
public:
  VocabularySet() = default;
  VocabularySet(AspectSchema schema, std::vector<std::array<ValueVocabulary, 3>> vocabs);

  /// Aggregates phrase values over every corpus, then decomposes per
  /// granularity. Deterministic given the corpora and tokenizer.
  static VocabularySet build(const AspectSchema& schema,
                             const std::vector<const std::vector<Document>*>& corpora,
                             const Tokenizer& tok);

  const AspectSchema& schema() const { return schema_; }
  int n_aspects() const { return schema_.size(); }
  const ValueVocabulary& vocab(int aspect_idx, Granularity g) const;

  /// One file per (aspect, granularity): "<aspect>.<granularity>.vocab".
  void save(const std::string& dir) const;
  static VocabularySet load(const std::string& dir, const AspectSchema& schema);

private:
  AspectSchema schema_;
  std::vector<std::array<ValueVocabulary, 3>> vocabs_;  // [aspect][granularity]
};

/// Per-document annotation index sets, one per (aspect, granularity).
struct GranularityAnnotation {
  std::vector<std::array<std::vector<int>, 3>> indices;  // [aspect][granularity], sorted

  bool empty(int aspect_idx, Granularity g) const {
    return indices[aspect_idx][static_cast<int>(g)].empty();
  }
  bool all_empty() const;
};

/// Maps a document's phrase annotations to value indices at every
/// granularity. A decomposition missing from its vocabulary signals a
/// vocabulary/corpus mismatch and throws.
GranularityAnnotation decompose_annotations(const Document& doc, const VocabularySet& vocabs,
                                            const Tokenizer& tok);

}  // namespace mgdr
