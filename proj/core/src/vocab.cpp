#include "mgdr/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "mgdr/errors.hpp"

namespace mgdr {

std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::phrase: return "phrase";
    case Granularity::word: return "word";
    case Granularity::token: return "token";
  }
  return "?";
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "phrase") return Granularity::phrase;
  if (s == "word") return Granularity::word;
  if (s == "token") return Granularity::token;
  throw ValidationError("unknown granularity '" + s + "'");
}

std::string normalize_phrase(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

int ValueVocabulary::index_of(const std::string& v) const {
  auto it = index.find(v);
  return it == index.end() ? -1 : it->second;
}

namespace {

ValueVocabulary from_value_set(std::set<std::string> vals, const std::string& aspect,
                               Granularity g) {
  ValueVocabulary v;
  v.aspect = aspect;
  v.granularity = g;
  v.values.assign(vals.begin(), vals.end());  // lexicographic via std::set
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    v.index[v.values[i]] = static_cast<int>(i);
  }
  return v;
}

/// The g-level surface forms of one normalized phrase.
std::vector<std::string> decompose_phrase(const std::string& phrase, Granularity g,
                                          const Tokenizer& tok) {
  switch (g) {
    case Granularity::phrase:
      return {phrase};
    case Granularity::word:
      return split_words(phrase);
    case Granularity::token:
      return tok.tokenize_text(phrase);
  }
  return {};
}

}  // namespace

ValueVocabulary build_value_vocab(const std::set<std::string>& phrase_values,
                                  const std::string& aspect, Granularity g,
                                  const Tokenizer& tok) {
  std::set<std::string> vals;
  for (const auto& raw : phrase_values) {
    const std::string phrase = normalize_phrase(raw);
    if (phrase.empty()) continue;
    for (auto& piece : decompose_phrase(phrase, g, tok)) vals.insert(std::move(piece));
  }
  return from_value_set(std::move(vals), aspect, g);
}

std::vector<int> value_token_ids(const std::string& value, Granularity g, const Tokenizer& tok) {
  std::vector<int> ids;
  if (g == Granularity::token) {
    // token-level values are tokenizer surface forms already
    ids.push_back(tok.id_of(value));
  } else {
    ids = tok.encode_text(value);
  }
  if (ids.empty()) {
    throw ValidationError("value '" + value + "' tokenizes to zero tokens");
  }
  return ids;
}

VocabularySet::VocabularySet(AspectSchema schema, std::vector<std::array<ValueVocabulary, 3>> vocabs)
    : schema_(std::move(schema)), vocabs_(std::move(vocabs)) {}

VocabularySet VocabularySet::build(const AspectSchema& schema,
                                   const std::vector<const std::vector<Document>*>& corpora,
                                   const Tokenizer& tok) {
  schema.validate();
  std::vector<std::array<ValueVocabulary, 3>> vocabs(schema.size());
  for (int a = 0; a < schema.size(); ++a) {
    const std::string& aspect = schema.aspects[a].name;
    std::set<std::string> phrases;
    for (const auto* docs : corpora) {
      for (const auto& d : *docs) {
        if (const auto* vals = d.values_for(aspect)) {
          phrases.insert(vals->begin(), vals->end());
        }
      }
    }
    for (Granularity g : kAllGranularities) {
      vocabs[a][static_cast<int>(g)] = build_value_vocab(phrases, aspect, g, tok);
    }
  }
  return VocabularySet(schema, std::move(vocabs));
}

const ValueVocabulary& VocabularySet::vocab(int aspect_idx, Granularity g) const {
  if (aspect_idx < 0 || aspect_idx >= n_aspects()) {
    throw ValidationError("aspect index out of range");
  }
  return vocabs_[aspect_idx][static_cast<int>(g)];
}

void VocabularySet::save(const std::string& dir) const {
  for (int a = 0; a < n_aspects(); ++a) {
    for (Granularity g : kAllGranularities) {
      const auto& v = vocabs_[a][static_cast<int>(g)];
      const std::string path = dir + "/" + v.aspect + "." + to_string(g) + ".vocab";
      std::ofstream out(path, std::ios::binary);
      if (!out) throw IoError("cannot write vocabulary file: " + path);
      out << "# aspect=" << v.aspect << " granularity=" << to_string(g)
          << " size=" << v.size() << '\n';
      for (const auto& val : v.values) out << val << '\n';
    }
  }
}

VocabularySet VocabularySet::load(const std::string& dir, const AspectSchema& schema) {
  schema.validate();
  std::vector<std::array<ValueVocabulary, 3>> vocabs(schema.size());
  for (int a = 0; a < schema.size(); ++a) {
    const std::string& aspect = schema.aspects[a].name;
    for (Granularity g : kAllGranularities) {
      const std::string path = dir + "/" + aspect + "." + to_string(g) + ".vocab";
      std::ifstream in(path);
      if (!in) throw IoError("cannot open vocabulary file: " + path);
      std::string header;
      if (!std::getline(in, header) || header.rfind("# aspect=", 0) != 0) {
        throw ValidationError("vocabulary file has bad header: " + path);
      }
      ValueVocabulary v;
      v.aspect = aspect;
      v.granularity = g;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        v.index[line] = static_cast<int>(v.values.size());
        v.values.push_back(line);
      }
      vocabs[a][static_cast<int>(g)] = std::move(v);
    }
  }
  return VocabularySet(schema, std::move(vocabs));
}

bool GranularityAnnotation::all_empty() const {
  for (const auto& per_aspect : indices) {
    for (const auto& idxs : per_aspect) {
      if (!idxs.empty()) return false;
    }
  }
  return true;
}

GranularityAnnotation decompose_annotations(const Document& doc, const VocabularySet& vocabs,
                                             const Tokenizer& tok) {
  GranularityAnnotation out;
  out.indices.resize(vocabs.n_aspects());
  for (int a = 0; a < vocabs.n_aspects(); ++a) {
    const std::string& aspect = vocabs.schema().aspects[a].name;
    const auto* phrases = doc.values_for(aspect);
    if (phrases == nullptr || phrases->empty()) continue;
    for (Granularity g : kAllGranularities) {
      const ValueVocabulary& vocab = vocabs.vocab(a, g);
      std::set<int> idxs;
      for (const auto& raw : *phrases) {
        const std::string phrase = normalize_phrase(raw);
        if (phrase.empty()) continue;
        for (const auto& piece : decompose_phrase(phrase, g, tok)) {
          const int idx = vocab.index_of(piece);
          if (idx < 0) {
            throw ValidationError("annotation value '" + piece + "' missing from " + aspect +
                                  "/" + to_string(g) + " vocabulary (corpus/vocab mismatch)");
          }
          idxs.insert(idx);
        }
      }
      auto& dest = out.indices[a][static_cast<int>(g)];
      dest.assign(idxs.begin(), idxs.end());
    }
  }
  return out;
}

}  // namespace mgdr
