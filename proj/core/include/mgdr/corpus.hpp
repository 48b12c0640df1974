#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mgdr {

/// Ordered aspect list; the position of an aspect defines its index
/// everywhere downstream (guiding layouts, annotation tables, configs).
struct AspectSchema {
  struct Aspect {
    std::string name;
    bool on_queries = false;  // whether queries may carry this aspect
  };
  std::vector<Aspect> aspects;

  int size() const { return static_cast<int>(aspects.size()); }
  int index_of(const std::string& name) const;  // -1 when absent
  bool has(const std::string& name) const { return index_of(name) >= 0; }
  void validate() const;  // unique, non-empty names
};

enum class DocKind { query, item };

std::string to_string(DocKind k);
DocKind doc_kind_from_string(const std::string& s);

/// A query or item: content text plus per-aspect phrase-level annotations.
/// Annotation sets may be empty; keys must belong to the schema.
struct Document {
  std::string id;
  DocKind kind = DocKind::item;
  std::string text;
  std::map<std::string, std::vector<std::string>> annotations;  // sorted, unique values

  const std::vector<std::string>* values_for(const std::string& aspect) const;
  bool has_annotations() const;
};

enum class Grade { E, S, C, I };

Grade grade_from_string(const std::string& s);
std::string to_string(Grade g);

/// ESCI gains: 1.0 / 0.1 / 0.01 / 0.0.
double gain(Grade g);

struct RelevanceJudgment {
  std::string query_id;
  std::string item_id;
  Grade grade = Grade::I;
};

// ---- JSONL I/O ----
// Corpus line: {"id":...,"kind":"query"|"item","text":...,"annotations":{aspect:[...]}}
// Judgment line: {"query_id":...,"item_id":...,"grade":"E"|"S"|"C"|"I"}

std::vector<Document> load_corpus(const std::string& path, const AspectSchema& schema);
void save_corpus(const std::string& path, const std::vector<Document>& docs);

std::vector<RelevanceJudgment> load_judgments(const std::string& path);
void save_judgments(const std::string& path, const std::vector<RelevanceJudgment>& js);

/// query_id -> ids of its Exact-graded items.
std::map<std::string, std::set<std::string>> binary_positives(
    const std::vector<RelevanceJudgment>& judgments);

// ---- synthetic corpus ----

/// Three-level category taxonomy; aspect values causally drive both item
/// text and relevance grades, so aspect-aware models have real signal to
/// pick up at desk scale.
struct SyntheticGenConfig {
  std::uint64_t seed = 1;
  int n_items = 2000;
  int n_queries = 500;
  std::vector<int> branching = {4, 4, 4};  // level sizes; exactly 3 levels
  std::map<std::string, double> coverage = {
      {"brand", 0.9}, {"color", 0.7}, {"category", 0.9}};
  double noise_word_rate = 0.5;
  /// Probability that a query text omits its leaf-specific word and keeps
  /// only coarser category words (harder for purely lexical matching).
  double query_leaf_word_drop = 0.0;
  int judged_c_per_query = 20;  // sampled Complement judgments per query
  int judged_i_per_query = 20;  // sampled Irrelevant judgments per query

  void validate(const AspectSchema& schema) const;
};

struct SyntheticCorpus {
  std::vector<Document> items;
  std::vector<Document> queries;
  std::vector<RelevanceJudgment> judgments;
};

/// Schema for the generator: brand, color, category; queries carry category.
AspectSchema synthetic_schema();

/// Deterministic under (cfg, schema): equal inputs give byte-identical files.
SyntheticCorpus generate_synthetic(const SyntheticGenConfig& cfg, const AspectSchema& schema);

}  // namespace mgdr
