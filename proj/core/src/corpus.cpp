#include "mgdr/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgdr/errors.hpp"
#include "mgdr/rng.hpp"

namespace mgdr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

int AspectSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < aspects.size(); ++i) {
    if (aspects[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void AspectSchema::validate() const {
  std::set<std::string> seen;
  for (const auto& a : aspects) {
    if (a.name.empty()) throw ValidationError("schema: empty aspect name");
    if (!seen.insert(a.name).second) {
      throw ValidationError("schema: duplicate aspect '" + a.name + "'");
    }
  }
}

std::string to_string(DocKind k) { return k == DocKind::query ? "query" : "item"; }

DocKind doc_kind_from_string(const std::string& s) {
  if (s == "query") return DocKind::query;
  if (s == "item") return DocKind::item;
  throw ValidationError("unknown document kind '" + s + "'");
}

const std::vector<std::string>* Document::values_for(const std::string& aspect) const {
  auto it = annotations.find(aspect);
  return it == annotations.end() ? nullptr : &it->second;
}

bool Document::has_annotations() const {
  for (const auto& [k, v] : annotations) {
    if (!v.empty()) return true;
  }
  return false;
}

Grade grade_from_string(const std::string& s) {
  if (s == "E") return Grade::E;
  if (s == "S") return Grade::S;
  if (s == "C") return Grade::C;
  if (s == "I") return Grade::I;
  throw ValidationError("unknown grade '" + s + "'");
}

std::string to_string(Grade g) {
  switch (g) {
    case Grade::E: return "E";
    case Grade::S: return "S";
    case Grade::C: return "C";
    case Grade::I: return "I";
  }
  return "?";
}

double gain(Grade g) {
  switch (g) {
    case Grade::E: return 1.0;
    case Grade::S: return 0.1;
    case Grade::C: return 0.01;
    case Grade::I: return 0.0;
  }
  return 0.0;
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

[[noreturn]] void line_error(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::vector<Document> load_corpus(const std::string& path, const AspectSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  std::vector<Document> docs;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, line_no, std::string("JSON parse error: ") + e.what());
    }
    if (!j.is_object()) line_error(path, line_no, "expected a JSON object");
    static const std::set<std::string> kKeys = {"id", "kind", "text", "annotations"};
    std::set<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
    if (keys != kKeys) {
      line_error(path, line_no, "object keys must be exactly {id, kind, text, annotations}");
    }

    Document d;
    try {
      d.id = j.at("id").get<std::string>();
      d.kind = doc_kind_from_string(j.at("kind").get<std::string>());
      d.text = j.at("text").get<std::string>();
      const auto& ann = j.at("annotations");
      if (!ann.is_object()) line_error(path, line_no, "annotations must be an object");
      for (auto it = ann.begin(); it != ann.end(); ++it) {
        const std::string& aspect = it.key();
        const int idx = schema.index_of(aspect);
        if (idx < 0) line_error(path, line_no, "unknown aspect key '" + aspect + "'");
        if (d.kind == DocKind::query && !schema.aspects[idx].on_queries) {
          line_error(path, line_no, "aspect '" + aspect + "' is not enabled for queries");
        }
        if (!it.value().is_array()) {
          line_error(path, line_no, "annotation values for '" + aspect + "' must be an array");
        }
        std::vector<std::string> vals;
        for (const auto& v : it.value()) {
          if (!v.is_string()) line_error(path, line_no, "annotation values must be strings");
          vals.push_back(v.get<std::string>());
        }
        d.annotations[aspect] = sorted_unique(std::move(vals));
      }
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad field: ") + e.what());
    }
    if (d.id.empty()) line_error(path, line_no, "empty id");
    if (d.text.empty()) line_error(path, line_no, "empty text");
    if (!ids.insert(d.id).second) line_error(path, line_no, "duplicate id '" + d.id + "'");
    docs.push_back(std::move(d));
  }
  return docs;
}

void save_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& d : docs) {
    ordered_json j;
    j["id"] = d.id;
    j["kind"] = to_string(d.kind);
    j["text"] = d.text;
    ordered_json ann = ordered_json::object();
    for (const auto& [aspect, values] : d.annotations) ann[aspect] = values;
    j["annotations"] = std::move(ann);
    out << j.dump() << '\n';
  }
}

std::vector<RelevanceJudgment> load_judgments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open judgments file: " + path);
  std::vector<RelevanceJudgment> out;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, line_no, std::string("JSON parse error: ") + e.what());
    }
    RelevanceJudgment r;
    try {
      r.query_id = j.at("query_id").get<std::string>();
      r.item_id = j.at("item_id").get<std::string>();
      r.grade = grade_from_string(j.at("grade").get<std::string>());
    } catch (const json::exception& e) {
      line_error(path, line_no, std::string("bad field: ") + e.what());
    }
    if (!seen.insert({r.query_id, r.item_id}).second) {
      line_error(path, line_no, "duplicate judgment for (" + r.query_id + ", " + r.item_id + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_judgments(const std::string& path, const std::vector<RelevanceJudgment>& js) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write judgments file: " + path);
  for (const auto& r : js) {
    ordered_json j;
    j["query_id"] = r.query_id;
    j["item_id"] = r.item_id;
    j["grade"] = to_string(r.grade);
    out << j.dump() << '\n';
  }
}

std::map<std::string, std::set<std::string>> binary_positives(
    const std::vector<RelevanceJudgment>& judgments) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& j : judgments) {
    if (j.grade == Grade::E) out[j.query_id].insert(j.item_id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void SyntheticGenConfig::validate(const AspectSchema& schema) const {
  if (n_items <= 0 || n_queries <= 0) throw ValidationError("gen: counts must be > 0");
  if (branching.size() != 3) {
    throw ValidationError("gen: taxonomy must have exactly 3 levels (leaf/parent/grandparent grades)");
  }
  for (int b : branching) {
    if (b < 1) throw ValidationError("gen: branching factors must be >= 1");
  }
  for (const auto& [aspect, p] : coverage) {
    if (schema.index_of(aspect) < 0) {
      throw ValidationError("gen: coverage for unknown aspect '" + aspect + "'");
    }
    if (p < 0.0 || p > 1.0) throw ValidationError("gen: coverage must be in [0,1]");
  }
  if (noise_word_rate < 0.0 || noise_word_rate > 1.0) {
    throw ValidationError("gen: noise_word_rate must be in [0,1]");
  }
  if (query_leaf_word_drop < 0.0 || query_leaf_word_drop > 1.0) {
    throw ValidationError("gen: query_leaf_word_drop must be in [0,1]");
  }
  if (judged_c_per_query < 0 || judged_i_per_query < 0) {
    throw ValidationError("gen: judged sample counts must be >= 0");
  }
}

AspectSchema synthetic_schema() {
  AspectSchema s;
  s.aspects = {{"brand", false}, {"color", false}, {"category", true}};
  return s;
}

namespace {

const char* kSyllables[] = {
    "an", "bor", "cel", "dar", "eth", "fin", "gor", "hul", "ind", "jes",
    "kal", "lum", "mir", "nok", "oth", "pel", "qua", "rin", "sul", "tor",
    "ux",  "vel", "wim", "xan", "yor", "zef", "bram", "crest", "dov", "fen",
    "gil", "harn", "ister", "jolt", "kran", "lodge", "mond", "nerv", "plex", "rusk",
    "smol", "tark", "urn", "vast", "wren", "yelt", "zorn", "quip"};
constexpr int kNumSyllables = sizeof(kSyllables) / sizeof(kSyllables[0]);

const char* kColors[] = {"red",  "blue",  "green", "black",  "white",  "amber",
                         "teal", "coral", "ivory", "violet", "maroon", "olive"};
constexpr int kNumColors = sizeof(kColors) / sizeof(kColors[0]);

std::string make_word(Rng& rng, int syllables, std::set<std::string>& used) {
  for (;;) {
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += kSyllables[rng.uniform_int(kNumSyllables)];
    }
    if (used.insert(w).second) return w;
  }
}

int binomial(Rng& rng, int n, double p) {
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (rng.uniform() < p) ++k;
  }
  return k;
}

std::string format_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%c%06d", prefix, i);
  return buf;
}

/// Deterministic sample of k elements, preserving candidate order.
std::vector<int> sample_without_replacement(Rng& rng, std::vector<int> candidates, int k) {
  if (static_cast<int>(candidates.size()) <= k) return candidates;
  // partial Fisher-Yates from the front, then restore order
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticGenConfig& cfg, const AspectSchema& schema) {
  schema.validate();
  cfg.validate(schema);
  Rng rng(cfg.seed);
  std::set<std::string> used_words;
  for (const char* c : kColors) used_words.insert(c);

  const int b1 = cfg.branching[0], b2 = cfg.branching[1], b3 = cfg.branching[2];
  const int n_parents = b1 * b2;
  const int n_leaves = b1 * b2 * b3;

  // Taxonomy words. Leaf words embed their parent word as a prefix so that
  // sibling categories share sub-word structure (token-level decomposition
  // stays informative).
  std::vector<std::string> grand_words(b1);
  for (auto& w : grand_words) w = make_word(rng, 2, used_words);
  std::vector<std::string> parent_words(n_parents);
  for (auto& w : parent_words) w = make_word(rng, 2, used_words);
  std::vector<std::string> leaf_words(n_leaves);
  std::vector<std::string> leaf_phrases(n_leaves);
  for (int leaf = 0; leaf < n_leaves; ++leaf) {
    const int parent = leaf / b3;
    const int grand = parent / b2;
    for (;;) {
      std::string w = parent_words[parent] + kSyllables[rng.uniform_int(kNumSyllables)];
      if (used_words.insert(w).second) {
        leaf_words[leaf] = std::move(w);
        break;
      }
    }
    leaf_phrases[leaf] = grand_words[grand] + " " + parent_words[parent] + " " + leaf_words[leaf];
  }

  // Brand and noise vocabularies.
  const int n_brands = std::max(8, cfg.n_items / 50);
  std::vector<std::string> brand_phrases(n_brands);
  for (auto& b : brand_phrases) {
    b = make_word(rng, 2, used_words);
    if (rng.uniform() < 0.3) b += " " + make_word(rng, 2, used_words);
  }
  const int n_noise = 160;
  std::vector<std::string> noise_words(n_noise);
  for (auto& w : noise_words) w = make_word(rng, 2, used_words);

  auto coverage_of = [&cfg](const std::string& aspect) {
    auto it = cfg.coverage.find(aspect);
    return it == cfg.coverage.end() ? 1.0 : it->second;
  };

  SyntheticCorpus corpus;
  corpus.items.reserve(cfg.n_items);
  std::vector<int> item_leaf(cfg.n_items);

  for (int i = 0; i < cfg.n_items; ++i) {
    const int leaf = static_cast<int>(rng.uniform_int(n_leaves));
    const int parent = leaf / b3;
    const int grand = parent / b2;
    const int brand = static_cast<int>(rng.uniform_int(n_brands));
    const int color = static_cast<int>(rng.uniform_int(kNumColors));
    item_leaf[i] = leaf;

    std::vector<std::string> words;
    {
      std::istringstream bs(brand_phrases[brand]);
      std::string w;
      while (bs >> w) words.push_back(w);
    }
    words.push_back(leaf_words[leaf]);
    words.push_back(parent_words[parent]);
    if (rng.uniform() < 0.5) words.push_back(grand_words[grand]);
    const bool color_in_text = rng.uniform() < 0.8;
    if (color_in_text) words.push_back(kColors[color]);
    const int n_noise_words = binomial(rng, 6, cfg.noise_word_rate);
    for (int k = 0; k < n_noise_words; ++k) {
      words.push_back(noise_words[rng.uniform_int(n_noise)]);
    }
    rng.shuffle(words);

    Document d;
    d.id = format_id('i', i + 1);
    d.kind = DocKind::item;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) d.text += ' ';
      d.text += words[w];
    }
    if (rng.uniform() < coverage_of("brand")) d.annotations["brand"] = {brand_phrases[brand]};
    if (rng.uniform() < coverage_of("color")) d.annotations["color"] = {kColors[color]};
    if (rng.uniform() < coverage_of("category")) d.annotations["category"] = {leaf_phrases[leaf]};
    corpus.items.push_back(std::move(d));
  }

  corpus.queries.reserve(cfg.n_queries);
  std::vector<int> query_leaf(cfg.n_queries);
  for (int q = 0; q < cfg.n_queries; ++q) {
    const int leaf = static_cast<int>(rng.uniform_int(n_leaves));
    const int parent = leaf / b3;
    const int grand = parent / b2;
    query_leaf[q] = leaf;

    std::vector<std::string> words;
    if (rng.uniform() < cfg.query_leaf_word_drop) {
      words.push_back(parent_words[parent]);
      words.push_back(grand_words[grand]);
    } else {
      words.push_back(leaf_words[leaf]);
      if (rng.uniform() < 0.6) words.push_back(parent_words[parent]);
    }
    const int n_noise_words = binomial(rng, 2, cfg.noise_word_rate);
    for (int k = 0; k < n_noise_words; ++k) {
      words.push_back(noise_words[rng.uniform_int(n_noise)]);
    }
    rng.shuffle(words);

    Document d;
    d.id = format_id('q', q + 1);
    d.kind = DocKind::query;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) d.text += ' ';
      d.text += words[w];
    }
    const int cat_idx = schema.index_of("category");
    if (cat_idx >= 0 && schema.aspects[cat_idx].on_queries &&
        rng.uniform() < coverage_of("category")) {
      d.annotations["category"] = {leaf_phrases[leaf]};
    }
    corpus.queries.push_back(std::move(d));
  }

  // Judgments: grade from taxonomy distance. All E and S pairs are judged;
  // C and I are sampled to keep file sizes realistic.
  for (int q = 0; q < cfg.n_queries; ++q) {
    const int leaf = query_leaf[q];
    const int parent = leaf / b3;
    const int grand = parent / b2;
    std::vector<int> c_candidates, i_candidates;
    for (int i = 0; i < cfg.n_items; ++i) {
      const int il = item_leaf[i];
      const int ip = il / b3;
      const int ig = ip / b2;
      if (il == leaf) {
        corpus.judgments.push_back({corpus.queries[q].id, corpus.items[i].id, Grade::E});
      } else if (ip == parent) {
        corpus.judgments.push_back({corpus.queries[q].id, corpus.items[i].id, Grade::S});
      } else if (ig == grand) {
        c_candidates.push_back(i);
      } else {
        i_candidates.push_back(i);
      }
    }
    for (int i : sample_without_replacement(rng, std::move(c_candidates), cfg.judged_c_per_query)) {
      corpus.judgments.push_back({corpus.queries[q].id, corpus.items[i].id, Grade::C});
    }
    for (int i : sample_without_replacement(rng, std::move(i_candidates), cfg.judged_i_per_query)) {
      corpus.judgments.push_back({corpus.queries[q].id, corpus.items[i].id, Grade::I});
    }
  }
  return corpus;
}

}  // namespace mgdr
