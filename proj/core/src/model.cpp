#include "mgdr/model.hpp"

#include <algorithm>

#include "mgdr/errors.hpp"

namespace mgdr {

int Model::aspect_pos(int schema_aspect_idx) const {
  for (std::size_t i = 0; i < active_aspects.size(); ++i) {
    if (active_aspects[i] == schema_aspect_idx) return static_cast<int>(i);
  }
  return -1;
}

int Model::granularity_pos(Granularity g) const {
  for (std::size_t i = 0; i < active_granularities.size(); ++i) {
    if (active_granularities[i] == g) return static_cast<int>(i);
  }
  return -1;
}

Model build_model(const EncoderConfig& cfg, const Tokenizer& tok, const VocabularySet& vocabs,
                  std::vector<int> active_aspects, std::vector<Granularity> active_granularities,
                  std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  if (active_aspects.empty()) {
    for (int a = 0; a < vocabs.n_aspects(); ++a) active_aspects.push_back(a);
  }
  if (active_granularities.empty()) {
    active_granularities.assign(kAllGranularities.begin(), kAllGranularities.end());
  }
  std::sort(active_aspects.begin(), active_aspects.end());
  std::sort(active_granularities.begin(), active_granularities.end());
  for (int a : active_aspects) {
    if (a < 0 || a >= vocabs.n_aspects()) throw ValidationError("active aspect out of range");
  }
  m.active_aspects = std::move(active_aspects);
  m.active_granularities = std::move(active_granularities);
  m.layout = GuidingLayout::make(cfg.grouping, static_cast<int>(m.active_aspects.size()),
                                 static_cast<int>(m.active_granularities.size()));
  if (cfg.inserts_guides() && m.layout.slot_count > tok.guiding_slots()) {
    throw ValidationError("layout needs " + std::to_string(m.layout.slot_count) +
                          " guiding tokens but the tokenizer reserves only " +
                          std::to_string(tok.guiding_slots()));
  }
  m.tokenizer = tok;
  m.vocabs = vocabs;
  m.value_tokens = ValueTokenIndex::build(vocabs, tok);
  m.params = init_params(cfg, tok.size(), m.layout, seed);
  init_value_tables(m.params, vocabs, m.value_tokens, cfg.value_mode, cfg.value_init,
                    m.active_aspects, m.active_granularities, seed);
  return m;
}

Model model_from_checkpoint(const std::string& path, const Tokenizer& tok,
                            const VocabularySet& vocabs) {
  Checkpoint ck = load_checkpoint(path);
  Model m;
  m.config = ck.config;
  m.layout = ck.layout;
  for (const auto& name : ck.active_aspect_names) {
    const int idx = vocabs.schema().index_of(name);
    if (idx < 0) {
      throw ValidationError("checkpoint aspect '" + name + "' missing from schema");
    }
    m.active_aspects.push_back(idx);
  }
  m.active_granularities = ck.active_granularities;
  m.tokenizer = tok;
  m.vocabs = vocabs;
  m.value_tokens = ValueTokenIndex::build(vocabs, tok);
  m.params = std::move(ck.params);
  if (m.params.at("token_embeddings")->rows() != tok.size()) {
    throw ValidationError("checkpoint token table does not match tokenizer vocabulary size");
  }
  return m;
}

void save_model_checkpoint(const std::string& path, const Model& model) {
  std::vector<std::string> aspect_names;
  for (int a : model.active_aspects) {
    aspect_names.push_back(model.vocabs.schema().aspects[a].name);
  }
  save_checkpoint(path, model.config, model.layout, aspect_names, model.active_granularities,
                  model.params);
}

}  // namespace mgdr
