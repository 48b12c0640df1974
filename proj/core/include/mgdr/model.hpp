#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgdr/encoder.hpp"
#include "mgdr/tokenizer.hpp"
#include "mgdr/vocab.hpp"

namespace mgdr {

/// Everything needed to run and train the encoder: config, slot layout,
/// tokenizer, value vocabularies, token-id groups for value pooling, and the
/// parameter tensors.
///
/// Ablations that disable aspects or granularities shrink the layout itself:
/// `active_aspects` holds schema indices and `active_granularities` the
/// enabled levels, both in schema/enum order. Objectives outside the active
/// sets have no slot and no loss.
struct Model {
  EncoderConfig config;
  GuidingLayout layout;
  std::vector<int> active_aspects;
  std::vector<Granularity> active_granularities;
  Tokenizer tokenizer;
  VocabularySet vocabs;
  ValueTokenIndex value_tokens;
  EncoderParams params;

  /// Position of a schema aspect within the active list, -1 when disabled.
  int aspect_pos(int schema_aspect_idx) const;
  /// Position of a granularity within the active list, -1 when disabled.
  int granularity_pos(Granularity g) const;
};

/// Fresh model with seed-deterministic initialization. Empty active lists
/// mean "all aspects" / "all granularities".
Model build_model(const EncoderConfig& cfg, const Tokenizer& tok, const VocabularySet& vocabs,
                  std::vector<int> active_aspects, std::vector<Granularity> active_granularities,
                  std::uint64_t seed);

/// Rebuilds a model around checkpointed tensors; tokenizer and vocabularies
/// come from their own files and are validated against the checkpoint
/// metadata.
Model model_from_checkpoint(const std::string& path, const Tokenizer& tok,
                            const VocabularySet& vocabs);

/// Checkpoint externalization for a whole model.
void save_model_checkpoint(const std::string& path, const Model& model);

}  // namespace mgdr
