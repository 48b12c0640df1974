#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgdr/autodiff.hpp"
#include "mgdr/tokenizer.hpp"
#include "mgdr/vocab.hpp"

namespace mgdr {

/// How the |A| x |G| aspect-learning objectives map onto guiding tokens.
enum class GroupingScheme { single, granularity, aspect, none };

enum class ValueMode { shared, unshared };
enum class ValueInit { averaged, random };

/// How the per-slot vectors collapse into the final representation.
///  - cls_gating:        softmax gate from CLS over the guiding vectors
///  - no_cls_gating:     guiding tokens present, CLS is the representation
///  - first_k:           no extra tokens; gate over the first K content tokens
///                       (aspect objectives attach there too)
///  - cls_only_baseline: no guiding tokens at all, CLS is the representation
enum class FusionMode { cls_gating, no_cls_gating, first_k, cls_only_baseline };

std::string to_string(GroupingScheme s);
GroupingScheme grouping_from_string(const std::string& s);
std::string to_string(ValueMode m);
ValueMode value_mode_from_string(const std::string& s);
std::string to_string(ValueInit i);
ValueInit value_init_from_string(const std::string& s);
std::string to_string(FusionMode m);
FusionMode fusion_from_string(const std::string& s);

struct EncoderConfig {
  int hidden = 32;
  int layers = 2;
  int heads = 2;
  int ffn = 64;
  int max_seq_len = 64;
  GroupingScheme grouping = GroupingScheme::single;
  ValueMode value_mode = ValueMode::unshared;
  ValueInit value_init = ValueInit::averaged;
  FusionMode fusion = FusionMode::cls_gating;

  bool is_baseline() const { return grouping == GroupingScheme::none; }
  /// Whether guiding token ids are physically inserted into the sequence.
  bool inserts_guides() const {
    return grouping != GroupingScheme::none && fusion != FusionMode::first_k;
  }
  void validate() const;
};

/// Slot assignment for the (aspect, granularity) objectives.
struct GuidingLayout {
  GroupingScheme scheme = GroupingScheme::single;
  int n_aspects = 0;
  int n_granularities = 0;
  int slot_count = 0;

  static GuidingLayout make(GroupingScheme scheme, int n_aspects, int n_granularities);
  /// Slot serving objective (aspect i, granularity j); 0-based.
  int slot_of(int aspect_idx, int gran_idx) const;
};

/// Named parameter tensors. Keys are stable and define checkpoint layout:
///   token_embeddings, position_embeddings, mlm_bias,
///   layers.<i>.attn.{wq,wk,wv,wo,bq,bk,bv,bo},
///   layers.<i>.{ln1,ln2}.{gain,bias}, layers.<i>.ffn.{w1,b1,w2,b2},
///   gating.{weight,bias}, values.<aspect>.<granularity>
struct EncoderParams {
  std::map<std::string, ad::NodePtr> tensors;

  const ad::NodePtr& at(const std::string& name) const;
  ad::NodePtr& at(const std::string& name);
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
  void zero_grads();
  /// Total number of scalar parameters.
  std::int64_t parameter_count() const;
};

/// Initializes embeddings, transformer layers, the MLM bias, and (when the
/// layout has slots and fusion gates) the gating head. Every tensor draws
/// from its own named RNG stream, so the presence of one tensor never
/// perturbs the init of another.
EncoderParams init_params(const EncoderConfig& cfg, int vocab_size, const GuidingLayout& layout,
                          std::uint64_t seed);

/// Token-id groups backing value embeddings, one entry per vocabulary value.
class ValueTokenIndex {
public:
  ValueTokenIndex() = default;
  static ValueTokenIndex build(const VocabularySet& vocabs, const Tokenizer& tok);
  const std::vector<std::vector<int>>& groups(int aspect_idx, Granularity g) const;

private:
  std::vector<std::array<std::vector<std::vector<int>>, 3>> groups_;
};

/// Allocates unshared value tables for the active (aspect, granularity)
/// pairs, averaged from live token embeddings or random N(0, 0.02^2).
/// Shared mode allocates nothing.
void init_value_tables(EncoderParams& params, const VocabularySet& vocabs,
                       const ValueTokenIndex& vindex, ValueMode mode, ValueInit init,
                       const std::vector<int>& active_aspects,
                       const std::vector<Granularity>& active_granularities,
                       std::uint64_t seed);

/// Final-layer hidden states for one framed sequence.
/// Row 0 is CLS; rows 1..slot_count are the objective slots (guiding tokens,
/// or the first K content tokens under first_k); content follows.
struct EncodedSequence {
  ad::NodePtr hidden;  // (1 + inserted_guides + n) x H
  int slot_count = 0;
  int content_start = 1;
  int content_len = 0;

  int cls_row() const { return 0; }
  int slot_row(int slot) const { return 1 + slot; }
  int content_row(int i) const { return content_start + i; }
  ad::NodePtr cls() const { return ad::slice_rows(hidden, 0, 1); }
  ad::NodePtr slots() const { return ad::slice_rows(hidden, 1, slot_count); }
};

/// Frames content ids as [CLS, guides..., content] per the config.
std::vector<int> frame_ids(const EncoderConfig& cfg, const GuidingLayout& layout,
                           std::span<const int> content_ids);

/// Transformer forward over an already-framed sequence.
EncodedSequence encode_framed(const EncoderParams& params, const EncoderConfig& cfg,
                              const GuidingLayout& layout, std::span<const int> framed_ids);

/// frame_ids + encode_framed.
EncodedSequence encode(const EncoderParams& params, const EncoderConfig& cfg,
                       const GuidingLayout& layout, std::span<const int> content_ids);

/// Value-embedding matrix for one (aspect, granularity): |V| x H.
/// shared mode recomputes from the live token embeddings (gradients flow
/// into them); unshared mode returns the dedicated table.
ad::NodePtr value_matrix(const EncoderParams& params, const EncoderConfig& cfg,
                         const VocabularySet& vocabs, const ValueTokenIndex& vindex,
                         int aspect_idx, Granularity g);

/// Single value embedding (1 x H).
ad::NodePtr value_embedding(const EncoderParams& params, const EncoderConfig& cfg,
                            const VocabularySet& vocabs, const ValueTokenIndex& vindex,
                            int aspect_idx, Granularity g, int value_idx);

// ---- checkpoints ----

/// Versioned binary checkpoint: config JSON + named tensors, bit-exact
/// round-trip (doubles stored verbatim).
void save_checkpoint(const std::string& path, const EncoderConfig& cfg,
                     const GuidingLayout& layout,
                     const std::vector<std::string>& active_aspect_names,
                     const std::vector<Granularity>& active_granularities,
                     const EncoderParams& params);

struct Checkpoint {
  EncoderConfig config;
  GuidingLayout layout;
  std::vector<std::string> active_aspect_names;
  std::vector<Granularity> active_granularities;
  EncoderParams params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mgdr
