#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mgdr/autodiff.hpp"
#include "mgdr/corpus.hpp"
#include "mgdr/fusion.hpp"
#include "mgdr/model.hpp"
#include "mgdr/rng.hpp"

namespace mgdr {

// ---------------------------------------------------------------------------
// Masking
// ---------------------------------------------------------------------------

struct MaskingPolicy {
  double item_ratio = 0.15;
  double query_ratio = 0.3;
  bool force_at_least_one = true;

  double ratio_for(DocKind kind) const {
    return kind == DocKind::query ? query_ratio : item_ratio;
  }
  void validate() const;
};

struct MaskedSequence {
  std::vector<int> ids;          // framed ids after replacement
  std::vector<int> masked_rows;  // framed row indices selected for prediction
  std::vector<int> targets;      // original ids at those rows
};

/// Each content position is selected independently with the kind's ratio;
/// selected positions get [MASK] (80%), a random ordinary token (10%), or
/// stay unchanged (10%). CLS and guiding positions are never candidates.
MaskedSequence apply_masking(std::span<const int> framed_ids, int content_start,
                             const MaskingPolicy& policy, DocKind kind, Rng& rng,
                             int first_ordinary_id, int vocab_size);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Loss-side ablation switches (the layout-level ones live on the Model).
struct AspectLossSwitches {
  bool query_side = true;
  bool item_side = true;

  bool side_enabled(DocKind kind) const {
    return kind == DocKind::query ? query_side : item_side;
  }
};

/// Per-step cache of value-embedding matrices; shared mode rebuilds them
/// from the live token embeddings on every step by construction.
class ValueMatrixCache {
public:
  explicit ValueMatrixCache(const Model& model) : model_(&model) {}
  ad::NodePtr get(int schema_aspect_idx, Granularity g);

private:
  const Model* model_;
  std::map<std::pair<int, int>, ad::NodePtr> cache_;
};

/// Contrastive aspect-value loss for one slot vector against one vocabulary:
/// -(1/|P|) sum_{v+ in P} log softmax(h . E^T)[v+], full denominator.
ad::NodePtr aspect_loss(const ad::NodePtr& h, const ad::NodePtr& value_mat,
                        const std::vector<int>& positives);

struct ObjectiveLossEntry {
  int aspect_idx = 0;  // schema index
  Granularity granularity = Granularity::phrase;
  double value = 0.0;
};

/// Slot-grouped aggregate over the active objectives with non-empty
/// annotations. Empty objectives drop out of every averaging denominator;
/// all-empty yields a null node (treated as zero).
struct GroupedAspectLoss {
  ad::NodePtr total;  // null when every objective is empty
  std::vector<ObjectiveLossEntry> entries;
};

GroupedAspectLoss grouped_aspect_loss(const EncodedSequence& enc, const Model& model,
                                      GroupingScheme scheme, ValueMatrixCache& values,
                                      const GranularityAnnotation& annotations);

/// Mean over masked positions of -log softmax(h . E^T + bias)[target];
/// output projection tied to the token embedding table.
ad::NodePtr mlm_loss(const EncodedSequence& enc, const std::vector<int>& masked_rows,
                     const std::vector<int>& targets, const EncoderParams& params);

// ---------------------------------------------------------------------------
// Batch losses
// ---------------------------------------------------------------------------

/// A tokenized, annotation-decomposed document ready for the train loop.
struct PretrainDoc {
  DocKind kind = DocKind::item;
  std::vector<int> content_ids;
  GranularityAnnotation annotations;
};

/// One masked training example (the framed/masked view of a PretrainDoc).
struct PretrainExample {
  DocKind kind = DocKind::item;
  MaskedSequence masked;
  const GranularityAnnotation* annotations = nullptr;
};

struct LossBreakdown {
  double mlm = 0.0;
  double aspect = 0.0;  // L_A after grouping, batch mean
  double total = 0.0;   // mlm + lambda * aspect, composed exactly
  /// batch mean per contributing objective: (schema aspect, granularity) ->
  /// (mean loss over contributing docs, contributing doc count)
  std::map<std::pair<int, int>, std::pair<double, int>> per_objective;
  ad::NodePtr node;  // total, for backward
};

/// Joint pre-training objective over a batch: mean MLM + lambda * mean L_A.
/// lambda == 0 skips aspect computation entirely.
LossBreakdown pretrain_loss(const std::vector<PretrainExample>& batch, const Model& model,
                            double lambda, const AspectLossSwitches& switches);

/// In-batch softmax cross entropy: queries B x H, items M x H, positive
/// column per query. Mean over queries.
ad::NodePtr finetune_loss(const ad::NodePtr& query_reps, const ad::NodePtr& item_reps,
                          const std::vector<int>& positive_cols);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
public:
  explicit Adam(const AdamConfig& cfg = {}) : cfg_(cfg) {}
  /// One update from the accumulated grads; call zero_grads afterwards.
  void step(EncoderParams& params, double lr);

private:
  struct State {
    ad::Mat m, v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, State> state_;
};

/// Linear warm-up to base_lr, then linear decay to zero at total_steps.
double lr_schedule(int step, int total_steps, int warmup_steps, double base_lr);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct PretrainOptions {
  int steps = 500;
  int batch_size = 16;
  double lr = 1e-3;
  int warmup_steps = 50;
  double lambda = 0.1;
  MaskingPolicy masking;
  AspectLossSwitches switches;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 disables cadence callbacks
  std::function<void(int step, const LossBreakdown&)> on_step;
  std::function<void(int step)> on_checkpoint;
};

/// Seed-deterministic joint MLM + aspect pre-training over shuffled batches.
/// Queries join the pool only when some query carries annotations.
void pretrain(Model& model, const std::vector<PretrainDoc>& docs, const PretrainOptions& opts);

struct FinetuneTriplet {
  std::vector<int> query_ids;
  std::vector<int> positive_ids;
  std::vector<int> negative_ids;
};

struct FinetuneOptions {
  int steps = 300;
  int batch_size = 8;
  double lr = 1e-4;
  int warmup_steps = 30;
  std::uint64_t seed = 1;
  std::function<void(int step, double loss)> on_step;
};

/// Optimizes the in-batch softmax loss only (no aspect term); encoder shared
/// between queries and items.
void finetune(Model& model, const std::vector<FinetuneTriplet>& triplets,
              const FinetuneOptions& opts);

/// Tokenizes, truncates and annotation-decomposes the pre-training pool.
/// Queries are mixed in when at least one query has annotations.
std::vector<PretrainDoc> prepare_pretrain_docs(const std::vector<Document>& items,
                                               const std::vector<Document>& queries,
                                               const Model& model);

/// Pairs each trainable query with one Exact positive and one judged non-E
/// hard negative (deterministic choice under seed). Queries lacking either
/// are skipped.
std::vector<FinetuneTriplet> build_finetune_triplets(const std::vector<Document>& queries,
                                                     const std::vector<Document>& items,
                                                     const std::vector<RelevanceJudgment>& judgments,
                                                     const Model& model, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  Eigen::Index row = 0, col = 0;  // location of the worst element
  double analytic = 0.0, numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool within(double tol) const { return max_rel_err < tol; }
};

/// Rebuilds the loss graph on every call; must be deterministic.
using LossBuilder = std::function<ad::NodePtr()>;

/// Central differences (f(t+e) - f(t-e)) / 2e against a provided analytic
/// gradient; relative error denominator max(|a|, |n|, 1e-8).
GradCheckReport compare_gradients(const LossBuilder& loss, EncoderParams& params,
                                  const std::map<std::string, ad::Mat>& analytic, double eps);

/// Runs backward once to obtain analytic gradients, then compares.
GradCheckReport check_gradients(const LossBuilder& loss, EncoderParams& params, double eps);

}  // namespace mgdr
