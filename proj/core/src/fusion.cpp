#include "mgdr/fusion.hpp"

#include "mgdr/errors.hpp"

namespace mgdr {

ad::NodePtr gate_weights(const ad::NodePtr& cls_vec, const ad::NodePtr& weight,
                         const ad::NodePtr& bias) {
  if (cls_vec->rows() != 1 || cls_vec->cols() != weight->cols() ||
      bias->cols() != weight->rows()) {
    throw ValidationError("gate_weights: dimension mismatch");
  }
  return ad::softmax_rows(ad::add(ad::matmul_nt(cls_vec, weight), bias));
}

ad::NodePtr fuse(const ad::NodePtr& weights, const ad::NodePtr& guide_vectors) {
  if (weights->rows() != 1 || weights->cols() != guide_vectors->rows()) {
    throw ValidationError("fuse: weight length must match guiding vector count");
  }
  return ad::matmul(weights, guide_vectors);
}

ad::NodePtr final_representation(const EncodedSequence& enc, const EncoderConfig& cfg,
                                 const EncoderParams& params) {
  switch (cfg.fusion) {
    case FusionMode::no_cls_gating:
    case FusionMode::cls_only_baseline:
      return enc.cls();
    case FusionMode::cls_gating:
    case FusionMode::first_k: {
      if (enc.slot_count == 0) {
        throw ValidationError("gated fusion requires at least one guiding slot");
      }
      // Under first_k the slot rows are the first K content tokens; the row
      // range is the same either way.
      ad::NodePtr w = gate_weights(enc.cls(), params.at("gating.weight"), params.at("gating.bias"));
      return fuse(w, enc.slots());
    }
  }
  throw ValidationError("unknown fusion mode");
}

}  // namespace mgdr
