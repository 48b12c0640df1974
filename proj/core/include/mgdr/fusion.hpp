#pragma once

#include "mgdr/autodiff.hpp"
#include "mgdr/encoder.hpp"

namespace mgdr {

/// softmax(U * h_cls + b): positive, sums to 1.
ad::NodePtr gate_weights(const ad::NodePtr& cls_vec, const ad::NodePtr& weight,
                         const ad::NodePtr& bias);

/// Convex combination of the K guiding vectors; CLS is not a summand.
ad::NodePtr fuse(const ad::NodePtr& weights, const ad::NodePtr& guide_vectors);

/// The single H-vector stored in indexes and scored at retrieval time.
ad::NodePtr final_representation(const EncodedSequence& enc, const EncoderConfig& cfg,
                                 const EncoderParams& params);

}  // namespace mgdr
