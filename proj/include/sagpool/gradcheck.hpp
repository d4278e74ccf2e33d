#pragma once

#include "sagpool/model.hpp"
#include "sagpool/tensor.hpp"

#include <functional>
#include <vector>

namespace sagpool {

struct GradcheckReport {
    double max_rel_error = 0.0;
    int entries_checked = 0; // parameter entries differenced
    int resamples = 0;       // inputs rejected for sitting too close to a kink
    double tolerance = 0.0;
    bool passed = false;
};

/// Central-difference check of d(loss)/d(leaf) for every entry of every
/// requires-grad leaf against one analytic backward pass. `build_loss` must
/// be a pure function of the current leaf values returning a 1x1 tensor.
/// Relative error uses |a - b| / max(|a|, |b|, 1e-6).
GradcheckReport check_gradients(const std::vector<Tensor>& leaves,
                                const std::function<Tensor()>& build_loss, double tolerance,
                                double step = 1e-5);

/// Kink-aware whole-model check: every parameter entry is differenced against
/// cross-entropy on a batch drawn from `sample_batch`. A pass is a pass. A
/// failure on a batch whose forward pass came within `min_margin` of a relu
/// kink, selection boundary or argmax tie is attributed to the kink (finite
/// differences are meaningless across one) and retried on a fresh batch, up
/// to `max_resamples` times; a failure with clean margins is final. A wrong
/// gradient formula fails every batch, so retries cannot mask it.
GradcheckReport check_model_gradients(const Model& model,
                                      const std::function<GraphBatch()>& sample_batch,
                                      double tolerance, double step = 1e-5,
                                      double min_margin = 1e-4, int max_resamples = 50);

} // namespace sagpool
