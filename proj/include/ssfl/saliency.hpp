#pragma once

#include <cstddef>
#include <vector>

#include "ssfl/dataset.hpp"
#include "ssfl/mask.hpp"
#include "ssfl/nn.hpp"

namespace ssfl {

// Nonnegative per-coordinate importance scores, same length as the model.
using SaliencyVector = std::vector<double>;

// First-order sensitivity of the batch loss to removing each coordinate:
// s_j = |dL/dw_j * w_j|. One backward pass; no update.
SaliencyVector local_saliency(const ParamVector& w, const Batch& batch);

// Data-size-weighted average s = sum_k (n_k / sum n) s_k, evaluated in the
// anchored form s_1 + sum_k p_k (s_k - s_1) so aggregating identical vectors
// returns the input bit for bit.
SaliencyVector aggregate_saliency(const std::vector<SaliencyVector>& scores,
                                  const std::vector<std::size_t>& sizes);

// Mask with ones at the k = floor((1 - sigma) * d) largest scores, ties
// broken toward the lower index. With exempt_biases, bias coordinates are
// forced active and consume part of the same k budget; the top-k selection
// then runs over weight coordinates only.
Mask topk_mask(const SaliencyVector& scores, double sigma, const LayerLayout& layout,
               bool exempt_biases = false);

// Saliency of the mean loss over the whole dataset (single full batch).
SaliencyVector dataset_saliency(const ParamVector& w, const Dataset& data);

// topk_mask over dataset_saliency: the convergence target for aggregated
// minibatch masks.
Mask oracle_mask(const ParamVector& w, const Dataset& data, double sigma,
                 bool exempt_biases = false);

// 1 - |active(m) ∩ active(ref)| / k for equal-k masks.
double mask_error(const Mask& m, const Mask& ref);

}  // namespace ssfl
