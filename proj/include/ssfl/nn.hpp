#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "ssfl/layout.hpp"
#include "ssfl/mask.hpp"
#include "ssfl/rng.hpp"

namespace ssfl {

// Flat parameter vector tied to the layout that gives it structure. Copies
// share the layout; values are independent.
struct ParamVector {
    std::shared_ptr<const LayerLayout> layout;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

ParamVector zeros_like(const ParamVector& ref);

// A dense minibatch: `x` is rows x features row-major, `y` holds class ids.
struct Batch {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::vector<double> x;
    std::vector<int> y;
};

std::size_t input_features(const LayerLayout& layout);
std::size_t output_classes(const LayerLayout& layout);

// Kaiming-normal weights (stddev sqrt(2 / fan_in)), zero biases. Weight
// coordinates are drawn in layout order from the given stream.
ParamVector init_params(std::shared_ptr<const LayerLayout> layout, Rng& rng);

// Sets masked-out coordinates to zero; the result is the model that actually
// runs on a client under the mask.
ParamVector apply_mask(const ParamVector& w, const Mask& mask);

// Logits for each row (rows x classes); hidden layers use ReLU. The masked
// overload runs the effective model w ⊙ mask.
std::vector<double> forward_logits(const ParamVector& w, const Batch& batch);
std::vector<double> forward_logits(const ParamVector& w, const Mask& mask, const Batch& batch);

// Mean cross-entropy over the batch, computed with a log-sum-exp shift.
double cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels,
                     std::size_t classes);

double loss(const ParamVector& w, const Batch& batch);

// Gradient of the mean cross-entropy at w, same layout as w. The masked
// overload differentiates the effective model and zeroes masked entries:
// grad(w ⊙ mask) ⊙ mask.
ParamVector gradient(const ParamVector& w, const Batch& batch);
ParamVector gradient(const ParamVector& w, const Mask& mask, const Batch& batch);

// One SGD step with L2 decay: w <- w - lr * (g + weight_decay * w), applied to
// active coordinates only; masked coordinates pass through unchanged.
ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr,
                     double weight_decay, const Mask& mask);
ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr,
                     double weight_decay);

// lr0 * decay^round
double lr_at_round(double lr0, double decay, std::size_t round);

// Fraction of rows whose argmax logit matches the label (ties -> lowest id).
double accuracy(const ParamVector& w, const Batch& batch);

}  // namespace ssfl
