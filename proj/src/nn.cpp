#include "ssfl/nn.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "ssfl/kernels.hpp"

namespace ssfl {

namespace {

struct LinearLayer {
    const LayerSlice* weight;
    const LayerSlice* bias;
};

// The layout must be an alternating run of (weight, bias) slice pairs with
// matching dims; everything in this module assumes that shape.
std::vector<LinearLayer> linear_layers(const LayerLayout& layout) {
    const auto& slices = layout.slices();
    if (slices.empty() || slices.size() % 2 != 0)
        throw std::invalid_argument("layout is not a stack of linear layers");
    std::vector<LinearLayer> layers;
    for (std::size_t i = 0; i < slices.size(); i += 2) {
        const LayerSlice& w = slices[i];
        const LayerSlice& b = slices[i + 1];
        if (w.kind != SliceKind::weight || b.kind != SliceKind::bias ||
            w.fan_out != b.fan_out)
            throw std::invalid_argument("layout is not a stack of linear layers");
        if (i > 0 && slices[i - 2].fan_out != w.fan_in)
            throw std::invalid_argument("layer widths do not chain");
        layers.push_back({&w, &b});
    }
    return layers;
}

void check_batch(const LayerLayout& layout, const Batch& batch) {
    if (batch.rows == 0) throw std::invalid_argument("empty batch");
    if (batch.features != input_features(layout))
        throw std::invalid_argument("batch feature width does not match model");
    if (batch.x.size() != batch.rows * batch.features || batch.y.size() != batch.rows)
        throw std::invalid_argument("batch buffers do not match row count");
    const auto classes = static_cast<int>(output_classes(layout));
    for (int label : batch.y)
        if (label < 0 || label >= classes)
            throw std::invalid_argument("label out of range for model head");
}

// Activations of every layer; pre[l] is the pre-activation output of layer l,
// act[l] is its input (act[0] = batch features).
struct ForwardTrace {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
};

ForwardTrace run_forward(const ParamVector& w, const Batch& batch,
                         const std::vector<LinearLayer>& layers) {
    ForwardTrace t;
    t.pre.resize(layers.size());
    t.act.resize(layers.size());
    t.act[0] = batch.x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSlice& ws = *layers[l].weight;
        const LayerSlice& bs = *layers[l].bias;
        t.pre[l].assign(batch.rows * ws.fan_out, 0.0);
        kernels::linear_forward(t.act[l].data(), w.values.data() + ws.offset,
                                w.values.data() + bs.offset, t.pre[l].data(), batch.rows,
                                ws.fan_in, ws.fan_out);
        if (l + 1 < layers.size()) {
            t.act[l + 1] = t.pre[l];
            for (double& v : t.act[l + 1]) v = v > 0.0 ? v : 0.0;
        }
    }
    return t;
}

}  // namespace

ParamVector zeros_like(const ParamVector& ref) {
    return {ref.layout, std::vector<double>(ref.values.size(), 0.0)};
}

std::size_t input_features(const LayerLayout& layout) {
    return layout.slices().front().fan_in;
}

std::size_t output_classes(const LayerLayout& layout) {
    return layout.slices().back().fan_out;
}

ParamVector init_params(std::shared_ptr<const LayerLayout> layout, Rng& rng) {
    ParamVector w;
    w.values.assign(layout->total_params(), 0.0);
    for (const LayerSlice& s : layout->slices()) {
        if (s.kind != SliceKind::weight) continue;  // biases start at zero
        double stddev = std::sqrt(2.0 / static_cast<double>(s.fan_in));
        for (std::size_t i = 0; i < s.length; ++i)
            w.values[s.offset + i] = rng.normal(0.0, stddev);
    }
    w.layout = std::move(layout);
    return w;
}

ParamVector apply_mask(const ParamVector& w, const Mask& mask) {
    if (mask.size() != w.size()) throw std::invalid_argument("mask size does not match model");
    ParamVector out = w;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (!mask.keep[i]) out.values[i] = 0.0;
    return out;
}

std::vector<double> forward_logits(const ParamVector& w, const Batch& batch) {
    auto layers = linear_layers(*w.layout);
    check_batch(*w.layout, batch);
    ForwardTrace t = run_forward(w, batch, layers);
    return std::move(t.pre.back());
}

std::vector<double> forward_logits(const ParamVector& w, const Mask& mask, const Batch& batch) {
    return forward_logits(apply_mask(w, mask), batch);
}

double cross_entropy(const std::vector<double>& logits, const std::vector<int>& labels,
                     std::size_t classes) {
    if (logits.size() != labels.size() * classes)
        throw std::invalid_argument("logit buffer does not match labels");
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const double* row = logits.data() + r * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
        total += (mx + std::log(sum)) - row[labels[r]];
    }
    return total / static_cast<double>(labels.size());
}

double loss(const ParamVector& w, const Batch& batch) {
    return cross_entropy(forward_logits(w, batch), batch.y, output_classes(*w.layout));
}

ParamVector gradient(const ParamVector& w, const Batch& batch) {
    auto layers = linear_layers(*w.layout);
    check_batch(*w.layout, batch);
    ForwardTrace t = run_forward(w, batch, layers);

    const std::size_t classes = output_classes(*w.layout);
    const double inv_rows = 1.0 / static_cast<double>(batch.rows);

    // d(mean CE)/d(logits) = (softmax - onehot) / rows
    std::vector<double> delta = t.pre.back();
    for (std::size_t r = 0; r < batch.rows; ++r) {
        double* row = delta.data() + r * classes;
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::size_t c = 0; c < classes; ++c) row[c] *= inv_rows / sum;
        row[batch.y[r]] -= inv_rows;
    }

    ParamVector g = zeros_like(w);
    for (std::size_t l = layers.size(); l-- > 0;) {
        const LayerSlice& ws = *layers[l].weight;
        const LayerSlice& bs = *layers[l].bias;
        kernels::grad_weights(t.act[l].data(), delta.data(), g.values.data() + ws.offset,
                              batch.rows, ws.fan_in, ws.fan_out);
        kernels::grad_bias(delta.data(), g.values.data() + bs.offset, batch.rows, ws.fan_out);
        if (l > 0) {
            std::vector<double> dx(batch.rows * ws.fan_in, 0.0);
            kernels::grad_input(delta.data(), w.values.data() + ws.offset, dx.data(),
                                batch.rows, ws.fan_in, ws.fan_out);
            // ReLU gate from the previous layer's pre-activations.
            const std::vector<double>& pre = t.pre[l - 1];
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (pre[i] <= 0.0) dx[i] = 0.0;
            delta = std::move(dx);
        }
    }
    return g;
}

ParamVector gradient(const ParamVector& w, const Mask& mask, const Batch& batch) {
    ParamVector g = gradient(apply_mask(w, mask), batch);
    for (std::size_t i = 0; i < g.values.size(); ++i)
        if (!mask.keep[i]) g.values[i] = 0.0;
    return g;
}

ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr,
                     double weight_decay, const Mask& mask) {
    if (g.size() != w.size()) throw std::invalid_argument("gradient size does not match model");
    if (mask.size() != w.size()) throw std::invalid_argument("mask size does not match model");
    ParamVector out = w;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        if (mask.keep[i])
            out.values[i] = w.values[i] - lr * (g.values[i] + weight_decay * w.values[i]);
    return out;
}

ParamVector sgd_step(const ParamVector& w, const ParamVector& g, double lr,
                     double weight_decay) {
    if (g.size() != w.size()) throw std::invalid_argument("gradient size does not match model");
    ParamVector out = w;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = w.values[i] - lr * (g.values[i] + weight_decay * w.values[i]);
    return out;
}

double lr_at_round(double lr0, double decay, std::size_t round) {
    return lr0 * std::pow(decay, static_cast<double>(round));
}

double accuracy(const ParamVector& w, const Batch& batch) {
    std::vector<double> logits = forward_logits(w, batch);
    const std::size_t classes = output_classes(*w.layout);
    const auto rows = static_cast<std::int64_t>(batch.rows);
    std::int64_t correct = 0;
#pragma omp parallel for schedule(static) reduction(+ : correct)
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = logits.data() + static_cast<std::size_t>(r) * classes;
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (row[c] > row[best]) best = c;
        if (static_cast<int>(best) == batch.y[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.rows);
}

}  // namespace ssfl
