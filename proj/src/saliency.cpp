#include "ssfl/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ssfl {

SaliencyVector local_saliency(const ParamVector& w, const Batch& batch) {
    ParamVector g = gradient(w, batch);
    SaliencyVector s(w.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
        s[j] = std::abs(g.values[j] * w.values[j]);
        if (!std::isfinite(s[j])) throw std::runtime_error("saliency is not finite");
    }
    return s;
}

SaliencyVector aggregate_saliency(const std::vector<SaliencyVector>& scores,
                                  const std::vector<std::size_t>& sizes) {
    if (scores.empty()) throw std::invalid_argument("nothing to aggregate");
    if (scores.size() != sizes.size())
        throw std::invalid_argument("scores and sizes differ in length");
    std::size_t total = 0;
    for (std::size_t n : sizes) {
        if (n == 0) throw std::invalid_argument("client data size must be >= 1");
        total += n;
    }
    const std::size_t d = scores.front().size();
    SaliencyVector out = scores.front();
    for (std::size_t c = 1; c < scores.size(); ++c) {
        if (scores[c].size() != d) throw std::invalid_argument("saliency length mismatch");
        double p = static_cast<double>(sizes[c]) / static_cast<double>(total);
        for (std::size_t j = 0; j < d; ++j) out[j] += p * (scores[c][j] - scores.front()[j]);
    }
    return out;
}

namespace {

// Indices of the n largest scores among `candidates`, ties to lower index.
std::vector<std::size_t> select_top(const SaliencyVector& scores,
                                    std::vector<std::size_t> candidates, std::size_t n) {
    auto rank = [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n - 1),
                     candidates.end(), rank);
    candidates.resize(n);
    return candidates;
}

}  // namespace

Mask topk_mask(const SaliencyVector& scores, double sigma, const LayerLayout& layout,
               bool exempt_biases) {
    const std::size_t d = layout.total_params();
    if (scores.size() != d) throw std::invalid_argument("saliency length does not match layout");
    for (double v : scores)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("saliency scores must be finite and nonnegative");
    const std::size_t k = active_count_for(sigma, d);

    Mask m;
    m.keep.assign(d, 0);
    std::size_t budget = k;
    std::vector<std::size_t> candidates;
    candidates.reserve(d);
    if (exempt_biases) {
        for (const LayerSlice& s : layout.slices()) {
            if (s.kind != SliceKind::bias) continue;
            if (s.length > budget)
                throw std::invalid_argument("bias exemption exceeds the sparsity budget");
            budget -= s.length;
            for (std::size_t i = 0; i < s.length; ++i) m.keep[s.offset + i] = 1;
        }
        if (budget == 0) throw std::invalid_argument("sparsity budget leaves no weights active");
        for (const LayerSlice& s : layout.slices())
            if (s.kind == SliceKind::weight)
                for (std::size_t i = 0; i < s.length; ++i) candidates.push_back(s.offset + i);
    } else {
        candidates.resize(d);
        std::iota(candidates.begin(), candidates.end(), std::size_t{0});
    }
    for (std::size_t i : select_top(scores, std::move(candidates), budget)) m.keep[i] = 1;
    return m;
}

SaliencyVector dataset_saliency(const ParamVector& w, const Dataset& data) {
    std::vector<std::size_t> all(data.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return local_saliency(w, gather(data, all));
}

Mask oracle_mask(const ParamVector& w, const Dataset& data, double sigma, bool exempt_biases) {
    return topk_mask(dataset_saliency(w, data), sigma, *w.layout, exempt_biases);
}

double mask_error(const Mask& m, const Mask& ref) {
    if (m.size() != ref.size()) throw std::invalid_argument("mask sizes differ");
    const std::size_t k = m.active_count();
    if (k != ref.active_count())
        throw std::invalid_argument("mask error requires equal active counts");
    if (k == 0) throw std::invalid_argument("empty masks have no error");
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.keep[i] && ref.keep[i]) ++overlap;
    return 1.0 - static_cast<double>(overlap) / static_cast<double>(k);
}

}  // namespace ssfl
