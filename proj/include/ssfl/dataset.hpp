#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssfl/nn.hpp"

namespace ssfl {

// Row-major feature matrix with integer class labels. `classes` is the label
// space (model head width), not necessarily the set of labels present.
struct Dataset {
    std::size_t features = 0;
    std::size_t classes = 0;
    std::vector<double> x;  // rows() x features
    std::vector<int> y;

    std::size_t rows() const { return y.size(); }
};

struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t features = 32;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 100;
    double spread = 2.0;  // distance of class means from the origin
};

struct SyntheticSplit {
    Dataset train;
    Dataset test;
};

// Gaussian-cluster classification task: each class mean is a unit-norm random
// direction scaled by `spread`; samples add isotropic unit-variance noise.
// Train and test are drawn from the same clusters via separate substreams of
// `seed`, so the pair is deterministic and the splits are independent.
SyntheticSplit make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Materializes the given rows as a dense minibatch, in the given order.
Batch gather(const Dataset& data, const std::vector<std::size_t>& indices);

// Row indices grouped by label; result has data.classes entries.
std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data);

// Row indices whose label is in `labels` (order preserved).
std::vector<std::size_t> indices_with_labels(const Dataset& data, const std::vector<int>& labels);

// CSV with header f0,...,f{F-1},label. Values round-trip exactly.
void write_csv(const std::string& path, const Dataset& data);
Dataset read_csv(const std::string& path);

}  // namespace ssfl
