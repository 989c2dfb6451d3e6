#include "ssfl/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ssfl/rng.hpp"

namespace ssfl {

namespace {

// Class-major sample block: `per_class` rows for class 0, then class 1, ...
Dataset sample_clusters(const std::vector<double>& means, std::size_t classes,
                        std::size_t features, std::size_t per_class, Rng& rng) {
    Dataset d;
    d.features = features;
    d.classes = classes;
    d.x.reserve(classes * per_class * features);
    d.y.reserve(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t n = 0; n < per_class; ++n) {
            for (std::size_t f = 0; f < features; ++f)
                d.x.push_back(means[c * features + f] + rng.normal());
            d.y.push_back(static_cast<int>(c));
        }
    }
    return d;
}

}  // namespace

SyntheticSplit make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2 || spec.features < 2)
        throw std::invalid_argument("synthetic task needs at least 2 classes and 2 features");
    if (spec.train_per_class < 10)
        throw std::invalid_argument("synthetic task needs at least 10 train samples per class");
    if (spec.test_per_class < 1)
        throw std::invalid_argument("synthetic task needs at least 1 test sample per class");
    if (!(spec.spread > 0.0)) throw std::invalid_argument("spread must be positive");

    // Unit-norm random directions scaled by spread.
    Rng mean_rng(substream(seed, "means"));
    std::vector<double> means(spec.classes * spec.features);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        double norm2 = 0.0;
        for (std::size_t f = 0; f < spec.features; ++f) {
            double v = mean_rng.normal();
            means[c * spec.features + f] = v;
            norm2 += v * v;
        }
        double scale = spec.spread / std::sqrt(norm2);
        for (std::size_t f = 0; f < spec.features; ++f) means[c * spec.features + f] *= scale;
    }

    Rng train_rng(substream(seed, "train"));
    Rng test_rng(substream(seed, "test"));
    SyntheticSplit split;
    split.train = sample_clusters(means, spec.classes, spec.features, spec.train_per_class,
                                  train_rng);
    split.test = sample_clusters(means, spec.classes, spec.features, spec.test_per_class,
                                 test_rng);
    return split;
}

Batch gather(const Dataset& data, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("cannot gather an empty batch");
    Batch b;
    b.rows = indices.size();
    b.features = data.features;
    b.x.reserve(b.rows * b.features);
    b.y.reserve(b.rows);
    for (std::size_t i : indices) {
        if (i >= data.rows()) throw std::invalid_argument("gather index out of range");
        const double* row = data.x.data() + i * data.features;
        b.x.insert(b.x.end(), row, row + data.features);
        b.y.push_back(data.y[i]);
    }
    return b;
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
    std::vector<std::vector<std::size_t>> by_class(data.classes);
    for (std::size_t i = 0; i < data.rows(); ++i) {
        int label = data.y[i];
        if (label < 0 || static_cast<std::size_t>(label) >= data.classes)
            throw std::invalid_argument("label out of range");
        by_class[static_cast<std::size_t>(label)].push_back(i);
    }
    return by_class;
}

std::vector<std::size_t> indices_with_labels(const Dataset& data, const std::vector<int>& labels) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.rows(); ++i)
        if (std::find(labels.begin(), labels.end(), data.y[i]) != labels.end()) out.push_back(i);
    return out;
}

void write_csv(const std::string& path, const Dataset& data) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open dataset file for writing: " + path);
    for (std::size_t c = 0; c < data.features; ++c) f << "f" << c << ",";
    f << "label\n";
    std::ostringstream row;
    row.precision(17);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        row.str("");
        for (std::size_t c = 0; c < data.features; ++c) row << data.x[r * data.features + c] << ",";
        row << data.y[r] << "\n";
        f << row.str();
    }
    if (!f) throw std::runtime_error("failed writing dataset file: " + path);
}

Dataset read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset file: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("dataset file is empty: " + path);

    std::vector<std::string> header;
    std::stringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
    if (header.size() < 2 || header.back() != "label")
        throw std::runtime_error("dataset header must be f0,...,label: " + path);
    for (std::size_t c = 0; c + 1 < header.size(); ++c)
        if (header[c] != "f" + std::to_string(c))
            throw std::runtime_error("unexpected dataset column '" + header[c] + "' in " + path);

    Dataset d;
    d.features = header.size() - 1;
    int max_label = -1;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        for (std::size_t c = 0; c < d.features; ++c) {
            if (!std::getline(ls, cell, ','))
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing column");
            double v = 0.0;
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || p != cell.data() + cell.size())
                throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number '" +
                                         cell + "'");
            d.x.push_back(v);
        }
        if (!std::getline(ls, cell))
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": missing label");
        int label = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), label);
        if (ec != std::errc() || p != cell.data() + cell.size() || label < 0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad label '" + cell +
                                     "'");
        d.y.push_back(label);
        max_label = std::max(max_label, label);
    }
    if (d.y.empty()) throw std::runtime_error("dataset has no rows: " + path);
    d.classes = static_cast<std::size_t>(max_label) + 1;
    return d;
}

}  // namespace ssfl
