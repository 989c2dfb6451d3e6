#include "ssfl/mask.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace ssfl {

std::size_t Mask::active_count() const {
    std::size_t n = 0;
    for (std::uint8_t b : keep) n += b;
    return n;
}

std::vector<std::size_t> Mask::active_indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(active_count());
    for (std::size_t i = 0; i < keep.size(); ++i)
        if (keep[i]) idx.push_back(i);
    return idx;
}

Mask Mask::all_active(std::size_t d) {
    Mask m;
    m.keep.assign(d, 1);
    return m;
}

Mask Mask::from_indices(std::size_t d, const std::vector<std::size_t>& idx) {
    Mask m;
    m.keep.assign(d, 0);
    for (std::size_t i : idx) {
        if (i >= d) throw std::invalid_argument("mask index out of range");
        m.keep[i] = 1;
    }
    return m;
}

std::size_t active_count_for(double sigma, std::size_t d) {
    if (!(sigma >= 0.0 && sigma < 1.0))
        throw std::invalid_argument("sparsity must lie in [0, 1)");
    if (d == 0) throw std::invalid_argument("empty parameter vector");
    // floor((1 - sigma) * d) with a relative epsilon: for decimal sigma like
    // 0.9 the product lands just below the intended integer (1 - 0.9 < 0.1 in
    // binary) and a bare floor would lose one coordinate.
    double scaled = (1.0 - sigma) * static_cast<double>(d);
    auto k = static_cast<std::size_t>(std::floor(scaled + static_cast<double>(d) * 1e-12));
    if (k > d) k = d;
    if (k == 0) throw std::invalid_argument("sparsity leaves no active coordinates");
    return k;
}

Mask random_mask(std::size_t d, std::size_t k, Rng& rng) {
    if (k == 0 || k > d) throw std::invalid_argument("active count out of range");
    return Mask::from_indices(d, rng.sample_without_replacement(d, k));
}

Mask random_mask(const LayerLayout& layout, double sigma, bool exempt_biases, Rng& rng) {
    const std::size_t d = layout.total_params();
    std::size_t budget = active_count_for(sigma, d);
    if (!exempt_biases) return random_mask(d, budget, rng);

    Mask m;
    m.keep.assign(d, 0);
    std::vector<std::size_t> candidates;
    candidates.reserve(d);
    for (const LayerSlice& s : layout.slices()) {
        if (s.kind == SliceKind::bias) {
            if (s.length > budget)
                throw std::invalid_argument("bias exemption exceeds the sparsity budget");
            budget -= s.length;
            for (std::size_t i = 0; i < s.length; ++i) m.keep[s.offset + i] = 1;
        } else {
            for (std::size_t i = 0; i < s.length; ++i) candidates.push_back(s.offset + i);
        }
    }
    if (budget == 0) throw std::invalid_argument("sparsity budget leaves no weights active");
    // Partial Fisher-Yates over the weight coordinates.
    for (std::size_t i = 0; i < budget; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.bounded(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
        m.keep[candidates[i]] = 1;
    }
    return m;
}

Mask shuffle_within_layers(const Mask& mask, const LayerLayout& layout, Rng& rng) {
    if (mask.size() != layout.total_params())
        throw std::invalid_argument("mask size does not match layout");
    Mask out = mask;
    for (const LayerSlice& slice : layout.slices()) {
        // Fisher-Yates over the slice's bits.
        for (std::size_t i = slice.length; i > 1; --i) {
            auto j = static_cast<std::size_t>(rng.bounded(i));
            std::swap(out.keep[slice.offset + i - 1], out.keep[slice.offset + j]);
        }
    }
    return out;
}

std::vector<SliceDensity> layer_densities(const Mask& mask, const LayerLayout& layout) {
    if (mask.size() != layout.total_params())
        throw std::invalid_argument("mask size does not match layout");
    std::vector<SliceDensity> out;
    out.reserve(layout.slices().size());
    for (const LayerSlice& slice : layout.slices()) {
        SliceDensity d;
        d.name = slice.name;
        d.length = slice.length;
        for (std::size_t i = 0; i < slice.length; ++i) d.active += mask.keep[slice.offset + i];
        d.density = static_cast<double>(d.active) / static_cast<double>(d.length);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<std::uint8_t> pack_bits(const Mask& mask) {
    std::vector<std::uint8_t> bytes((mask.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask.keep[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return bytes;
}

Mask unpack_bits(const std::vector<std::uint8_t>& bytes, std::size_t d) {
    if (bytes.size() != (d + 7) / 8)
        throw std::invalid_argument("packed mask has wrong byte count");
    Mask m;
    m.keep.assign(d, 0);
    for (std::size_t i = 0; i < d; ++i) m.keep[i] = (bytes[i / 8] >> (i % 8)) & 1u;
    // Any set bit past d means the file disagrees with its declared size.
    for (std::size_t i = d; i < bytes.size() * 8; ++i)
        if ((bytes[i / 8] >> (i % 8)) & 1u)
            throw std::invalid_argument("packed mask has set bits past the declared size");
    return m;
}

void write_mask(const std::string& path, const Mask& mask, const LayerLayout& layout) {
    if (mask.size() != layout.total_params())
        throw std::invalid_argument("mask size does not match layout");
    std::vector<std::uint8_t> bytes = pack_bits(mask);
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("cannot open mask file for writing: " + path);
    bin.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!bin) throw std::runtime_error("failed writing mask file: " + path);
    bin.close();

    nlohmann::json sidecar;
    sidecar["coordinates"] = mask.size();
    sidecar["active"] = mask.active_count();
    sidecar["layout_hash"] = layout.hash();
    std::ofstream meta(path + ".json", std::ios::trunc);
    if (!meta)
        throw std::runtime_error("cannot open mask sidecar for writing: " + path + ".json");
    meta << sidecar.dump(2) << "\n";
    if (!meta) throw std::runtime_error("failed writing mask sidecar: " + path + ".json");
}

Mask read_mask(const std::string& path, const LayerLayout& layout) {
    std::ifstream meta(path + ".json");
    if (!meta) throw std::runtime_error("cannot open mask sidecar: " + path + ".json");
    nlohmann::json sidecar = nlohmann::json::parse(meta);
    const auto d = sidecar.at("coordinates").get<std::size_t>();
    const auto active = sidecar.at("active").get<std::size_t>();
    const auto hash = sidecar.at("layout_hash").get<std::uint64_t>();
    if (d != layout.total_params())
        throw std::runtime_error("mask sidecar coordinate count does not match layout");
    if (hash != layout.hash())
        throw std::runtime_error("mask sidecar layout hash does not match layout");

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw std::runtime_error("cannot open mask file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(bin)),
                                    std::istreambuf_iterator<char>());
    Mask m = unpack_bits(bytes, d);
    if (m.active_count() != active)
        throw std::runtime_error("mask bit count does not match sidecar");
    return m;
}

}  // namespace ssfl
