#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssfl {

enum class SliceKind { weight, bias };

struct LayerSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    SliceKind kind = SliceKind::weight;
};

// Describes how a flat parameter vector decomposes into per-layer slices.
// Slices are contiguous, non-overlapping and cover [0, d) exactly.
class LayerLayout {
public:
    explicit LayerLayout(std::vector<LayerSlice> slices) : slices_(std::move(slices)) {
        std::size_t off = 0;
        for (const auto& s : slices_) {
            if (s.offset != off) throw std::invalid_argument("LayerLayout: slices must be contiguous");
            std::size_t expect = s.kind == SliceKind::weight ? s.fan_in * s.fan_out : s.fan_out;
            if (s.length != expect) throw std::invalid_argument("LayerLayout: slice length does not match dims");
            off += s.length;
        }
        total_ = off;
        if (total_ == 0) throw std::invalid_argument("LayerLayout: empty layout");
    }

    // Fully connected network: inputs -> hidden... -> outputs, with one
    // (weight, bias) slice pair per linear layer. Weights are row-major
    // (fan_in x fan_out).
    static LayerLayout mlp(std::size_t inputs, const std::vector<std::size_t>& hidden,
                           std::size_t outputs) {
        std::vector<std::size_t> dims;
        dims.push_back(inputs);
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(outputs);
        std::vector<LayerSlice> slices;
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            std::size_t in = dims[l], out = dims[l + 1];
            if (in == 0 || out == 0) throw std::invalid_argument("LayerLayout::mlp: zero-width layer");
            std::string base = "fc" + std::to_string(l + 1);
            slices.push_back({base + ".weight", off, in * out, in, out, SliceKind::weight});
            off += in * out;
            slices.push_back({base + ".bias", off, out, in, out, SliceKind::bias});
            off += out;
        }
        return LayerLayout(std::move(slices));
    }

    const std::vector<LayerSlice>& slices() const { return slices_; }
    std::size_t total_params() const { return total_; }

    // FNV-1a over all structural fields; used to pair masks with the layout
    // they were built for.
    std::uint64_t hash() const {
        std::uint64_t h = 14695981039346656037ULL;
        auto mix_u64 = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xffULL;
                h *= 1099511628211ULL;
            }
        };
        for (const auto& s : slices_) {
            for (char c : s.name) {
                h ^= static_cast<unsigned char>(c);
                h *= 1099511628211ULL;
            }
            mix_u64(s.offset);
            mix_u64(s.length);
            mix_u64(s.fan_in);
            mix_u64(s.fan_out);
            mix_u64(s.kind == SliceKind::weight ? 1 : 2);
        }
        mix_u64(total_);
        return h;
    }

private:
    std::vector<LayerSlice> slices_;
    std::size_t total_ = 0;
};

}  // namespace ssfl
