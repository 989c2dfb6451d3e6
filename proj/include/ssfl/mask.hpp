#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "ssfl/layout.hpp"
#include "ssfl/rng.hpp"

namespace ssfl {

// Binary keep/drop marker per parameter coordinate. Stored unpacked (one byte
// per coordinate) for fast elementwise use; packed to one bit per coordinate
// only on disk and when pricing mask transfers.
struct Mask {
    std::vector<std::uint8_t> keep;  // 0 or 1 per coordinate

    std::size_t size() const { return keep.size(); }
    bool at(std::size_t i) const { return keep[i] != 0; }
    std::size_t active_count() const;
    std::vector<std::size_t> active_indices() const;

    static Mask all_active(std::size_t d);
    static Mask from_indices(std::size_t d, const std::vector<std::size_t>& idx);
};

// Number of kept coordinates at sparsity level sigma over d coordinates:
// floor((1 - sigma) * d). Throws if the result is 0 or sigma is outside [0, 1).
std::size_t active_count_for(double sigma, std::size_t d);

// Uniformly random mask with exactly k active coordinates.
Mask random_mask(std::size_t d, std::size_t k, Rng& rng);

// Random mask at sparsity sigma over the layout's coordinates. With
// exempt_biases, bias coordinates are forced active out of the same
// k = floor((1 - sigma) * d) budget and the random draw covers weights only.
Mask random_mask(const LayerLayout& layout, double sigma, bool exempt_biases, Rng& rng);

// Permutes mask bits uniformly within each layout slice, preserving the
// per-slice active counts but destroying coordinate identity.
Mask shuffle_within_layers(const Mask& mask, const LayerLayout& layout, Rng& rng);

struct SliceDensity {
    std::string name;
    std::size_t active = 0;
    std::size_t length = 0;
    double density = 0.0;  // active / length
};

std::vector<SliceDensity> layer_densities(const Mask& mask, const LayerLayout& layout);

// On-disk format: <path> holds ceil(d/8) bytes, bit i of the mask stored in
// byte i/8 at bit position i%8; <path>.json records d, the active count and
// the hash of the layout the mask was built against. read_mask checks the
// sidecar against the bytes and the expected layout and throws on mismatch.
void write_mask(const std::string& path, const Mask& mask, const LayerLayout& layout);
Mask read_mask(const std::string& path, const LayerLayout& layout);

std::vector<std::uint8_t> pack_bits(const Mask& mask);
Mask unpack_bits(const std::vector<std::uint8_t>& bytes, std::size_t d);

}  // namespace ssfl
