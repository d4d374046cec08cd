// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dgvt/geometry.hpp"

namespace dgvt {

/// Sparse voxel key. Cells produced at different effective sizes never
/// compare equal: the band and the exact cell size are part of the key.
struct VoxelIndex {
    std::int64_t ix = 0;
    std::int64_t iy = 0;
    std::int64_t iz = 0;
    std::uint8_t band = 0;
    double cell_size = 0.0;

    bool operator==(const VoxelIndex& o) const {
        return ix == o.ix && iy == o.iy && iz == o.iz && band == o.band &&
               std::bit_cast<std::uint64_t>(cell_size) == std::bit_cast<std::uint64_t>(o.cell_size);
    }
    auto operator<=>(const VoxelIndex& o) const {
        if (auto c = ix <=> o.ix; c != 0) return c;
        if (auto c = iy <=> o.iy; c != 0) return c;
        if (auto c = iz <=> o.iz; c != 0) return c;
        if (auto c = band <=> o.band; c != 0) return c;
        return std::bit_cast<std::uint64_t>(cell_size) <=> std::bit_cast<std::uint64_t>(o.cell_size);
    }

    Vec3 center() const {
        return Vec3((static_cast<double>(ix) + 0.5) * cell_size,
                    (static_cast<double>(iy) + 0.5) * cell_size,
                    (static_cast<double>(iz) + 0.5) * cell_size);
    }
};

struct VoxelIndexHash {
    std::size_t operator()(const VoxelIndex& v) const noexcept {
        // Teschner et al. spatial hash primes, folded with the level tag.
        std::uint64_t h = static_cast<std::uint64_t>(v.ix) * 73856093ULL;
        h ^= static_cast<std::uint64_t>(v.iy) * 19349669ULL;
        h ^= static_cast<std::uint64_t>(v.iz) * 83492791ULL;
        h ^= (static_cast<std::uint64_t>(v.band) << 56) ^ std::bit_cast<std::uint64_t>(v.cell_size);
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

struct TokenKey {
    std::uint64_t frame_id = 0;
    std::uint32_t token_index = 0;

    auto operator<=>(const TokenKey&) const = default;
};

/// One visual token with its world anchor. `voxel` is filled by quantization
/// and stays empty for anchorless tokens.
struct TokenRecord {
    std::uint64_t frame_id = 0;
    std::uint32_t token_index = 0;
    std::vector<float> feature;
    std::optional<Vec3> anchor;
    double range = 0.0;
    std::optional<VoxelIndex> voxel;

    TokenKey key() const {
        return {frame_id, token_index};
    }
    bool anchored() const {
        return anchor.has_value();
    }
};

}  // namespace dgvt
