// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

#include "dgvt/token.hpp"

namespace dgvt {

enum class FrameScaleMode {
    Off,           // frame factor fixed at 1
    Median,        // factor = median token range / reference depth
    MedianOctave,  // same ratio snapped to the nearest power of two
};

/// Adaptive cell sizing. The effective size of a token's cell is
///
///   base_size * frame_factor(frame median range) * band_scales[band(range)]
///
/// with the frame factor and the per-token band factor applied
/// multiplicatively. Near tokens land in finer cells, far tokens in coarser
/// ones.
struct ResolutionPolicy {
    double base_size = 0.25;
    FrameScaleMode frame_scale_mode = FrameScaleMode::Off;
    double reference_depth = 2.0;
    std::array<double, 2> band_edges{1.5, 4.0};
    std::array<double, 3> band_scales{0.5, 1.0, 2.0};

    bool is_valid() const;
    void validate() const;  // throws ConfigInvalid
};

/// 0 = near (< edge0), 1 = mid (< edge1), 2 = far.
std::uint8_t range_band(double range, const ResolutionPolicy& policy);

double frame_factor(double frame_median_range, const ResolutionPolicy& policy);

double effective_size(double range, double frame_median_range, const ResolutionPolicy& policy);

VoxelIndex quantize(const Vec3& anchor, double cell_size, std::uint8_t band = 0);

/// Median of the anchored tokens' ranges; 0 when none are anchored.
double median_range(std::span<const TokenRecord> frame_tokens);

/// Fills `voxel` on every anchored token of one frame.
void assign_voxels(std::span<TokenRecord> frame_tokens, const ResolutionPolicy& policy);

/// Sparse grouping of tokens by shared voxel. Cells hold indices into the
/// token sequence passed to group(); that sequence must outlive the grid.
class VoxelGrid {
public:
    using Cell = std::vector<std::size_t>;
    using Map = std::unordered_map<VoxelIndex, Cell, VoxelIndexHash>;

    const Map& cells() const {
        return m_cells;
    }
    std::size_t size() const {
        return m_cells.size();
    }
    bool empty() const {
        return m_cells.empty();
    }
    const Cell* find(const VoxelIndex& v) const;

    /// Cell keys in ascending order, for deterministic iteration.
    std::vector<VoxelIndex> sorted_keys() const;

private:
    friend VoxelGrid group(std::span<const TokenRecord> tokens);
    Map m_cells;
};

/// Anchorless tokens are skipped. Within a cell, entries are ordered by
/// (frame_id, token_index).
VoxelGrid group(std::span<const TokenRecord> tokens);

}  // namespace dgvt
