// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/voxel_grid.hpp"

#include <algorithm>
#include <cmath>

#include "dgvt/error.hpp"

namespace dgvt {

bool ResolutionPolicy::is_valid() const {
    auto finite_pos = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!finite_pos(base_size) || !finite_pos(reference_depth)) {
        return false;
    }
    if (!std::isfinite(band_edges[0]) || !std::isfinite(band_edges[1]) || !(band_edges[0] < band_edges[1])) {
        return false;
    }
    return finite_pos(band_scales[0]) && finite_pos(band_scales[1]) && finite_pos(band_scales[2]) &&
           band_scales[0] < band_scales[1] && band_scales[1] < band_scales[2];
}

void ResolutionPolicy::validate() const {
    DGVT_CHECK(is_valid(),
               ErrorCode::ConfigInvalid,
               "resolution policy needs base_size > 0, increasing band_edges and increasing positive band_scales");
}

std::uint8_t range_band(double range, const ResolutionPolicy& policy) {
    if (range < policy.band_edges[0]) {
        return 0;
    }
    return range < policy.band_edges[1] ? 1 : 2;
}

double frame_factor(double frame_median_range, const ResolutionPolicy& policy) {
    if (policy.frame_scale_mode == FrameScaleMode::Off || !(frame_median_range > 0.0)) {
        return 1.0;
    }
    const double ratio = frame_median_range / policy.reference_depth;
    if (policy.frame_scale_mode == FrameScaleMode::MedianOctave) {
        return std::exp2(std::round(std::log2(ratio)));
    }
    return ratio;
}

double effective_size(double range, double frame_median_range, const ResolutionPolicy& policy) {
    DGVT_CHECK(range > 0.0, ErrorCode::ShapeMismatch, "token range must be positive");
    return policy.base_size * frame_factor(frame_median_range, policy) * policy.band_scales[range_band(range, policy)];
}

VoxelIndex quantize(const Vec3& anchor, double cell_size, std::uint8_t band) {
    VoxelIndex v;
    v.ix = static_cast<std::int64_t>(std::floor(anchor.x() / cell_size));
    v.iy = static_cast<std::int64_t>(std::floor(anchor.y() / cell_size));
    v.iz = static_cast<std::int64_t>(std::floor(anchor.z() / cell_size));
    v.band = band;
    v.cell_size = cell_size;
    return v;
}

double median_range(std::span<const TokenRecord> frame_tokens) {
    std::vector<double> ranges;
    ranges.reserve(frame_tokens.size());
    for (const auto& t : frame_tokens) {
        if (t.anchored()) {
            ranges.push_back(t.range);
        }
    }
    if (ranges.empty()) {
        return 0.0;
    }
    const std::size_t mid = ranges.size() / 2;
    std::nth_element(ranges.begin(), ranges.begin() + static_cast<std::ptrdiff_t>(mid), ranges.end());
    const double upper = ranges[mid];
    if (ranges.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(ranges.begin(), ranges.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / 2.0;
}

void assign_voxels(std::span<TokenRecord> frame_tokens, const ResolutionPolicy& policy) {
    const double median = median_range(frame_tokens);
    for (auto& t : frame_tokens) {
        if (!t.anchored()) {
            t.voxel.reset();
            continue;
        }
        const double size = effective_size(t.range, median, policy);
        t.voxel = quantize(*t.anchor, size, range_band(t.range, policy));
    }
}

const VoxelGrid::Cell* VoxelGrid::find(const VoxelIndex& v) const {
    auto it = m_cells.find(v);
    return it == m_cells.end() ? nullptr : &it->second;
}

std::vector<VoxelIndex> VoxelGrid::sorted_keys() const {
    std::vector<VoxelIndex> keys;
    keys.reserve(m_cells.size());
    for (const auto& [k, _] : m_cells) {
        keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

VoxelGrid group(std::span<const TokenRecord> tokens) {
    VoxelGrid grid;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].voxel) {
            grid.m_cells[*tokens[i].voxel].push_back(i);
        }
    }
    for (auto& [_, cell] : grid.m_cells) {
        std::sort(cell.begin(), cell.end(), [&](std::size_t a, std::size_t b) {
            return tokens[a].key() < tokens[b].key();
        });
    }
    return grid;
}

}  // namespace dgvt
