// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Per-element bodies shared by the OpenMP kernels and their serial
// references, so both paths perform identical floating-point operations.

#include "dgvt/geometry.hpp"

namespace dgvt::detail {

inline Vec3 backproject_pixel(double depth, std::uint32_t u, std::uint32_t v, const Intrinsics& k) {
    return Vec3(depth * ((static_cast<double>(u) - k.cx) / k.fx),
                depth * ((static_cast<double>(v) - k.cy) / k.fy),
                depth);
}

inline void backproject_row(const DepthMap& depth,
                            const Intrinsics& k,
                            const BackprojectOptions& opts,
                            std::uint32_t v,
                            PointMap& out) {
    for (std::uint32_t u = 0; u < depth.width; ++u) {
        const std::size_t i = static_cast<std::size_t>(v) * depth.width + u;
        const double d = depth.values[i];
        if (is_valid_depth(d, opts)) {
            out.points[i] = backproject_pixel(d, u, v, k);
            out.valid[i] = 1;
        } else {
            out.points[i] = Vec3::Zero();
            out.valid[i] = 0;
        }
    }
}

inline TokenAnchor anchor_patch(const PointMap& pm,
                                const Pose& pose,
                                const TokenGrid& grid,
                                AnchorMode mode,
                                std::size_t token) {
    const std::uint32_t cols = grid.cols(pm.width);
    const std::uint32_t u0 = static_cast<std::uint32_t>(token % cols) * grid.patch_size;
    const std::uint32_t v0 = static_cast<std::uint32_t>(token / cols) * grid.patch_size;
    TokenAnchor out;
    if (mode == AnchorMode::CenterPixel) {
        const std::size_t i = static_cast<std::size_t>(v0 + grid.patch_size / 2) * pm.width + u0 + grid.patch_size / 2;
        if (pm.valid[i]) {
            out.anchor = pose.apply(pm.points[i]);
        }
    } else {
        Vec3 sum = Vec3::Zero();
        std::size_t count = 0;
        for (std::uint32_t v = v0; v < v0 + grid.patch_size; ++v) {
            for (std::uint32_t u = u0; u < u0 + grid.patch_size; ++u) {
                const std::size_t i = static_cast<std::size_t>(v) * pm.width + u;
                if (pm.valid[i]) {
                    sum += pose.apply(pm.points[i]);
                    ++count;
                }
            }
        }
        if (count > 0) {
            out.anchor = sum / static_cast<double>(count);
        }
    }
    if (out.anchor) {
        out.range = (*out.anchor - pose.translation).norm();
    }
    return out;
}

}  // namespace dgvt::detail
