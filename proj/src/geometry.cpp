// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <string>

#include "dgvt/error.hpp"
#include "geometry_detail.hpp"

namespace dgvt {

bool Intrinsics::is_valid() const {
    return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) && fx > 0.0 && fy > 0.0;
}

bool Pose::is_valid(double tolerance) const {
    if (!rotation.allFinite() || !translation.allFinite()) {
        return false;
    }
    const double orth = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return orth <= tolerance && std::abs(rotation.determinant() - 1.0) <= tolerance;
}

Vec3 Pose::apply(const Vec3& p) const {
    return rotation * p + translation;
}

std::size_t PointMap::valid_count() const {
    std::size_t n = 0;
    for (auto f : valid) {
        n += f != 0;
    }
    return n;
}

std::size_t TokenGrid::token_count(std::uint32_t width, std::uint32_t height) const {
    DGVT_CHECK(patch_size > 0, ErrorCode::ShapeMismatch, "patch size must be positive");
    DGVT_CHECK(width % patch_size == 0 && height % patch_size == 0,
               ErrorCode::ShapeMismatch,
               "patch size " + std::to_string(patch_size) + " does not tile " + std::to_string(width) + "x" +
                   std::to_string(height));
    return static_cast<std::size_t>(width / patch_size) * (height / patch_size);
}

bool is_valid_depth(double d, const BackprojectOptions& opts) {
    if (!std::isfinite(d) || d <= 0.0) {
        return false;
    }
    return opts.max_range <= 0.0 || d <= opts.max_range;
}

namespace {

void check_depth(const DepthMap& depth, const Intrinsics& k) {
    DGVT_CHECK(k.is_valid(), ErrorCode::ShapeMismatch, "intrinsics must be finite with positive focal lengths");
    DGVT_CHECK(static_cast<std::size_t>(depth.width) * depth.height == depth.values.size(),
               ErrorCode::ShapeMismatch,
               "depth map size does not match its dimensions");
}

PointMap make_point_map(const DepthMap& depth) {
    PointMap pm;
    pm.width = depth.width;
    pm.height = depth.height;
    pm.points.resize(depth.values.size());
    pm.valid.resize(depth.values.size());
    return pm;
}

}  // namespace

PointMap backproject(const DepthMap& depth, const Intrinsics& k, const BackprojectOptions& opts) {
    check_depth(depth, k);
    PointMap pm = make_point_map(depth);
    const auto rows = static_cast<std::int64_t>(depth.height);
#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < rows; ++v) {
        detail::backproject_row(depth, k, opts, static_cast<std::uint32_t>(v), pm);
    }
    return pm;
}

std::vector<WorldPoint> to_world(const PointMap& pm, const Pose& pose) {
    DGVT_CHECK(pose.is_valid(), ErrorCode::PoseInvalid, "rotation is not orthonormal with determinant +1");
    std::vector<WorldPoint> out;
    out.reserve(pm.valid_count());
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
        if (pm.valid[i]) {
            out.push_back({pose.apply(pm.points[i]), i});
        }
    }
    return out;
}

std::vector<TokenAnchor> anchor_tokens(const PointMap& pm, const Pose& pose, const TokenGrid& grid, AnchorMode mode) {
    DGVT_CHECK(pose.is_valid(), ErrorCode::PoseInvalid, "rotation is not orthonormal with determinant +1");
    const auto n = static_cast<std::int64_t>(grid.token_count(pm.width, pm.height));
    std::vector<TokenAnchor> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < n; ++t) {
        out[static_cast<std::size_t>(t)] = detail::anchor_patch(pm, pose, grid, mode, static_cast<std::size_t>(t));
    }
    return out;
}

Eigen::Vector2d project(const Vec3& p, const Intrinsics& k) {
    return {k.fx * (p.x() / p.z()) + k.cx, k.fy * (p.y() / p.z()) + k.cy};
}

namespace serial {

PointMap backproject(const DepthMap& depth, const Intrinsics& k, const BackprojectOptions& opts) {
    check_depth(depth, k);
    PointMap pm = make_point_map(depth);
    for (std::uint32_t v = 0; v < depth.height; ++v) {
        detail::backproject_row(depth, k, opts, v, pm);
    }
    return pm;
}

std::vector<TokenAnchor> anchor_tokens(const PointMap& pm, const Pose& pose, const TokenGrid& grid, AnchorMode mode) {
    DGVT_CHECK(pose.is_valid(), ErrorCode::PoseInvalid, "rotation is not orthonormal with determinant +1");
    const std::size_t n = grid.token_count(pm.width, pm.height);
    std::vector<TokenAnchor> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        out.push_back(detail::anchor_patch(pm, pose, grid, mode, t));
    }
    return out;
}

}  // namespace serial

}  // namespace dgvt
