// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace dgvt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels.
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    bool is_valid() const;
};

/// Row-major depth grid in meters. A value is valid iff finite and > 0
/// (and not beyond the optional max range used by backproject).
struct DepthMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<double> values;

    double at(std::uint32_t u, std::uint32_t v) const {
        return values[static_cast<std::size_t>(v) * width + u];
    }
};

/// Camera-to-world rigid transform. Camera axes: +x right, +y down, +z forward.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static constexpr double kOrthonormalTolerance = 1e-6;

    bool is_valid(double tolerance = kOrthonormalTolerance) const;
    Vec3 apply(const Vec3& p) const;
};

/// Per-pixel camera-frame points. Invalid pixels carry a zero point and a
/// cleared flag.
struct PointMap {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<Vec3> points;
    std::vector<std::uint8_t> valid;

    std::size_t valid_count() const;
};

struct WorldPoint {
    Vec3 position;
    std::size_t pixel;  // row-major source pixel index
};

/// Non-overlapping square patches; token t covers patch (t % cols, t / cols).
struct TokenGrid {
    std::uint32_t patch_size = 16;

    std::uint32_t cols(std::uint32_t width) const {
        return width / patch_size;
    }
    std::uint32_t rows(std::uint32_t height) const {
        return height / patch_size;
    }
    /// Throws ShapeMismatch unless the patches tile the image exactly.
    std::size_t token_count(std::uint32_t width, std::uint32_t height) const;
};

enum class AnchorMode {
    Centroid,     // mean of the patch's valid world points
    CenterPixel,  // world point of the patch's center pixel
};

/// World-space anchor for one token. Anchorless tokens have no valid depth in
/// their patch and are exempt from voxel pruning.
struct TokenAnchor {
    std::optional<Vec3> anchor;
    double range = 0.0;  // distance from camera center to anchor
};

struct BackprojectOptions {
    double max_range = 0.0;  // <= 0 disables the cutoff
};

/// Full per-timestep input: depth, camera model, pose and fused token features
/// (L rows x C columns, row-major).
struct FrameObservation {
    std::uint64_t frame_id = 0;
    DepthMap depth;
    Intrinsics intrinsics;
    Pose pose;
    std::uint32_t token_count = 0;
    std::uint32_t feature_dim = 0;
    std::vector<float> features;
};

bool is_valid_depth(double d, const BackprojectOptions& opts = {});

PointMap backproject(const DepthMap& depth, const Intrinsics& k, const BackprojectOptions& opts = {});

std::vector<WorldPoint> to_world(const PointMap& pm, const Pose& pose);

std::vector<TokenAnchor> anchor_tokens(const PointMap& pm,
                                       const Pose& pose,
                                       const TokenGrid& grid,
                                       AnchorMode mode = AnchorMode::Centroid);

/// Projects a camera-frame point back to continuous pixel coordinates.
Eigen::Vector2d project(const Vec3& p, const Intrinsics& k);

namespace serial {

// Single-threaded references for the OpenMP kernels above. Outputs are
// bit-identical to the parallel versions.
PointMap backproject(const DepthMap& depth, const Intrinsics& k, const BackprojectOptions& opts = {});

std::vector<TokenAnchor> anchor_tokens(const PointMap& pm,
                                       const Pose& pose,
                                       const TokenGrid& grid,
                                       AnchorMode mode = AnchorMode::Centroid);

}  // namespace serial

}  // namespace dgvt
