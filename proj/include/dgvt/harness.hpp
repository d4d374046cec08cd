// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgvt/config.hpp"
#include "dgvt/geometry.hpp"
#include "dgvt/pruner.hpp"

namespace dgvt::harness {

/// Axis-aligned box. A moving box is offset by amplitude * sin(2*pi*f/period)
/// at frame f.
struct Box {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Ones();
    Vec3 amplitude = Vec3::Zero();
    double period = 0.0;

    Box at_frame(std::uint64_t frame) const;
    bool contains(const Vec3& p) const;
};

struct SyntheticScene {
    Box room;
    std::vector<Box> obstacles;
    std::uint64_t seed = 0;

    void validate() const;  // throws ConfigInvalid
};

struct Waypoint {
    Vec3 position = Vec3::Zero();
    double yaw = 0.0;  // radians about +z, 0 looks down +x
};

struct CameraSpec {
    std::uint32_t width = 64;
    std::uint32_t height = 48;
    Intrinsics intrinsics{40.0, 40.0, 32.0, 24.0};
    std::uint32_t patch_size = 8;
    std::uint32_t feature_dim = 16;
};

struct SyntheticTrajectory {
    std::vector<FrameObservation> frames;
    /// Per frame, the id of the surface hit by each pixel's ray (-1: none).
    std::vector<std::vector<int>> surface_ids;
};

/// Level camera (pitch 0) looking along yaw. Camera +z maps to world
/// (cos yaw, sin yaw, 0), +x to (sin yaw, -cos yaw, 0), +y to (0, 0, -1).
Pose camera_pose(const Waypoint& w);

/// Positions are linearly interpolated and yaw follows the shortest arc.
/// Each segment contributes `frames_per_segment` samples including both
/// endpoints; shared endpoints are emitted once. Frame ids start at 1.
/// Throws WaypointOutOfBounds when a waypoint is outside the room or inside
/// an obstacle.
SyntheticTrajectory generate(const SyntheticScene& scene,
                             std::span<const Waypoint> path,
                             std::size_t frames_per_segment,
                             const CameraSpec& camera = {});

struct RayHit {
    double t = 0.0;  // distance along the (unnormalized) ray direction
    int surface = -1;
};

/// Nearest hit of origin + t * dir (t > 0) against the room's inner walls and
/// the obstacles at `frame`. Surfaces: room faces 0..5, obstacle k faces
/// 6 + 6k .. 11 + 6k.
std::optional<RayHit> cast_ray(const SyntheticScene& scene, std::uint64_t frame, const Vec3& origin, const Vec3& dir);

/// Distance from p to the closest scene surface at `frame`.
double distance_to_surfaces(const SyntheticScene& scene, std::uint64_t frame, const Vec3& p);

enum class ScenarioKind {
    Static,
    Dynamic,
    Loop,
    Corridor,
};

struct Scenario {
    ScenarioKind kind = ScenarioKind::Static;
    SyntheticScene scene;
    std::vector<Waypoint> path;
    std::size_t frames_per_segment = 2;
    CameraSpec camera;

    SyntheticTrajectory build() const;
};

/// Seeded random room with obstacles and a free-space path of about
/// `target_frames` frames.
Scenario random_scenario(ScenarioKind kind, std::uint64_t seed, std::size_t target_frames, const CameraSpec& camera = {});

/// A 20 m corridor walked end to end.
Scenario corridor_scenario(std::size_t frames, const CameraSpec& camera = {});

/// Square loop around a central pillar in an 8 m room, repeated `laps` times
/// with `frames_per_lap` frames per lap. Every lap replays identical poses.
Scenario loop_scenario(std::size_t laps, std::size_t frames_per_lap, const CameraSpec& camera = {});

/// Camera facing the +x wall of a room at distance `distance`.
Scenario wall_scenario(double distance, std::size_t frames, const CameraSpec& camera = {});

const char* to_string(ScenarioKind kind);

struct OracleResult {
    std::map<std::uint64_t, PruneMask> selected;
    std::map<std::uint64_t, PruneMask> completed;
    std::map<std::uint64_t, PruneMask> final;
};

inline constexpr std::size_t kOracleMaxFrames = 50;
inline constexpr std::size_t kOracleMaxTokens = 10000;

/// Direct enumeration of the pruning algorithm: quadratic grouping,
/// exhaustive per-cell scoring, full greedy rescoring and explicit per-index
/// votes. Shares no code with the production pruner. Throws ScaleExceeded
/// beyond 50 frames or 10^4 tokens.
OracleResult oracle_prune(std::span<const FrameObservation> frames, const PipelineConfig& config);

}  // namespace dgvt::harness
