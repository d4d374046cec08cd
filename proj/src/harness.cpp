// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "dgvt/error.hpp"

namespace dgvt::harness {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    return splitmix64(h ^ splitmix64(v));
}

float feature_value(std::uint64_t seed, std::uint64_t frame, std::uint64_t patch, int surface, std::uint64_t j) {
    const std::uint64_t h = mix(mix(mix(mix(seed, frame), patch), static_cast<std::uint64_t>(surface + 1)), j);
    // Top 24 bits -> [-1, 1).
    return static_cast<float>(static_cast<double>(h >> 40) / 8388608.0 - 1.0);
}

// Slab intersection; returns entry/exit parameters along dir.
bool slab(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& d, double& t_near, double& t_far, int& near_face, int& far_face) {
    t_near = -std::numeric_limits<double>::infinity();
    t_far = std::numeric_limits<double>::infinity();
    near_face = far_face = -1;
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) {
                return false;
            }
            continue;
        }
        double t0 = (lo[a] - o[a]) / d[a];
        double t1 = (hi[a] - o[a]) / d[a];
        int f0 = 2 * a;
        int f1 = 2 * a + 1;
        if (t0 > t1) {
            std::swap(t0, t1);
            std::swap(f0, f1);
        }
        if (t0 > t_near) {
            t_near = t0;
            near_face = f0;
        }
        if (t1 < t_far) {
            t_far = t1;
            far_face = f1;
        }
    }
    return t_near <= t_far;
}

double distance_to_box_surface(const Box& b, const Vec3& p) {
    if (b.contains(p)) {
        double d = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
            d = std::min({d, p[a] - b.min[a], b.max[a] - p[a]});
        }
        return d;
    }
    const Vec3 q = p.cwiseMax(b.min).cwiseMin(b.max);
    return (p - q).norm();
}

Vec3 random_free_point(const SyntheticScene& scene, std::mt19937_64& rng, double margin, double z) {
    std::uniform_real_distribution<double> ux(scene.room.min.x() + margin, scene.room.max.x() - margin);
    std::uniform_real_distribution<double> uy(scene.room.min.y() + margin, scene.room.max.y() - margin);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        const Vec3 p(ux(rng), uy(rng), z);
        bool free = true;
        for (const Box& b : scene.obstacles) {
            Box inflated = b;
            const Vec3 pad = b.amplitude.cwiseAbs() + Vec3::Constant(0.3);
            inflated.min -= pad;
            inflated.max += pad;
            free = free && !inflated.contains(p);
        }
        if (free) {
            return p;
        }
    }
    throw Error(ErrorCode::WaypointOutOfBounds, "could not place a waypoint in free space");
}

std::size_t frames_per_segment_for(std::size_t target, std::size_t segments) {
    if (segments == 0) {
        return std::max<std::size_t>(target, 1);
    }
    return std::max<std::size_t>(2, (target > 1 ? (target - 1) / segments : 0) + 1);
}

constexpr double kCameraHeight = 1.2;

}  // namespace

Box Box::at_frame(std::uint64_t frame) const {
    if (period <= 0.0) {
        return *this;
    }
    const double phase = std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) / period);
    Box b = *this;
    b.min += amplitude * phase;
    b.max += amplitude * phase;
    return b;
}

bool Box::contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

void SyntheticScene::validate() const {
    DGVT_CHECK((room.max.array() > room.min.array()).all(), ErrorCode::ConfigInvalid, "room extents must be positive");
    for (const Box& b : obstacles) {
        DGVT_CHECK((b.max.array() > b.min.array()).all(), ErrorCode::ConfigInvalid, "obstacle extents must be positive");
        DGVT_CHECK(room.contains(b.min - b.amplitude.cwiseAbs()) && room.contains(b.max + b.amplitude.cwiseAbs()),
                   ErrorCode::ConfigInvalid,
                   "obstacles must stay inside the room");
    }
}

Pose camera_pose(const Waypoint& w) {
    const double c = std::cos(w.yaw);
    const double s = std::sin(w.yaw);
    Pose p;
    p.rotation.col(0) = Vec3(s, -c, 0.0);
    p.rotation.col(1) = Vec3(0.0, 0.0, -1.0);
    p.rotation.col(2) = Vec3(c, s, 0.0);
    p.translation = w.position;
    return p;
}

std::optional<RayHit> cast_ray(const SyntheticScene& scene, std::uint64_t frame, const Vec3& origin, const Vec3& dir) {
    std::optional<RayHit> best;
    double t_near = 0.0;
    double t_far = 0.0;
    int near_face = -1;
    int far_face = -1;
    if (slab(scene.room.min, scene.room.max, origin, dir, t_near, t_far, near_face, far_face) && t_far > 0.0) {
        best = RayHit{t_far, far_face};
    }
    for (std::size_t k = 0; k < scene.obstacles.size(); ++k) {
        const Box b = scene.obstacles[k].at_frame(frame);
        if (slab(b.min, b.max, origin, dir, t_near, t_far, near_face, far_face) && t_near > 0.0 &&
            (!best || t_near < best->t)) {
            best = RayHit{t_near, 6 + 6 * static_cast<int>(k) + near_face};
        }
    }
    return best;
}

double distance_to_surfaces(const SyntheticScene& scene, std::uint64_t frame, const Vec3& p) {
    double d = distance_to_box_surface(scene.room, p);
    for (const Box& b : scene.obstacles) {
        d = std::min(d, distance_to_box_surface(b.at_frame(frame), p));
    }
    return d;
}

SyntheticTrajectory generate(const SyntheticScene& scene,
                             std::span<const Waypoint> path,
                             std::size_t frames_per_segment,
                             const CameraSpec& camera) {
    scene.validate();
    DGVT_CHECK(!path.empty(), ErrorCode::WaypointOutOfBounds, "path needs at least one waypoint");
    DGVT_CHECK(frames_per_segment >= 1 && (path.size() == 1 || frames_per_segment >= 2),
               ErrorCode::ConfigInvalid,
               "multi-waypoint paths need at least two frames per segment");
    const TokenGrid grid{camera.patch_size};
    const std::size_t tokens = grid.token_count(camera.width, camera.height);
    for (const Waypoint& w : path) {
        DGVT_CHECK(scene.room.contains(w.position), ErrorCode::WaypointOutOfBounds, "waypoint outside the room");
        for (const Box& b : scene.obstacles) {
            DGVT_CHECK(!b.contains(w.position), ErrorCode::WaypointOutOfBounds, "waypoint inside an obstacle");
        }
    }

    std::vector<Waypoint> poses;
    if (path.size() == 1) {
        poses.assign(frames_per_segment, path.front());
    } else {
        for (std::size_t s = 0; s + 1 < path.size(); ++s) {
            const Waypoint& a = path[s];
            const Waypoint& b = path[s + 1];
            const double dyaw = std::remainder(b.yaw - a.yaw, 2.0 * std::numbers::pi);
            for (std::size_t k = (s == 0 ? 0 : 1); k < frames_per_segment; ++k) {
                const double f = static_cast<double>(k) / static_cast<double>(frames_per_segment - 1);
                poses.push_back({a.position + (b.position - a.position) * f, a.yaw + dyaw * f});
            }
        }
    }

    SyntheticTrajectory traj;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        FrameObservation frame;
        frame.frame_id = i + 1;
        frame.intrinsics = camera.intrinsics;
        frame.pose = camera_pose(poses[i]);
        frame.depth.width = camera.width;
        frame.depth.height = camera.height;
        frame.depth.values.assign(static_cast<std::size_t>(camera.width) * camera.height,
                                  std::numeric_limits<double>::quiet_NaN());
        std::vector<int> surfaces(frame.depth.values.size(), -1);
        for (std::uint32_t v = 0; v < camera.height; ++v) {
            for (std::uint32_t u = 0; u < camera.width; ++u) {
                const Vec3 ray((static_cast<double>(u) - camera.intrinsics.cx) / camera.intrinsics.fx,
                               (static_cast<double>(v) - camera.intrinsics.cy) / camera.intrinsics.fy,
                               1.0);
                const auto hit = cast_ray(scene, frame.frame_id, frame.pose.translation, frame.pose.rotation * ray);
                if (hit) {
                    const std::size_t idx = static_cast<std::size_t>(v) * camera.width + u;
                    frame.depth.values[idx] = hit->t;
                    surfaces[idx] = hit->surface;
                }
            }
        }
        frame.token_count = static_cast<std::uint32_t>(tokens);
        frame.feature_dim = camera.feature_dim;
        frame.features.resize(tokens * camera.feature_dim);
        const std::uint32_t cols = grid.cols(camera.width);
        for (std::size_t t = 0; t < tokens; ++t) {
            const std::size_t cu = (t % cols) * camera.patch_size + camera.patch_size / 2;
            const std::size_t cv = (t / cols) * camera.patch_size + camera.patch_size / 2;
            const int surface = surfaces[cv * camera.width + cu];
            for (std::uint32_t j = 0; j < camera.feature_dim; ++j) {
                frame.features[t * camera.feature_dim + j] = feature_value(scene.seed, frame.frame_id, t, surface, j);
            }
        }
        traj.frames.push_back(std::move(frame));
        traj.surface_ids.push_back(std::move(surfaces));
    }
    return traj;
}

SyntheticTrajectory Scenario::build() const {
    return generate(scene, path, frames_per_segment, camera);
}

const char* to_string(ScenarioKind kind) {
    switch (kind) {
    case ScenarioKind::Static:
        return "static";
    case ScenarioKind::Dynamic:
        return "dynamic";
    case ScenarioKind::Loop:
        return "loop";
    case ScenarioKind::Corridor:
        return "corridor";
    }
    return "static";
}

Scenario random_scenario(ScenarioKind kind, std::uint64_t seed, std::size_t target_frames, const CameraSpec& camera) {
    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Scenario sc;
    sc.kind = kind;
    sc.camera = camera;
    sc.scene.seed = seed;
    const double sx = kind == ScenarioKind::Corridor ? 14.0 + 6.0 * unit(rng) : 6.0 + 6.0 * unit(rng);
    const double sy = kind == ScenarioKind::Corridor ? 2.5 + unit(rng) : 5.0 + 5.0 * unit(rng);
    sc.scene.room = Box{Vec3::Zero(), Vec3(sx, sy, 3.0)};

    const int obstacles = kind == ScenarioKind::Corridor ? 1 : 2 + static_cast<int>(unit(rng) * 3.0);
    for (int k = 0; k < obstacles; ++k) {
        const double w = 0.4 + 0.8 * unit(rng);
        const double d = 0.4 + 0.8 * unit(rng);
        const double h = 0.8 + 1.6 * unit(rng);
        Box b;
        b.min = Vec3(1.0 + (sx - 2.0 - w) * unit(rng), 0.6 + (sy - 1.2 - d) * unit(rng), 0.0);
        b.max = b.min + Vec3(w, d, h);
        if (kind == ScenarioKind::Dynamic) {
            b.amplitude = Vec3(0.3 * unit(rng), 0.3 * unit(rng), 0.0);
            b.period = 4.0 + 8.0 * unit(rng);
            // Keep the swept volume inside the room.
            for (int a = 0; a < 2; ++a) {
                const double lo = sc.scene.room.min[a] + b.amplitude[a];
                const double hi = sc.scene.room.max[a] - b.amplitude[a];
                if (b.min[a] < lo) {
                    b.max[a] += lo - b.min[a];
                    b.min[a] = lo;
                }
                if (b.max[a] > hi) {
                    b.min[a] -= b.max[a] - hi;
                    b.max[a] = hi;
                }
            }
        }
        sc.scene.obstacles.push_back(b);
    }

    std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
    if (kind == ScenarioKind::Loop) {
        std::vector<Waypoint> lap;
        for (int k = 0; k < 4; ++k) {
            lap.push_back({random_free_point(sc.scene, rng, 0.6, kCameraHeight), yaw(rng)});
        }
        for (int rep = 0; rep < 2; ++rep) {
            sc.path.insert(sc.path.end(), lap.begin(), lap.end());
        }
        sc.path.push_back(lap.front());
    } else {
        const int n = kind == ScenarioKind::Corridor ? 2 : 3 + static_cast<int>(unit(rng) * 3.0);
        for (int k = 0; k < n; ++k) {
            sc.path.push_back({random_free_point(sc.scene, rng, 0.6, kCameraHeight), yaw(rng)});
        }
    }
    sc.frames_per_segment = frames_per_segment_for(target_frames, sc.path.size() - 1);
    return sc;
}

Scenario corridor_scenario(std::size_t frames, const CameraSpec& camera) {
    Scenario sc;
    sc.kind = ScenarioKind::Corridor;
    sc.camera = camera;
    sc.scene.room = Box{Vec3::Zero(), Vec3(20.0, 3.0, 3.0)};
    sc.scene.obstacles.push_back(Box{Vec3(9.0, 0.0, 0.0), Vec3(10.0, 0.8, 1.5)});
    sc.scene.seed = 20;
    sc.path = {{Vec3(1.0, 1.5, kCameraHeight), 0.0}, {Vec3(15.0, 1.5, kCameraHeight), 0.0}};
    sc.frames_per_segment = std::max<std::size_t>(frames, 2);
    return sc;
}

Scenario loop_scenario(std::size_t laps, std::size_t frames_per_lap, const CameraSpec& camera) {
    Scenario sc;
    sc.kind = ScenarioKind::Loop;
    sc.camera = camera;
    sc.scene.room = Box{Vec3::Zero(), Vec3(8.0, 8.0, 3.0)};
    sc.scene.obstacles.push_back(Box{Vec3(3.5, 3.5, 0.0), Vec3(4.5, 4.5, 2.0)});
    sc.scene.seed = 7;
    const double half_pi = std::numbers::pi / 2.0;
    const Waypoint corners[4] = {
        {Vec3(1.5, 1.5, kCameraHeight), 0.0},
        {Vec3(6.5, 1.5, kCameraHeight), half_pi},
        {Vec3(6.5, 6.5, kCameraHeight), 2.0 * half_pi},
        {Vec3(1.5, 6.5, kCameraHeight), 3.0 * half_pi},
    };
    for (std::size_t lap = 0; lap < laps; ++lap) {
        sc.path.insert(sc.path.end(), std::begin(corners), std::end(corners));
    }
    sc.path.push_back(corners[0]);
    // A lap is 4 segments; frames_per_lap = 4 * (fps - 1).
    sc.frames_per_segment = std::max<std::size_t>(2, frames_per_lap / 4 + 1);
    return sc;
}

Scenario wall_scenario(double distance, std::size_t frames, const CameraSpec& camera) {
    Scenario sc;
    sc.kind = ScenarioKind::Static;
    sc.camera = camera;
    sc.scene.room = Box{Vec3::Zero(), Vec3(10.0, 10.0, 3.0)};
    sc.scene.seed = 3;
    sc.path = {{Vec3(10.0 - distance, 5.0, 1.5), 0.0}};
    sc.frames_per_segment = std::max<std::size_t>(frames, 1);
    return sc;
}

}  // namespace dgvt::harness
