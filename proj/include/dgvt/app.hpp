// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "dgvt/config.hpp"
#include "dgvt/error.hpp"

namespace dgvt::app {

/// Process exit statuses.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfigInvalid = 2,
    kMalformedLog = 3,
    kInvariantViolation = 4,
};

int exit_code_for(ErrorCode code);

/// Command-line overrides applied on top of the config file.
struct Overrides {
    std::optional<std::string> rule;
    std::optional<std::size_t> k;
    std::optional<double> rho;
    std::optional<std::size_t> window;
    std::optional<std::size_t> smoothing_window;
};

PipelineConfig resolve_config(const std::optional<std::filesystem::path>& config_path, const Overrides& overrides);

struct PruneOptions {
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    Overrides overrides;
    std::optional<std::string> export_format;
    bool oracle_check = false;
};

/// Batch pruning. Writes masks.txt, tokens.tsv, voxels.tsv and metrics.json
/// into `out`. Returns an exit status; errors are logged, not thrown.
int run_prune(const PruneOptions& opts);

struct StreamOptions {
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out;
    Overrides overrides;
    std::optional<std::filesystem::path> resume;  // session.bin of an earlier run
    std::optional<std::size_t> max_frames;        // stop after this many new frames
    std::optional<std::string> export_format;
};

/// Streaming replay through the sliding-window memory. Writes steps.jsonl
/// (one budget report per frame), tokens.tsv (memory then active tokens),
/// voxels.tsv, session.bin and metrics.json.
int run_stream(const StreamOptions& opts);

/// Writes anchors.ply and voxels.ply from a completed run directory.
/// Formats: "ply" (x y z) and "ply-frames" (x y z frame_id for anchors).
int export_cloud(const std::filesystem::path& run_dir, const std::string& format);

struct GenerateOptions {
    std::string scenario = "corridor";  // corridor | loop | wall | static | dynamic
    std::size_t frames = 20;
    std::uint64_t seed = 1;
    std::filesystem::path out;
    std::uint32_t width = 64;
    std::uint32_t height = 48;
    std::uint32_t patch_size = 8;
    std::uint32_t feature_dim = 16;
};

int run_generate(const GenerateOptions& opts);

struct FuseOptions {
    std::filesystem::path weights;
    std::filesystem::path queries;
    std::filesystem::path keys;
    std::filesystem::path out;
};

/// Loads tensor containers and writes the fused tokens as tensor "fused".
/// Queries are tensor "tokens" of `queries`, geometry tokens are tensor
/// "tokens" of `keys`; an "align" tensor in `weights` is applied to them
/// first.
int run_fuse(const FuseOptions& opts);

/// Shortest round-trip decimal form of a double.
std::string format_number(double v);

}  // namespace dgvt::app
