// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

#include "CLI11.hpp"

#include "dgvt/app.hpp"

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("dgvt");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char* env = std::getenv("DGV_LOG_LEVEL");
    const std::string level = env ? env : "warn";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "info") {
        spdlog::set_level(spdlog::level::info);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        spdlog::set_level(spdlog::level::warn);
    }
}

void add_overrides(CLI::App* cmd, dgvt::app::Overrides& o) {
    cmd->add_option("--rule", o.rule, "Selection rule: latest | priority | multi_token")
        ->check(CLI::IsMember({"latest", "priority", "multi_token"}));
    cmd->add_option("--k", o.k, "Tokens kept per voxel by the multi_token rule");
    cmd->add_option("--rho", o.rho, "Minimum keep ratio per frame");
    cmd->add_option("--window", o.window, "Active sliding-window size in frames");
    cmd->add_option("--smoothing-window", o.smoothing_window, "Temporal smoothing window (odd)");
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"dgvt: spatio-temporal visual token pruning and streaming memory"};
    app.require_subcommand(1);

    dgvt::app::PruneOptions prune;
    std::string prune_config;
    auto* prune_cmd = app.add_subcommand("prune", "Prune a recorded trajectory in one batch");
    prune_cmd->add_option("--manifest", prune.manifest, "Trajectory manifest")->required();
    prune_cmd->add_option("--config", prune_config, "Pipeline config (JSON)");
    prune_cmd->add_option("--out", prune.out, "Output run directory")->required();
    prune_cmd->add_option("--export", prune.export_format, "Also export point clouds: ply | ply-frames");
    prune_cmd->add_flag("--oracle-check", prune.oracle_check, "Compare against the brute-force reference");
    add_overrides(prune_cmd, prune.overrides);

    dgvt::app::StreamOptions stream;
    std::string stream_config;
    std::string resume;
    auto* stream_cmd = app.add_subcommand("stream", "Replay a trajectory through the sliding-window memory");
    stream_cmd->add_option("--manifest", stream.manifest, "Trajectory manifest")->required();
    stream_cmd->add_option("--config", stream_config, "Pipeline config (JSON)");
    stream_cmd->add_option("--out", stream.out, "Output run directory")->required();
    stream_cmd->add_option("--resume", resume, "Continue from a session.bin");
    stream_cmd->add_option("--max-frames", stream.max_frames, "Stop after this many new frames");
    stream_cmd->add_option("--export", stream.export_format, "Also export point clouds: ply | ply-frames");
    add_overrides(stream_cmd, stream.overrides);

    std::string export_dir;
    std::string export_format = "ply";
    auto* export_cmd = app.add_subcommand("export", "Export anchors and voxels of a run as PLY");
    export_cmd->add_option("--out", export_dir, "Completed run directory")->required();
    export_cmd->add_option("--format,--export", export_format, "ply | ply-frames");

    dgvt::app::GenerateOptions gen;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic trajectory log");
    gen_cmd->add_option("--scenario", gen.scenario, "corridor | loop | wall | static | dynamic");
    gen_cmd->add_option("--frames", gen.frames, "Number of frames");
    gen_cmd->add_option("--seed", gen.seed, "Scene seed");
    gen_cmd->add_option("--out", gen_out, "Output directory")->required();
    gen_cmd->add_option("--width", gen.width, "Image width");
    gen_cmd->add_option("--height", gen.height, "Image height");
    gen_cmd->add_option("--patch", gen.patch_size, "Patch size in pixels");
    gen_cmd->add_option("--dim", gen.feature_dim, "Token feature dimension");

    dgvt::app::FuseOptions fuse;
    auto* fuse_cmd = app.add_subcommand("fuse", "Cross-attend visual tokens over geometry tokens");
    fuse_cmd->add_option("--weights", fuse.weights, "Attention weight container")->required();
    fuse_cmd->add_option("--queries", fuse.queries, "Visual token container")->required();
    fuse_cmd->add_option("--keys", fuse.keys, "Geometry token container")->required();
    fuse_cmd->add_option("--out", fuse.out, "Output container")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : dgvt::app::kUsage;
    }

    if (*prune_cmd) {
        if (!prune_config.empty()) prune.config = prune_config;
        return dgvt::app::run_prune(prune);
    }
    if (*stream_cmd) {
        if (!stream_config.empty()) stream.config = stream_config;
        if (!resume.empty()) stream.resume = resume;
        return dgvt::app::run_stream(stream);
    }
    if (*export_cmd) {
        return dgvt::app::export_cloud(export_dir, export_format);
    }
    if (*gen_cmd) {
        gen.out = gen_out;
        return dgvt::app::run_generate(gen);
    }
    return dgvt::app::run_fuse(fuse);
}
