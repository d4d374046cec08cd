// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. Pairs share inputs; compare the
// *_Serial and *_Parallel rows.

#include <benchmark/benchmark.h>

#include <random>

#include "dgvt/config.hpp"
#include "dgvt/fusion.hpp"
#include "dgvt/geometry.hpp"
#include "dgvt/harness.hpp"
#include "dgvt/pruner.hpp"

using namespace dgvt;

namespace {

DepthMap random_depth(std::uint32_t w, std::uint32_t h) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.3, 10.0);
    DepthMap m{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
    for (auto& v : m.values) v = d(rng);
    return m;
}

const Intrinsics kIntrinsics{280.0, 280.0, 112.0, 112.0};

TokenMatrix random_tokens(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    TokenMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

const std::vector<FrameObservation>& pipeline_frames() {
    static const auto frames = [] {
        harness::CameraSpec cam;
        cam.width = 224;
        cam.height = 224;
        cam.patch_size = 16;
        cam.intrinsics = kIntrinsics;
        cam.feature_dim = 32;
        return harness::random_scenario(harness::ScenarioKind::Dynamic, 3, 40, cam).build().frames;
    }();
    return frames;
}

void BM_Backproject_Serial(benchmark::State& state) {
    const auto depth = random_depth(static_cast<std::uint32_t>(state.range(0)), static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(serial::backproject(depth, kIntrinsics));
}

void BM_Backproject_Parallel(benchmark::State& state) {
    const auto depth = random_depth(static_cast<std::uint32_t>(state.range(0)), static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(backproject(depth, kIntrinsics));
}

void BM_Anchor_Serial(benchmark::State& state) {
    const auto pm = backproject(random_depth(224, 224), kIntrinsics);
    for (auto _ : state) benchmark::DoNotOptimize(serial::anchor_tokens(pm, Pose{}, TokenGrid{16}));
}

void BM_Anchor_Parallel(benchmark::State& state) {
    const auto pm = backproject(random_depth(224, 224), kIntrinsics);
    for (auto _ : state) benchmark::DoNotOptimize(anchor_tokens(pm, Pose{}, TokenGrid{16}));
}

void BM_CrossAttend_Serial(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto w = AttentionWeights::random(d, 4, 1);
    const auto q = random_tokens(196, static_cast<Eigen::Index>(d), 2);
    const auto kv = random_tokens(196, static_cast<Eigen::Index>(d), 3);
    for (auto _ : state) benchmark::DoNotOptimize(serial::cross_attend(q, kv, w));
}

void BM_CrossAttend_Parallel(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const auto w = AttentionWeights::random(d, 4, 1);
    const auto q = random_tokens(196, static_cast<Eigen::Index>(d), 2);
    const auto kv = random_tokens(196, static_cast<Eigen::Index>(d), 3);
    for (auto _ : state) benchmark::DoNotOptimize(cross_attend(q, kv, w));
}

void BM_Pipeline_Serial(benchmark::State& state) {
    PipelineConfig cfg;
    cfg.rule = PriorityRule{};
    const auto& frames = pipeline_frames();
    for (auto _ : state) benchmark::DoNotOptimize(prune_pipeline(frames, cfg, false));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}

void BM_Pipeline_Parallel(benchmark::State& state) {
    PipelineConfig cfg;
    cfg.rule = PriorityRule{};
    const auto& frames = pipeline_frames();
    for (auto _ : state) benchmark::DoNotOptimize(prune_pipeline(frames, cfg, true));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(frames.size()));
}

}  // namespace

BENCHMARK(BM_Backproject_Serial)->Arg(224)->Arg(640);
BENCHMARK(BM_Backproject_Parallel)->Arg(224)->Arg(640);
BENCHMARK(BM_Anchor_Serial);
BENCHMARK(BM_Anchor_Parallel);
BENCHMARK(BM_CrossAttend_Serial)->Arg(64)->Arg(256);
BENCHMARK(BM_CrossAttend_Parallel)->Arg(64)->Arg(256);
BENCHMARK(BM_Pipeline_Serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Pipeline_Parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
