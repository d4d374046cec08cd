// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "dgvt/app.hpp"
#include "dgvt/config.hpp"
#include "dgvt/fusion.hpp"
#include "dgvt/geometry.hpp"
#include "dgvt/harness.hpp"
#include "dgvt/log_format.hpp"
#include "dgvt/memory.hpp"
#include "dgvt/pruner.hpp"
#include "test_util.hpp"

using namespace dgvt;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes fixed by the acceptance criteria.
constexpr std::size_t kScenarioCount = 50;
constexpr double kOracleBudgetSeconds = 60.0;
constexpr double kRhoValues[] = {0.05, 0.1, 0.25, 0.5, 1.0};
constexpr std::size_t kLoopFrames = 500;
constexpr std::size_t kPlateauFrames = 100;
constexpr double kPlateauVariation = 0.01;
constexpr std::size_t kGeometrySamples = 100000;
constexpr double kReprojectionTolerancePx = 1e-6;
constexpr double kRigidTolerance = 1e-9;
constexpr std::size_t kFusionCases = 100;
constexpr double kFusionTolerance = 1e-10;
constexpr double kSoftmaxTolerance = 1e-12;
constexpr double kMinFramesPerSecond = 100.0;
constexpr std::uint32_t kThroughputTokens = 196;
constexpr std::uint32_t kThroughputDim = 256;

struct Outcome {
    bool pass = false;
    std::string detail;
};

const std::vector<SelectionRule>& all_rules() {
    static const std::vector<SelectionRule> rules{LatestRule{}, PriorityRule{}, MultiTokenRule{2}};
    return rules;
}

// 50 seeded scenes cycling static, dynamic and loop, 10..50 frames each.
std::vector<harness::Scenario> scenario_suite() {
    const harness::ScenarioKind kinds[] = {harness::ScenarioKind::Static, harness::ScenarioKind::Dynamic,
                                           harness::ScenarioKind::Loop};
    std::vector<harness::Scenario> out;
    for (std::size_t i = 0; i < kScenarioCount; ++i) {
        const std::size_t frames = 10 + (i * 7) % 41;
        harness::CameraSpec cam;
        if (i % 5 == 4) {
            // Larger token grid on some scenes: 128x96 with 8 px patches.
            cam.width = 128;
            cam.height = 96;
            cam.intrinsics = Intrinsics{80.0, 80.0, 64.0, 48.0};
        }
        out.push_back(harness::random_scenario(kinds[i % 3], 1000 + i, frames, cam));
    }
    return out;
}

std::vector<harness::SyntheticTrajectory>& suite_trajectories() {
    static std::vector<harness::SyntheticTrajectory> trajs = [] {
        std::vector<harness::SyntheticTrajectory> t;
        for (const auto& sc : scenario_suite()) {
            t.push_back(sc.build());
            // The oracle's desk-scale limits.
            if (t.back().frames.size() > harness::kOracleMaxFrames) t.back().frames.resize(harness::kOracleMaxFrames);
        }
        return t;
    }();
    return trajs;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome oracle_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    std::size_t runs = 0;
    std::size_t mismatches = 0;
    std::size_t max_tokens = 0;
    for (const auto& traj : suite_trajectories()) {
        std::size_t tokens = 0;
        for (const auto& f : traj.frames) tokens += f.token_count;
        max_tokens = std::max(max_tokens, tokens);
        for (const auto& rule : all_rules()) {
            PipelineConfig cfg;
            cfg.rule = rule;
            const auto fast = prune_pipeline(traj.frames, cfg);
            const auto slow = harness::oracle_prune(traj.frames, cfg);
            for (std::size_t f = 0; f < traj.frames.size(); ++f) {
                const auto id = traj.frames[f].frame_id;
                if (!(fast.selected[f] == slow.selected.at(id) && fast.completed[f] == slow.completed.at(id) &&
                      fast.final[f] == slow.final.at(id))) {
                    ++mismatches;
                }
            }
            ++runs;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {mismatches == 0 && secs < kOracleBudgetSeconds,
            fmt("%zu scenario/rule runs, %zu mismatched frames, max %zu tokens per trajectory, %.2f s (budget %.0f s)",
                runs, mismatches, max_tokens, secs, kOracleBudgetSeconds)};
}

Outcome occupancy() {
    std::size_t cells = 0;
    std::size_t violations = 0;
    auto check = [&](const std::vector<FrameObservation>& frames, const PipelineConfig& cfg) {
        const auto r = prune_pipeline(frames, cfg);
        std::map<std::uint64_t, std::size_t> frame_pos;
        for (std::size_t f = 0; f < frames.size(); ++f) frame_pos[frames[f].frame_id] = f;
        for (const auto& [_, cell] : r.grid.cells()) {
            ++cells;
            bool any = false;
            for (auto idx : cell) {
                const auto& t = r.tokens[idx];
                any = any || r.selected[frame_pos[t.frame_id]].bits[t.token_index];
            }
            violations += !any;
        }
    };
    for (const auto& traj : suite_trajectories()) {
        for (const auto& rule : all_rules()) {
            PipelineConfig cfg;
            cfg.rule = rule;
            check(traj.frames, cfg);
        }
    }
    const auto corridor = harness::corridor_scenario(40).build();
    for (const auto& rule : all_rules()) {
        PipelineConfig cfg;
        cfg.rule = rule;
        check(corridor.frames, cfg);
    }
    return {violations == 0, fmt("%zu occupied voxels checked, %zu without a representative", cells, violations)};
}

Outcome keep_ratio() {
    std::size_t frames_checked = 0;
    std::size_t violations = 0;
    const auto& trajs = suite_trajectories();
    for (std::size_t i = 0; i < trajs.size(); i += 5) {
        for (const auto& rule : all_rules()) {
            for (double rho : kRhoValues) {
                PipelineConfig cfg;
                cfg.rule = rule;
                cfg.rho = rho;
                const auto r = prune_pipeline(trajs[i].frames, cfg);
                for (const auto& m : r.final) {
                    ++frames_checked;
                    const std::size_t need = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(m.bits.size())));
                    violations += m.kept() < need;
                }
            }
        }
    }
    return {violations == 0, fmt("%zu frame masks over rho {0.05,0.1,0.25,0.5,1.0}, %zu below ceil(rho*L)",
                                 frames_checked, violations)};
}

Outcome bounded_memory() {
    auto traj = harness::loop_scenario(13, 40).build();
    traj.frames.resize(kLoopFrames);
    std::string detail;
    bool pass = true;
    const std::pair<const char*, SelectionRule> cases[] = {{"priority K=1", PriorityRule{}},
                                                           {"multi_token K=2", MultiTokenRule{2}}};
    for (const auto& [name, rule] : cases) {
        const std::size_t k = std::holds_alternative<MultiTokenRule>(rule) ? std::get<MultiTokenRule>(rule).k : 1;
        PipelineConfig cfg;
        cfg.rule = rule;
        MemoryStore store(cfg);
        std::vector<std::size_t> series;
        std::size_t anchorless_cap = 0;
        for (std::size_t i = 0; i < traj.frames.size(); ++i) {
            const auto ev = store.advance(traj.frames[i]);
            if (ev.evicted_frame) {
                const auto& f = traj.frames[*ev.evicted_frame - 1];
                const auto tokens = make_frame_tokens(f, cfg);
                const auto free = static_cast<std::size_t>(
                    std::count_if(tokens.begin(), tokens.end(), [](const TokenRecord& t) { return !t.anchored(); }));
                anchorless_cap += std::min(free, required_keep(cfg.rho, tokens.size()));
            }
            series.push_back(store.budget_report().memory_tokens);
        }
        const auto tail_begin = series.end() - static_cast<std::ptrdiff_t>(kPlateauFrames);
        const auto [lo, hi] = std::minmax_element(tail_begin, series.end());
        const double variation = *hi > 0 ? static_cast<double>(*hi - *lo) / static_cast<double>(*hi) : 0.0;
        const auto b = store.budget_report();
        const bool bounded = b.memory_tokens <= k * b.occupied_voxels + anchorless_cap;
        pass = pass && variation < kPlateauVariation && bounded;
        detail += fmt("%s%s: final-100 range [%zu, %zu] (%.3f%%), memory %zu <= %zu*%zu voxels + %zu anchorless",
                      detail.empty() ? "" : "; ", name, *lo, *hi, 100.0 * variation, b.memory_tokens, k,
                      b.occupied_voxels, anchorless_cap);
    }
    return {pass, detail};
}

Outcome smoothing_stability() {
    std::size_t scenes = 0;
    std::size_t worse = 0;
    std::size_t before_total = 0;
    std::size_t after_total = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto traj = harness::random_scenario(harness::ScenarioKind::Dynamic, 500 + seed, 30).build();
        for (const auto& rule : all_rules()) {
            PipelineConfig cfg;
            cfg.rule = rule;
            const auto r = prune_pipeline(traj.frames, cfg);
            const std::size_t before = flip_count(r.completed);
            const std::size_t after = flip_count(r.final);
            before_total += before;
            after_total += after;
            worse += after > before;
            ++scenes;
        }
    }
    std::vector<PruneMask> alternating;
    const std::uint8_t bits[] = {1, 0, 1, 0, 1};
    for (std::size_t t = 0; t < 5; ++t) alternating.push_back(PruneMask{t + 1, {bits[t]}});
    const std::size_t fixture_before = flip_count(alternating);
    const std::size_t fixture_after = flip_count(smooth(alternating));
    return {worse == 0 && fixture_after < fixture_before,
            fmt("%zu dynamic runs, %zu with more flips after smoothing (total %zu -> %zu); alternating fixture %zu -> %zu",
                scenes, worse, before_total, after_total, fixture_before, fixture_after)};
}

Outcome geometry() {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> focal(20.0, 1000.0);
    std::uniform_real_distribution<double> depth(0.1, 50.0);
    std::uniform_real_distribution<double> principal(0.0, 100.0);
    const std::uint32_t w = 100;
    const std::uint32_t h = 100;
    std::size_t samples = 0;
    double worst_px = 0.0;
    double worst_dist = 0.0;
    while (samples < kGeometrySamples) {
        Intrinsics k{focal(rng), focal(rng), principal(rng), principal(rng)};
        DepthMap d{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
        for (auto& v : d.values) v = depth(rng);
        const auto pm = backproject(d, k);
        const Pose pose = dgvt::testing::random_pose(rng, 20.0);
        const auto world = to_world(pm, pose);
        for (std::size_t i = 0; i < world.size(); ++i) {
            const auto px = project(pm.points[i], k);
            const double u = static_cast<double>(i % w);
            const double v = static_cast<double>(i / w);
            worst_px = std::max(worst_px, std::hypot(px.x() - u, px.y() - v));
            if (i > 0) {
                const double before = (pm.points[i] - pm.points[i - 1]).norm();
                const double after = (world[i].position - world[i - 1].position).norm();
                worst_dist = std::max(worst_dist, std::abs(before - after));
            }
        }
        samples += world.size();
    }
    return {worst_px <= kReprojectionTolerancePx && worst_dist <= kRigidTolerance,
            fmt("%zu samples, worst reprojection %.3g px (tol %.0e), worst distance change %.3g m (tol %.0e)", samples,
                worst_px, kReprojectionTolerancePx, worst_dist, kRigidTolerance)};
}

TokenMatrix naive_attention(const TokenMatrix& x, const TokenMatrix& kv, const AttentionWeights& w) {
    auto mul = [](const TokenMatrix& a, const TokenMatrix& b) {
        TokenMatrix out(a.rows(), b.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.cols(); ++j) {
                double s = 0.0;
                for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(i, c) * b(c, j);
                out(i, j) = s;
            }
        return out;
    };
    const TokenMatrix q = mul(x, w.query);
    const TokenMatrix k = mul(kv, w.key);
    const TokenMatrix v = mul(kv, w.value);
    const auto dh = static_cast<Eigen::Index>(w.head_dim());
    TokenMatrix heads = TokenMatrix::Zero(q.rows(), q.cols());
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(w.num_heads); ++h) {
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            std::vector<double> e(static_cast<std::size_t>(k.rows()));
            double z = 0.0;
            for (Eigen::Index j = 0; j < k.rows(); ++j) {
                double dot = 0.0;
                for (Eigen::Index c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
                e[j] = std::exp(dot / std::sqrt(static_cast<double>(dh)));
                z += e[j];
            }
            for (Eigen::Index j = 0; j < k.rows(); ++j)
                for (Eigen::Index c = 0; c < dh; ++c) heads(i, h * dh + c) += e[j] / z * v(j, h * dh + c);
        }
    }
    return mul(heads, w.output);
}

Outcome fusion() {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    auto random = [&](Eigen::Index r, Eigen::Index c) {
        TokenMatrix m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
        return m;
    };
    const std::size_t head_choices[] = {1, 2, 4, 8};
    double worst = 0.0;
    double worst_sum = 0.0;
    bool single_exact = true;
    for (std::size_t c = 0; c < kFusionCases; ++c) {
        const std::size_t heads = head_choices[c % 4];
        const std::size_t d = heads * (1 + c % 5) * 2;
        const auto w = AttentionWeights::random(d, heads, 9000 + c);
        const TokenMatrix q = random(1 + static_cast<Eigen::Index>(c % 7), static_cast<Eigen::Index>(d));
        const TokenMatrix kv = random(1 + static_cast<Eigen::Index>((c * 3) % 11), static_cast<Eigen::Index>(d));
        worst = std::max(worst, (cross_attend(q, kv, w) - naive_attention(q, kv, w)).cwiseAbs().maxCoeff());
        for (std::size_t h = 0; h < heads; ++h) {
            const TokenMatrix a = attention_weights(q, kv, w, h);
            for (Eigen::Index i = 0; i < a.rows(); ++i) worst_sum = std::max(worst_sum, std::abs(a.row(i).sum() - 1.0));
        }
        const TokenMatrix one = kv.topRows(1);
        const TokenMatrix per_head = attend_heads(q, one, w);
        const TokenMatrix projected = one * w.value;
        for (Eigen::Index i = 0; i < per_head.rows(); ++i) single_exact = single_exact && per_head.row(i) == projected.row(0);
    }
    return {worst <= kFusionTolerance && worst_sum <= kSoftmaxTolerance && single_exact,
            fmt("%zu cases, max |diff| vs naive %.3g (tol %.0e), max |row sum - 1| %.3g (tol %.0e), single-key exact: %s",
                kFusionCases, worst, kFusionTolerance, worst_sum, kSoftmaxTolerance, single_exact ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism(const fs::path& work) {
    app::GenerateOptions g;
    g.scenario = "dynamic";
    g.frames = 40;
    g.seed = 8;
    g.out = work / "det_log";
    if (app::run_generate(g) != app::kOk) return {false, "could not generate the log"};
    const fs::path manifest = g.out / "manifest.json";

    std::size_t compared = 0;
    std::size_t differing = 0;
    auto same = [&](const fs::path& a, const fs::path& b, std::initializer_list<const char*> files) {
        for (const char* f : files) {
            ++compared;
            differing += slurp(a / f) != slurp(b / f) || !fs::exists(a / f);
        }
    };
    for (const char* rule : {"latest", "priority", "multi_token"}) {
        app::PruneOptions p;
        p.manifest = manifest;
        p.overrides.rule = rule;
        p.out = work / (std::string("det_prune_a_") + rule);
        int rc = app::run_prune(p);
        p.out = work / (std::string("det_prune_b_") + rule);
        rc |= app::run_prune(p);
        if (rc != app::kOk) return {false, "prune failed"};
        same(work / (std::string("det_prune_a_") + rule), p.out, {"masks.txt", "tokens.tsv", "voxels.tsv", "metrics.json"});

        app::StreamOptions s;
        s.manifest = manifest;
        s.overrides.rule = rule;
        s.overrides.window = 6;
        s.out = work / (std::string("det_stream_a_") + rule);
        rc = app::run_stream(s);
        s.out = work / (std::string("det_stream_b_") + rule);
        rc |= app::run_stream(s);
        app::StreamOptions first = s;
        first.out = work / (std::string("det_stream_first_") + rule);
        first.max_frames = 17;
        rc |= app::run_stream(first);
        app::StreamOptions rest;
        rest.manifest = manifest;
        rest.resume = first.out / "session.bin";
        rest.out = work / (std::string("det_stream_rest_") + rule);
        rc |= app::run_stream(rest);
        if (rc != app::kOk) return {false, "stream failed"};
        same(work / (std::string("det_stream_a_") + rule), s.out,
             {"steps.jsonl", "session.bin", "tokens.tsv", "voxels.tsv", "metrics.json"});
        same(s.out, rest.out, {"session.bin", "tokens.tsv", "voxels.tsv"});
    }
    return {differing == 0, fmt("%zu file comparisons (repeat prune, repeat stream, resumed stream), %zu differ",
                                compared, differing)};
}

Outcome throughput(const fs::path& work) {
    app::GenerateOptions g;
    g.scenario = "loop";
    g.frames = 400;
    g.width = 224;
    g.height = 224;
    g.patch_size = 16;
    g.feature_dim = kThroughputDim;
    g.out = work / "tp_log";
    if (app::run_generate(g) != app::kOk) return {false, "could not generate the log"};
    const auto frames = read_manifest(g.out / "manifest.json").size();
    const auto first = decode_frame(read_file(read_manifest(g.out / "manifest.json").front()));
    if (first.token_count != kThroughputTokens || first.feature_dim != kThroughputDim) {
        return {false, "log does not have 196 tokens x 256 dims"};
    }
    app::StreamOptions s;
    s.manifest = g.out / "manifest.json";
    s.out = work / "tp_stream";
    const auto start = std::chrono::steady_clock::now();
    const int rc = app::run_stream(s);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double fps = static_cast<double>(frames) / secs;
    return {rc == app::kOk && fps >= kMinFramesPerSecond,
            fmt("%zu frames of %u tokens x %u dims streamed in %.3f s: %.1f frames/s (floor %.0f), decode included",
                frames, kThroughputTokens, kThroughputDim, secs, fps, kMinFramesPerSecond)};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const fs::path work = fs::temp_directory_path() / "dgvt_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"oracle equivalence", oracle_equivalence},
        {"occupancy guarantee", occupancy},
        {"keep-ratio floor", keep_ratio},
        {"bounded memory", bounded_memory},
        {"smoothing stability", smoothing_stability},
        {"geometry correctness", geometry},
        {"fusion correctness", fusion},
        {"determinism and round-trip", [&] { return determinism(work); }},
        {"throughput", [&] { return throughput(work); }},
    };
    int failed = 0;
    int index = 1;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", index++, name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    fs::remove_all(work);
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
    return failed == 0 ? 0 : 1;
}
