// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/app.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"

#include "dgvt/fusion.hpp"
#include "dgvt/harness.hpp"
#include "dgvt/log_format.hpp"
#include "dgvt/memory.hpp"
#include "dgvt/pruner.hpp"

namespace dgvt::app {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
int guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        spdlog::error("{} failed: {}", what, e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        spdlog::error("{} failed: {}", what, e.what());
        return kInvariantViolation;
    }
}

std::string token_line(const TokenRecord& t) {
    std::string line = std::to_string(t.frame_id) + '\t' + std::to_string(t.token_index);
    if (t.anchored()) {
        line += '\t' + format_number(t.anchor->x()) + '\t' + format_number(t.anchor->y()) + '\t' +
                format_number(t.anchor->z()) + '\t' + format_number(t.range);
    } else {
        line += "\t-\t-\t-\t-";
    }
    return line + '\n';
}

constexpr const char* kTokenHeader = "frame_id\ttoken_index\tx\ty\tz\trange\n";
constexpr const char* kVoxelHeader = "ix\tiy\tiz\tband\tcell_size\tcx\tcy\tcz\ttokens\n";

std::string voxel_line(const VoxelIndex& v, std::size_t count) {
    const Vec3 c = v.center();
    return std::to_string(v.ix) + '\t' + std::to_string(v.iy) + '\t' + std::to_string(v.iz) + '\t' +
           std::to_string(static_cast<int>(v.band)) + '\t' + format_number(v.cell_size) + '\t' + format_number(c.x()) +
           '\t' + format_number(c.y()) + '\t' + format_number(c.z()) + '\t' + std::to_string(count) + '\n';
}

std::string mask_bits(const PruneMask& m) {
    std::string s;
    s.reserve(m.bits.size());
    for (auto b : m.bits) {
        s.push_back(b ? '1' : '0');
    }
    return s;
}

nlohmann::ordered_json budget_json(const BudgetReport& r) {
    nlohmann::ordered_json j;
    j["active_frames"] = r.active_frames;
    j["active_tokens"] = r.active_tokens;
    j["memory_tokens"] = r.memory_tokens;
    j["occupied_voxels"] = r.occupied_voxels;
    j["observed_tokens"] = r.observed_tokens;
    j["reduction_ratio"] = r.reduction_ratio;
    return j;
}

// Invariants every batch run must satisfy before its outputs are trusted.
void check_prune_invariants(const PruneResult& r, const PipelineConfig& config) {
    for (const auto& [voxel, cell] : r.grid.cells()) {
        bool represented = false;
        for (std::size_t idx : cell) {
            const TokenRecord& t = r.tokens[idx];
            const auto f = static_cast<std::size_t>(std::lower_bound(r.frame_offsets.begin(), r.frame_offsets.end(), idx + 1) -
                                                    r.frame_offsets.begin()) - 1;
            represented = represented || r.selected[f].bits[t.token_index];
        }
        DGVT_CHECK(represented, ErrorCode::InvariantViolation, "occupancy guarantee: a voxel lost every token");
    }
    for (std::size_t f = 0; f < r.final.size(); ++f) {
        const std::size_t need = required_keep(config.rho, r.final[f].bits.size());
        DGVT_CHECK(r.completed[f].kept() >= need && r.final[f].kept() >= need,
                   ErrorCode::InvariantViolation,
                   "keep-ratio floor violated in frame " + std::to_string(r.final[f].frame_id));
    }
}

void write_ply(const fs::path& path, const std::vector<std::array<double, 3>>& points, const std::vector<std::uint64_t>* frames) {
    std::string s = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n";
    if (frames) {
        s += "property uint frame_id\n";
    }
    s += "end_header\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        s += format_number(points[i][0]) + ' ' + format_number(points[i][1]) + ' ' + format_number(points[i][2]);
        if (frames) {
            s += ' ' + std::to_string((*frames)[i]);
        }
        s += '\n';
    }
    write_text(path, s);
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) {
        out.push_back(field);
    }
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    DGVT_CHECK(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::NoRunData, "bad number '" + s + "' in run data");
    return v;
}

}  // namespace

int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::BadRatio:
        return kConfigInvalid;
    case ErrorCode::MalformedLog:
    case ErrorCode::NoRunData:
    case ErrorCode::PoseInvalid:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::LengthMismatch:
    case ErrorCode::NonMonotonicFrame:
    case ErrorCode::NonFinite:
        return kMalformedLog;
    default:
        return kInvariantViolation;
    }
}

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

PipelineConfig resolve_config(const std::optional<fs::path>& config_path, const Overrides& o) {
    nlohmann::json j = nlohmann::json::object();
    if (config_path) {
        std::ifstream in(*config_path);
        DGVT_CHECK(in.good(), ErrorCode::ConfigInvalid, "cannot read config " + config_path->string());
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
        }
        DGVT_CHECK(j.is_object(), ErrorCode::ConfigInvalid, "config must be a key/value object");
    }
    if (o.rule) j["rule"] = *o.rule;
    if (o.k) j["k"] = *o.k;
    if (o.rho) j["rho"] = *o.rho;
    if (o.window) j["window_size"] = *o.window;
    if (o.smoothing_window) j["smoothing_window"] = *o.smoothing_window;
    return config_from_json(j);
}

int run_prune(const PruneOptions& opts) {
    return guarded("prune", [&] {
        const PipelineConfig config = resolve_config(opts.config, opts.overrides);
        const auto frames = load_trajectory(opts.manifest);
        const auto start = std::chrono::steady_clock::now();
        const PruneResult r = prune_pipeline(frames, config);
        spdlog::info("pruned {} frames in {:.3f} s", frames.size(),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        check_prune_invariants(r, config);

        std::string oracle = "skipped";
        if (opts.oracle_check) {
            const auto expected = harness::oracle_prune(frames, config);
            bool match = expected.final.size() == r.final.size();
            for (const auto& m : r.final) {
                auto it = expected.final.find(m.frame_id);
                match = match && it != expected.final.end() && it->second == m;
            }
            oracle = match ? "match" : "mismatch";
        }

        fs::create_directories(opts.out);
        std::string masks = "# frame_id mask\n";
        for (const auto& m : r.final) {
            masks += std::to_string(m.frame_id) + ' ' + mask_bits(m) + '\n';
        }
        write_text(opts.out / "masks.txt", masks);

        const auto survivors = r.surviving_tokens();
        std::string tokens = kTokenHeader;
        for (const auto& t : survivors) {
            tokens += token_line(t);
        }
        write_text(opts.out / "tokens.tsv", tokens);

        std::map<VoxelIndex, std::size_t> voxels;
        for (const auto& t : survivors) {
            if (t.voxel) {
                ++voxels[*t.voxel];
            }
        }
        std::string vox = kVoxelHeader;
        for (const auto& [v, n] : voxels) {
            vox += voxel_line(v, n);
        }
        write_text(opts.out / "voxels.tsv", vox);

        nlohmann::ordered_json metrics;
        metrics["config"] = to_json(config);
        metrics["frames"] = frames.size();
        std::size_t total = 0;
        std::size_t kept = 0;
        double min_fraction = 1.0;
        nlohmann::ordered_json per_frame = nlohmann::ordered_json::array();
        for (std::size_t f = 0; f < r.final.size(); ++f) {
            const std::size_t L = r.final[f].bits.size();
            const double fraction = L ? static_cast<double>(r.final[f].kept()) / static_cast<double>(L) : 1.0;
            total += L;
            kept += r.final[f].kept();
            min_fraction = std::min(min_fraction, fraction);
            nlohmann::ordered_json e;
            e["frame_id"] = r.final[f].frame_id;
            e["tokens"] = L;
            e["selected"] = r.selected[f].kept();
            e["completed"] = r.completed[f].kept();
            e["kept"] = r.final[f].kept();
            e["kept_fraction"] = fraction;
            per_frame.push_back(e);
        }
        metrics["tokens_total"] = total;
        metrics["tokens_kept"] = kept;
        metrics["reduction_ratio"] = total ? static_cast<double>(kept) / static_cast<double>(total) : 1.0;
        metrics["min_kept_fraction"] = min_fraction;
        metrics["occupied_voxels"] = r.grid.size();
        metrics["flips_before_smoothing"] = flip_count(r.completed);
        metrics["flips_after_smoothing"] = flip_count(r.final);
        metrics["oracle_check"] = oracle;
        metrics["per_frame"] = per_frame;
        write_text(opts.out / "metrics.json", metrics.dump(2) + "\n");

        if (oracle == "mismatch") {
            spdlog::error("invariant violated: oracle equivalence (pipeline masks differ from the reference)");
            return static_cast<int>(kInvariantViolation);
        }
        if (opts.export_format) {
            return export_cloud(opts.out, *opts.export_format);
        }
        return static_cast<int>(kOk);
    });
}

int run_stream(const StreamOptions& opts) {
    return guarded("stream", [&] {
        std::unique_ptr<MemoryStore> store;
        if (opts.resume) {
            store = MemoryStore::restore(read_file(*opts.resume));
            if (opts.config || opts.overrides.rule || opts.overrides.rho || opts.overrides.window ||
                opts.overrides.k || opts.overrides.smoothing_window) {
                const PipelineConfig requested = resolve_config(opts.config, opts.overrides);
                DGVT_CHECK(to_json(requested) == to_json(store->config()),
                           ErrorCode::ConfigInvalid,
                           "config differs from the resumed session");
            }
        } else {
            store = std::make_unique<MemoryStore>(resolve_config(opts.config, opts.overrides));
        }

        const auto paths = read_manifest(opts.manifest);
        fs::create_directories(opts.out);
        std::ofstream steps(opts.out / "steps.jsonl", std::ios::trunc);
        DGVT_CHECK(steps.good(), ErrorCode::InvariantViolation, "cannot write steps.jsonl");

        // Decode the next record while the current one is processed.
        auto load = [](fs::path p) { return decode_frame(read_file(p)); };
        std::future<FrameObservation> next;
        std::size_t cursor = 0;
        auto schedule = [&] {
            if (cursor < paths.size()) {
                next = std::async(std::launch::async, load, paths[cursor++]);
            }
        };
        schedule();
        std::size_t processed = 0;
        const auto start = std::chrono::steady_clock::now();
        while (next.valid()) {
            FrameObservation frame = next.get();
            schedule();
            const auto last = store->last_frame_id();
            if (last && frame.frame_id <= *last) {
                continue;  // already folded into the resumed session
            }
            if (opts.max_frames && processed >= *opts.max_frames) {
                break;
            }
            const EvictionReport ev = store->advance(frame);
            ++processed;
            nlohmann::ordered_json line;
            line["frame_id"] = frame.frame_id;
            line["evicted_frame"] = ev.evicted_frame ? nlohmann::ordered_json(*ev.evicted_frame) : nlohmann::ordered_json();
            const auto budget = budget_json(store->budget_report());
            for (const auto& [k, v] : budget.items()) {
                line[k] = v;
            }
            steps << line.dump() << '\n';
        }
        if (next.valid()) {
            next.wait();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        spdlog::info("streamed {} frames in {:.3f} s", processed, secs);

        const auto bytes = store->serialize();
        write_file(opts.out / "session.bin", bytes);
        const MemorySnapshot snap = store->snapshot();
        std::string tokens = kTokenHeader;
        for (const auto& t : snap.memory) tokens += token_line(t);
        for (const auto& t : snap.active) tokens += token_line(t);
        write_text(opts.out / "tokens.tsv", tokens);
        std::string vox = kVoxelHeader;
        for (const auto& [v, n] : store->occupied_voxels()) vox += voxel_line(v, n);
        write_text(opts.out / "voxels.tsv", vox);

        nlohmann::ordered_json metrics;
        metrics["config"] = to_json(store->config());
        metrics["frames_processed"] = processed;
        metrics["last_frame_id"] = store->last_frame_id() ? nlohmann::ordered_json(*store->last_frame_id()) : nlohmann::ordered_json();
        metrics["budget"] = budget_json(store->budget_report());
        metrics["memory_tokens_in_snapshot"] = snap.memory.size();
        metrics["active_tokens_in_snapshot"] = snap.active.size();
        write_text(opts.out / "metrics.json", metrics.dump(2) + "\n");

        if (opts.export_format) {
            return export_cloud(opts.out, *opts.export_format);
        }
        return static_cast<int>(kOk);
    });
}

int export_cloud(const fs::path& run_dir, const std::string& format) {
    return guarded("export", [&] {
        DGVT_CHECK(format == "ply" || format == "ply-frames", ErrorCode::ConfigInvalid, "unknown export format '" + format + "'");
        std::ifstream tokens(run_dir / "tokens.tsv");
        std::ifstream voxels(run_dir / "voxels.tsv");
        DGVT_CHECK(tokens.good() && voxels.good(), ErrorCode::NoRunData, "no completed run in " + run_dir.string());

        std::vector<std::array<double, 3>> anchors;
        std::vector<std::uint64_t> frames;
        std::string line;
        std::getline(tokens, line);
        DGVT_CHECK(line + '\n' == kTokenHeader, ErrorCode::NoRunData, "tokens.tsv has an unexpected header");
        while (std::getline(tokens, line)) {
            const auto f = split_tabs(line);
            DGVT_CHECK(f.size() == 6, ErrorCode::NoRunData, "malformed tokens.tsv line");
            if (f[2] == "-") {
                continue;
            }
            anchors.push_back({parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
            frames.push_back(std::stoull(f[0]));
        }

        std::vector<std::array<double, 3>> centers;
        std::getline(voxels, line);
        DGVT_CHECK(line + '\n' == kVoxelHeader, ErrorCode::NoRunData, "voxels.tsv has an unexpected header");
        while (std::getline(voxels, line)) {
            const auto f = split_tabs(line);
            DGVT_CHECK(f.size() == 9, ErrorCode::NoRunData, "malformed voxels.tsv line");
            centers.push_back({parse_double(f[5]), parse_double(f[6]), parse_double(f[7])});
        }

        write_ply(run_dir / "anchors.ply", anchors, format == "ply-frames" ? &frames : nullptr);
        write_ply(run_dir / "voxels.ply", centers, nullptr);
        spdlog::info("exported {} anchors and {} voxels", anchors.size(), centers.size());
        return static_cast<int>(kOk);
    });
}

int run_generate(const GenerateOptions& opts) {
    return guarded("generate", [&] {
        harness::CameraSpec cam;
        cam.width = opts.width;
        cam.height = opts.height;
        cam.patch_size = opts.patch_size;
        cam.feature_dim = opts.feature_dim;
        cam.intrinsics = Intrinsics{0.625 * opts.width, 0.625 * opts.width, 0.5 * opts.width, 0.5 * opts.height};
        harness::Scenario sc;
        if (opts.scenario == "corridor") {
            sc = harness::corridor_scenario(opts.frames, cam);
        } else if (opts.scenario == "loop") {
            const std::size_t per_lap = 40;
            sc = harness::loop_scenario((opts.frames + per_lap - 1) / per_lap, per_lap, cam);
        } else if (opts.scenario == "wall") {
            sc = harness::wall_scenario(2.0, opts.frames, cam);
        } else if (opts.scenario == "static") {
            sc = harness::random_scenario(harness::ScenarioKind::Static, opts.seed, opts.frames, cam);
        } else if (opts.scenario == "dynamic") {
            sc = harness::random_scenario(harness::ScenarioKind::Dynamic, opts.seed, opts.frames, cam);
        } else {
            throw Error(ErrorCode::ConfigInvalid, "unknown scenario '" + opts.scenario + "'");
        }
        auto traj = sc.build();
        if (traj.frames.size() > opts.frames) {
            traj.frames.resize(opts.frames);
        }
        const auto manifest = write_trajectory(opts.out, traj.frames);
        spdlog::info("wrote {} frames to {}", traj.frames.size(), manifest.string());
        return static_cast<int>(kOk);
    });
}

int run_fuse(const FuseOptions& opts) {
    return guarded("fuse", [&] {
        const TensorMap weights = decode_tensors(read_file(opts.weights));
        const AttentionWeights w = attention_from_tensors(weights);
        auto tokens_of = [](const fs::path& p) {
            TensorMap m = decode_tensors(read_file(p));
            auto it = m.find("tokens");
            DGVT_CHECK(it != m.end(), ErrorCode::MalformedLog, p.string() + " has no 'tokens' tensor");
            return it->second;
        };
        const TokenMatrix queries = tokens_of(opts.queries);
        TokenMatrix keys = tokens_of(opts.keys);
        if (auto it = weights.find("align"); it != weights.end()) {
            keys = align(keys, it->second);
        }
        TensorMap out;
        out["fused"] = cross_attend(queries, keys, w);
        write_file(opts.out, encode_tensors(out));
        return static_cast<int>(kOk);
    });
}

}  // namespace dgvt::app
