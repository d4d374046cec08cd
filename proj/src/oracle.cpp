// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

// Reference pruning by direct enumeration. Deliberately written without any
// of the production pruner/voxel-grid helpers: every step is recomputed from
// first principles so it can serve as an oracle for the pipeline.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "dgvt/error.hpp"
#include "dgvt/harness.hpp"

namespace dgvt::harness {

namespace {

struct OracleToken {
    std::uint64_t frame = 0;
    std::uint32_t index = 0;
    bool anchored = false;
    Vec3 anchor = Vec3::Zero();
    double range = 0.0;
    double norm = 0.0;
    std::int64_t cell[3] = {0, 0, 0};
    int band = 0;
    double size = 0.0;
};

bool same_cell(const OracleToken& a, const OracleToken& b) {
    return a.cell[0] == b.cell[0] && a.cell[1] == b.cell[1] && a.cell[2] == b.cell[2] && a.band == b.band &&
           std::bit_cast<std::uint64_t>(a.size) == std::bit_cast<std::uint64_t>(b.size);
}

double frame_median(const std::vector<OracleToken>& tokens) {
    std::vector<double> r;
    for (const auto& t : tokens) {
        if (t.anchored) {
            r.push_back(t.range);
        }
    }
    if (r.empty()) {
        return 0.0;
    }
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    return n % 2 == 1 ? r[n / 2] : (r[n / 2 - 1] + r[n / 2]) / 2.0;
}

// Larger score wins; ties go to the higher frame, then the lower index.
bool beats(double sa, const OracleToken& a, double sb, const OracleToken& b) {
    if (sa > sb) return true;
    if (sa < sb) return false;
    if (a.frame > b.frame) return true;
    if (a.frame < b.frame) return false;
    return a.index < b.index;
}

std::vector<std::size_t> choose(const std::vector<const OracleToken*>& cell, const SelectionRule& rule) {
    std::vector<std::size_t> chosen;
    if (std::holds_alternative<LatestRule>(rule)) {
        std::uint64_t newest = 0;
        for (const auto* t : cell) newest = std::max(newest, t->frame);
        for (std::size_t i = 0; i < cell.size(); ++i) {
            if (cell[i]->frame == newest) chosen.push_back(i);
        }
        return chosen;
    }
    double wr = 0.5;
    double wp = 0.5;
    std::size_t k = 1;
    if (const auto* p = std::get_if<PriorityRule>(&rule)) {
        wr = p->w_recency;
        wp = p->w_proximity;
    } else {
        k = std::get<MultiTokenRule>(rule).k;
    }
    double min_f = std::numeric_limits<double>::infinity(), max_f = -min_f;
    double min_r = min_f, max_r = -min_f;
    for (const auto* t : cell) {
        min_f = std::min(min_f, static_cast<double>(t->frame));
        max_f = std::max(max_f, static_cast<double>(t->frame));
        min_r = std::min(min_r, t->range);
        max_r = std::max(max_r, t->range);
    }
    std::vector<double> score(cell.size());
    for (std::size_t i = 0; i < cell.size(); ++i) {
        const double rec = max_f > min_f ? (static_cast<double>(cell[i]->frame) - min_f) / (max_f - min_f) : 1.0;
        const double prox = max_r > min_r ? 1.0 - (cell[i]->range - min_r) / (max_r - min_r) : 1.0;
        score[i] = wr * rec + wp * prox;
    }
    std::vector<bool> taken(cell.size(), false);
    for (std::size_t round = 0; round < k && round < cell.size(); ++round) {
        std::size_t best = cell.size();
        for (std::size_t i = 0; i < cell.size(); ++i) {
            if (taken[i]) continue;
            if (best == cell.size() || beats(score[i], *cell[i], score[best], *cell[best])) best = i;
        }
        taken[best] = true;
    }
    for (std::size_t i = 0; i < cell.size(); ++i) {
        if (taken[i]) chosen.push_back(i);
    }
    return chosen;
}

}  // namespace

OracleResult oracle_prune(std::span<const FrameObservation> frames, const PipelineConfig& config) {
    config.validate();
    OracleResult result;
    if (frames.empty()) {
        return result;
    }
    DGVT_CHECK(frames.size() <= kOracleMaxFrames, ErrorCode::ScaleExceeded, "oracle is limited to 50 frames");
    std::size_t total = 0;
    for (const auto& f : frames) total += f.token_count;
    DGVT_CHECK(total <= kOracleMaxTokens, ErrorCode::ScaleExceeded, "oracle is limited to 10^4 tokens");

    const auto& pol = config.resolution;
    std::vector<std::vector<OracleToken>> per_frame;
    for (const auto& f : frames) {
        const TokenGrid grid{resolve_patch_size(f, config.patch_size)};
        const PointMap pm = serial::backproject(f.depth, f.intrinsics, BackprojectOptions{config.max_range});
        const auto anchors = serial::anchor_tokens(pm, f.pose, grid, config.anchor_mode);
        DGVT_CHECK(anchors.size() == f.token_count, ErrorCode::ShapeMismatch, "token grid does not match the frame");
        std::vector<OracleToken> tokens(f.token_count);
        for (std::uint32_t i = 0; i < f.token_count; ++i) {
            OracleToken& t = tokens[i];
            t.frame = f.frame_id;
            t.index = i;
            t.anchored = anchors[i].anchor.has_value();
            if (t.anchored) {
                t.anchor = *anchors[i].anchor;
                t.range = anchors[i].range;
            }
            double sq = 0.0;
            for (std::uint32_t c = 0; c < f.feature_dim; ++c) {
                const double x = f.features[static_cast<std::size_t>(i) * f.feature_dim + c];
                sq += x * x;
            }
            t.norm = std::sqrt(sq);
        }
        const double median = frame_median(tokens);
        double factor = 1.0;
        if (pol.frame_scale_mode != FrameScaleMode::Off && median > 0.0) {
            factor = median / pol.reference_depth;
            if (pol.frame_scale_mode == FrameScaleMode::MedianOctave) {
                factor = std::exp2(std::round(std::log2(factor)));
            }
        }
        for (auto& t : tokens) {
            if (!t.anchored) continue;
            t.band = t.range < pol.band_edges[0] ? 0 : (t.range < pol.band_edges[1] ? 1 : 2);
            t.size = pol.base_size * factor * pol.band_scales[static_cast<std::size_t>(t.band)];
            for (int a = 0; a < 3; ++a) {
                t.cell[a] = static_cast<std::int64_t>(std::floor(t.anchor[a] / t.size));
            }
        }
        per_frame.push_back(std::move(tokens));
    }

    // Quadratic grouping: each token joins the group of the first earlier
    // token sharing its cell.
    std::vector<const OracleToken*> flat;
    for (const auto& tokens : per_frame) {
        for (const auto& t : tokens) flat.push_back(&t);
    }
    std::vector<std::size_t> group_of(flat.size(), 0);
    std::vector<std::vector<const OracleToken*>> groups;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (!flat[i]->anchored) continue;
        std::size_t g = groups.size();
        for (std::size_t j = 0; j < i; ++j) {
            if (flat[j]->anchored && same_cell(*flat[i], *flat[j])) {
                g = group_of[j];
                break;
            }
        }
        if (g == groups.size()) groups.emplace_back();
        group_of[i] = g;
        groups[g].push_back(flat[i]);
    }

    std::map<std::uint64_t, std::vector<std::uint8_t>> bits;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        auto& b = bits[frames[f].frame_id];
        b.assign(frames[f].token_count, 0);
        for (const auto& t : per_frame[f]) {
            if (!t.anchored) b[t.index] = 1;
        }
    }
    for (const auto& g : groups) {
        for (std::size_t pos : choose(g, config.rule)) {
            bits[g[pos]->frame][g[pos]->index] = 1;
        }
    }
    for (const auto& [frame, b] : bits) result.selected[frame] = PruneMask{frame, b};

    // Keep-ratio completion with every score recomputed from scratch.
    const double min_frame = static_cast<double>(frames.front().frame_id);
    const double max_frame = static_cast<double>(frames.back().frame_id);
    const auto& w = config.weights;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const auto& tokens = per_frame[f];
        auto& b = bits[frames[f].frame_id];
        const std::size_t L = tokens.size();
        std::size_t need = 0;
        if (config.rho > 0.0) {
            need = std::min(L, static_cast<std::size_t>(std::ceil(config.rho * static_cast<double>(L))));
        }
        double max_norm = 0.0, min_r = std::numeric_limits<double>::infinity(), max_r = -min_r;
        for (const auto& t : tokens) {
            max_norm = std::max(max_norm, t.norm);
            if (t.anchored) {
                min_r = std::min(min_r, t.range);
                max_r = std::max(max_r, t.range);
            }
        }
        auto kept = [&] { return static_cast<std::size_t>(std::count(b.begin(), b.end(), 1)); };
        while (config.rho > 0.0 && kept() < need) {
            bool any_kept_anchor = false;
            for (const auto& t : tokens) any_kept_anchor = any_kept_anchor || (b[t.index] && t.anchored);
            std::vector<double> spread(L, -1.0);
            double max_spread = 0.0;
            for (const auto& t : tokens) {
                if (b[t.index] || !t.anchored || !any_kept_anchor) continue;
                double d = std::numeric_limits<double>::infinity();
                for (const auto& k : tokens) {
                    if (b[k.index] && k.anchored) d = std::min(d, (t.anchor - k.anchor).norm());
                }
                spread[t.index] = d;
                max_spread = std::max(max_spread, d);
            }
            const OracleToken* best = nullptr;
            double best_score = 0.0;
            for (const auto& t : tokens) {
                if (b[t.index] || !t.anchored) continue;
                const double fm = max_norm > 0.0 ? t.norm / max_norm : 1.0;
                const double ri = max_r > min_r ? 1.0 - (t.range - min_r) / (max_r - min_r) : 1.0;
                const double sd = spread[t.index] < 0.0 ? 1.0 : (max_spread > 0.0 ? spread[t.index] / max_spread : 1.0);
                const double tr = max_frame > min_frame ? (static_cast<double>(t.frame) - min_frame) / (max_frame - min_frame) : 1.0;
                const double score = w.w_feat * fm + w.w_range * ri + w.w_spread * sd + w.w_recency * tr;
                if (!best || beats(score, t, best_score, *best)) {
                    best = &t;
                    best_score = score;
                }
            }
            if (!best) break;
            b[best->index] = 1;
        }
        result.completed[frames[f].frame_id] = PruneMask{frames[f].frame_id, b};
    }

    // Majority vote per index over the unsmoothed masks.
    const auto T = static_cast<std::int64_t>(frames.size());
    const auto half = static_cast<std::int64_t>(config.smoothing_window / 2);
    for (std::int64_t t = 0; t < T; ++t) {
        const auto& center = result.completed.at(frames[static_cast<std::size_t>(t)].frame_id).bits;
        std::vector<std::uint8_t> out(center.size(), 0);
        for (std::size_t i = 0; i < center.size(); ++i) {
            int ones = 0, votes = 0;
            for (std::int64_t s = t - half; s <= t + half; ++s) {
                if (s < 0 || s >= T) continue;
                ones += result.completed.at(frames[static_cast<std::size_t>(s)].frame_id).bits[i];
                ++votes;
            }
            if (ones * 2 > votes) out[i] = 1;
            else if (ones * 2 < votes) out[i] = 0;
            else out[i] = center[i];
            if (!per_frame[static_cast<std::size_t>(t)][i].anchored) out[i] = 1;
        }
        const std::size_t L = center.size();
        const std::size_t need =
            config.rho > 0.0 ? std::min(L, static_cast<std::size_t>(std::ceil(config.rho * static_cast<double>(L)))) : 0;
        std::size_t count = static_cast<std::size_t>(std::count(out.begin(), out.end(), 1));
        for (std::size_t i = 0; i < L && count < need; ++i) {
            if (center[i] == 1 && out[i] == 0) {
                out[i] = 1;
                ++count;
            }
        }
        const auto id = frames[static_cast<std::size_t>(t)].frame_id;
        result.final[id] = PruneMask{id, out};
    }
    return result;
}

}  // namespace dgvt::harness
