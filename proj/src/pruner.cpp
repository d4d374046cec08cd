// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dgvt/config.hpp"
#include "dgvt/error.hpp"
#include "parallel.hpp"

namespace dgvt {

namespace {

struct ValidateRule {
    void operator()(const LatestRule&) const {}
    void operator()(const PriorityRule& r) const {
        DGVT_CHECK(std::isfinite(r.w_recency) && std::isfinite(r.w_proximity) && r.w_recency >= 0.0 &&
                       r.w_proximity >= 0.0 && (r.w_recency > 0.0 || r.w_proximity > 0.0),
                   ErrorCode::ConfigInvalid,
                   "priority weights must be non-negative and not both zero");
    }
    void operator()(const MultiTokenRule& r) const {
        DGVT_CHECK(r.k >= 1, ErrorCode::ConfigInvalid, "multi-token k must be at least 1");
    }
};

// Strict "a ranks above b": higher score, then higher frame, then lower index.
bool ranks_above(double score_a, const TokenRecord& a, double score_b, const TokenRecord& b) {
    if (score_a != score_b) {
        return score_a > score_b;
    }
    if (a.frame_id != b.frame_id) {
        return a.frame_id > b.frame_id;
    }
    return a.token_index < b.token_index;
}

double unit_or_one(double value, double lo, double hi) {
    return hi > lo ? (value - lo) / (hi - lo) : 1.0;
}

double importance_from(double norm,
                       double range,
                       std::uint64_t frame_id,
                       double spread,
                       const ImportanceContext& ctx,
                       const CompletionWeights& w) {
    const double fm = ctx.max_feature_norm > 0.0 ? norm / ctx.max_feature_norm : 1.0;
    const double ri = ctx.max_range > ctx.min_range ? 1.0 - (range - ctx.min_range) / (ctx.max_range - ctx.min_range) : 1.0;
    const double sd = spread < 0.0 ? 1.0 : (ctx.max_spread > 0.0 ? spread / ctx.max_spread : 1.0);
    const double tr = unit_or_one(static_cast<double>(frame_id), ctx.min_frame, ctx.max_frame);
    return w.w_feat * fm + w.w_range * ri + w.w_spread * sd + w.w_recency * tr;
}

}  // namespace

void validate_rule(const SelectionRule& rule) {
    std::visit(ValidateRule{}, rule);
}

void CompletionWeights::validate() const {
    const double parts[] = {w_feat, w_range, w_spread, w_recency};
    for (double p : parts) {
        DGVT_CHECK(std::isfinite(p) && p >= 0.0, ErrorCode::ConfigInvalid, "completion weights must be non-negative");
    }
    DGVT_CHECK(std::abs(w_feat + w_range + w_spread + w_recency - 1.0) <= 1e-9,
               ErrorCode::ConfigInvalid,
               "completion weights must sum to 1");
}

std::size_t PruneMask::kept() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

std::size_t required_keep(double rho, std::size_t token_count) {
    if (rho <= 0.0) {
        return 0;
    }
    return std::min(token_count, static_cast<std::size_t>(std::ceil(rho * static_cast<double>(token_count))));
}

std::vector<double> priority_scores(std::span<const TokenRecord* const> cell, const PriorityRule& weights) {
    double min_f = std::numeric_limits<double>::infinity();
    double max_f = -min_f;
    double min_r = min_f;
    double max_r = -min_f;
    for (const TokenRecord* t : cell) {
        const auto f = static_cast<double>(t->frame_id);
        min_f = std::min(min_f, f);
        max_f = std::max(max_f, f);
        min_r = std::min(min_r, t->range);
        max_r = std::max(max_r, t->range);
    }
    std::vector<double> scores;
    scores.reserve(cell.size());
    for (const TokenRecord* t : cell) {
        const double recency = unit_or_one(static_cast<double>(t->frame_id), min_f, max_f);
        const double proximity = max_r > min_r ? 1.0 - (t->range - min_r) / (max_r - min_r) : 1.0;
        scores.push_back(weights.w_recency * recency + weights.w_proximity * proximity);
    }
    return scores;
}

std::vector<std::size_t> select(std::span<const TokenRecord* const> cell, const SelectionRule& rule) {
    DGVT_CHECK(!cell.empty(), ErrorCode::EmptyCell, "cannot select from an empty cell");
    std::vector<std::size_t> out;
    if (std::holds_alternative<LatestRule>(rule)) {
        std::uint64_t newest = 0;
        for (const TokenRecord* t : cell) {
            newest = std::max(newest, t->frame_id);
        }
        for (std::size_t i = 0; i < cell.size(); ++i) {
            if (cell[i]->frame_id == newest) {
                out.push_back(i);
            }
        }
        return out;
    }

    const PriorityRule weights = std::holds_alternative<PriorityRule>(rule) ? std::get<PriorityRule>(rule) : PriorityRule{};
    const std::size_t k = std::holds_alternative<MultiTokenRule>(rule) ? std::get<MultiTokenRule>(rule).k : 1;
    const std::vector<double> scores = priority_scores(cell, weights);
    std::vector<std::size_t> order(cell.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, cell.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) { return ranks_above(scores[a], *cell[a], scores[b], *cell[b]); });
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(out.begin(), out.end());
    return out;
}

std::map<std::uint64_t, PruneMask> apply_selection(const VoxelGrid& grid,
                                                   std::span<const TokenRecord> tokens,
                                                   const SelectionRule& rule,
                                                   bool parallel) {
    std::map<std::uint64_t, std::size_t> counts;
    for (const auto& t : tokens) {
        counts[t.frame_id] = std::max<std::size_t>(counts[t.frame_id], std::size_t{t.token_index} + 1);
    }
    std::map<std::uint64_t, PruneMask> masks;
    for (const auto& [frame, count] : counts) {
        masks[frame] = PruneMask{frame, std::vector<std::uint8_t>(count, 0)};
    }
    for (const auto& t : tokens) {
        if (!t.anchored()) {
            masks[t.frame_id].bits[t.token_index] = 1;
        }
    }

    std::vector<const VoxelGrid::Cell*> cells;
    cells.reserve(grid.size());
    for (const auto& [_, cell] : grid.cells()) {
        cells.push_back(&cell);
    }
    // Each token lives in exactly one cell, so the writes below never alias.
    detail::parallel_for(static_cast<std::int64_t>(cells.size()), parallel, [&](std::int64_t c) {
        const VoxelGrid::Cell& cell = *cells[static_cast<std::size_t>(c)];
        std::vector<const TokenRecord*> members;
        members.reserve(cell.size());
        for (std::size_t idx : cell) {
            members.push_back(&tokens[idx]);
        }
        for (std::size_t pos : select(members, rule)) {
            const TokenRecord& t = *members[pos];
            masks.find(t.frame_id)->second.bits[t.token_index] = 1;
        }
    });
    return masks;
}

double feature_norm(std::span<const float> feature) {
    double sum = 0.0;
    for (float f : feature) {
        sum += static_cast<double>(f) * static_cast<double>(f);
    }
    return std::sqrt(sum);
}

double importance(const TokenRecord& token, double spread, const ImportanceContext& ctx, const CompletionWeights& w) {
    return importance_from(feature_norm(token.feature), token.range, token.frame_id, spread, ctx, w);
}

double importance(const TokenRecord& token,
                  std::span<const Vec3> kept_anchors,
                  const ImportanceContext& ctx,
                  const CompletionWeights& w) {
    double spread = -1.0;
    if (token.anchored() && !kept_anchors.empty()) {
        spread = std::numeric_limits<double>::infinity();
        for (const Vec3& a : kept_anchors) {
            spread = std::min(spread, (*token.anchor - a).norm());
        }
    }
    return importance(token, spread, ctx, w);
}

PruneMask complete(const PruneMask& mask,
                   std::span<const TokenRecord> frame_tokens,
                   double rho,
                   const CompletionWeights& w,
                   std::uint64_t min_frame,
                   std::uint64_t max_frame) {
    DGVT_CHECK(rho > 0.0 && rho <= 1.0, ErrorCode::BadRatio, "keep ratio must lie in (0, 1], got " + std::to_string(rho));
    DGVT_CHECK(mask.bits.size() == frame_tokens.size(),
               ErrorCode::LengthMismatch,
               "mask has " + std::to_string(mask.bits.size()) + " bits for " + std::to_string(frame_tokens.size()) +
                   " tokens");
    PruneMask out = mask;
    const std::size_t need = required_keep(rho, frame_tokens.size());
    std::size_t kept = out.kept();
    if (kept >= need) {
        return out;
    }

    ImportanceContext ctx;
    ctx.min_frame = static_cast<double>(min_frame);
    ctx.max_frame = static_cast<double>(max_frame);
    ctx.min_range = std::numeric_limits<double>::infinity();
    ctx.max_range = -ctx.min_range;
    std::vector<double> norms(frame_tokens.size());
    for (std::size_t i = 0; i < frame_tokens.size(); ++i) {
        norms[i] = feature_norm(frame_tokens[i].feature);
        ctx.max_feature_norm = std::max(ctx.max_feature_norm, norms[i]);
        if (frame_tokens[i].anchored()) {
            ctx.min_range = std::min(ctx.min_range, frame_tokens[i].range);
            ctx.max_range = std::max(ctx.max_range, frame_tokens[i].range);
        }
    }

    std::vector<std::size_t> candidates;
    std::vector<double> min_dist(frame_tokens.size(), std::numeric_limits<double>::infinity());
    bool has_kept = false;
    for (std::size_t i = 0; i < frame_tokens.size(); ++i) {
        if (!out.bits[i] && frame_tokens[i].anchored()) {
            candidates.push_back(i);
        }
    }
    auto absorb = [&](const Vec3& anchor) {
        for (std::size_t c : candidates) {
            min_dist[c] = std::min(min_dist[c], (*frame_tokens[c].anchor - anchor).norm());
        }
        has_kept = true;
    };
    for (std::size_t i = 0; i < frame_tokens.size(); ++i) {
        if (out.bits[i] && frame_tokens[i].anchored()) {
            absorb(*frame_tokens[i].anchor);
        }
    }

    while (kept < need && !candidates.empty()) {
        ctx.max_spread = 0.0;
        if (has_kept) {
            for (std::size_t c : candidates) {
                ctx.max_spread = std::max(ctx.max_spread, min_dist[c]);
            }
        }
        std::size_t best_pos = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < candidates.size(); ++p) {
            const std::size_t c = candidates[p];
            const TokenRecord& t = frame_tokens[c];
            const double score = importance_from(norms[c], t.range, t.frame_id, has_kept ? min_dist[c] : -1.0, ctx, w);
            if (p == 0 || ranks_above(score, t, best_score, frame_tokens[candidates[best_pos]])) {
                best_pos = p;
                best_score = score;
            }
        }
        const std::size_t chosen = candidates[best_pos];
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best_pos));
        out.bits[chosen] = 1;
        ++kept;
        absorb(*frame_tokens[chosen].anchor);
    }
    return out;
}

std::vector<PruneMask> smooth(std::span<const PruneMask> masks, const SmoothingOptions& opts) {
    DGVT_CHECK(opts.window % 2 == 1, ErrorCode::ConfigInvalid, "smoothing window must be odd");
    if (masks.empty()) {
        return {};
    }
    const std::size_t len = masks.front().bits.size();
    for (const auto& m : masks) {
        DGVT_CHECK(m.bits.size() == len, ErrorCode::LengthMismatch, "masks differ in bit length");
    }
    DGVT_CHECK(opts.min_keep.empty() || opts.min_keep.size() == masks.size(),
               ErrorCode::LengthMismatch,
               "min_keep must give one floor per mask");
    DGVT_CHECK(opts.pinned.empty() || opts.pinned.size() == masks.size(),
               ErrorCode::LengthMismatch,
               "pinned must give one bit vector per mask");

    const auto frames = static_cast<std::int64_t>(masks.size());
    const auto half = static_cast<std::int64_t>(opts.window / 2);
    std::vector<PruneMask> out(masks.begin(), masks.end());
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < frames; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - half);
        const std::int64_t hi = std::min<std::int64_t>(frames - 1, t + half);
        const auto votes = static_cast<std::size_t>(hi - lo + 1);
        const PruneMask& center = masks[static_cast<std::size_t>(t)];
        PruneMask& dst = out[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < len; ++i) {
            std::size_t ones = 0;
            for (std::int64_t j = lo; j <= hi; ++j) {
                ones += masks[static_cast<std::size_t>(j)].bits[i];
            }
            if (2 * ones > votes) {
                dst.bits[i] = 1;
            } else if (2 * ones < votes) {
                dst.bits[i] = 0;
            } else {
                dst.bits[i] = center.bits[i];
            }
            if (!opts.pinned.empty() && opts.pinned[static_cast<std::size_t>(t)][i]) {
                dst.bits[i] = 1;
            }
        }
        if (!opts.min_keep.empty()) {
            std::size_t kept = dst.kept();
            for (std::size_t i = 0; i < len && kept < opts.min_keep[static_cast<std::size_t>(t)]; ++i) {
                if (center.bits[i] && !dst.bits[i]) {
                    dst.bits[i] = 1;
                    ++kept;
                }
            }
        }
    }
    return out;
}

std::size_t flip_count(std::span<const PruneMask> masks) {
    std::size_t flips = 0;
    for (std::size_t t = 1; t < masks.size(); ++t) {
        const auto& a = masks[t - 1].bits;
        const auto& b = masks[t].bits;
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            flips += a[i] != b[i];
        }
    }
    return flips;
}

std::span<const TokenRecord> PruneResult::frame_tokens(std::size_t frame) const {
    const std::size_t begin = frame_offsets[frame];
    const std::size_t end = frame + 1 < frame_offsets.size() ? frame_offsets[frame + 1] : tokens.size();
    return std::span<const TokenRecord>(tokens).subspan(begin, end - begin);
}

std::vector<TokenRecord> PruneResult::surviving_tokens() const {
    std::vector<TokenRecord> out;
    for (std::size_t f = 0; f < final.size(); ++f) {
        for (const TokenRecord& t : frame_tokens(f)) {
            if (final[f].bits[t.token_index]) {
                out.push_back(t);
            }
        }
    }
    return out;
}

std::uint32_t resolve_patch_size(const FrameObservation& frame, std::uint32_t configured) {
    if (configured > 0) {
        return configured;
    }
    const std::uint32_t w = frame.depth.width;
    const std::uint32_t h = frame.depth.height;
    for (std::uint32_t p = 1; p <= std::min(w, h); ++p) {
        if (w % p == 0 && h % p == 0 && static_cast<std::size_t>(w / p) * (h / p) == frame.token_count) {
            return p;
        }
    }
    throw Error(ErrorCode::ShapeMismatch,
                "no square patch size tiles " + std::to_string(w) + "x" + std::to_string(h) + " into " +
                    std::to_string(frame.token_count) + " tokens");
}

std::vector<TokenRecord> make_frame_tokens(const FrameObservation& frame, const PipelineConfig& config) {
    const TokenGrid grid{resolve_patch_size(frame, config.patch_size)};
    const std::size_t expected = grid.token_count(frame.depth.width, frame.depth.height);
    DGVT_CHECK(frame.token_count == expected,
               ErrorCode::ShapeMismatch,
               "frame " + std::to_string(frame.frame_id) + " has " + std::to_string(frame.token_count) +
                   " tokens but its patch grid has " + std::to_string(expected));
    DGVT_CHECK(frame.features.size() == static_cast<std::size_t>(frame.token_count) * frame.feature_dim,
               ErrorCode::ShapeMismatch,
               "feature payload does not match L x C");

    const PointMap pm = backproject(frame.depth, frame.intrinsics, BackprojectOptions{config.max_range});
    const std::vector<TokenAnchor> anchors = anchor_tokens(pm, frame.pose, grid, config.anchor_mode);
    std::vector<TokenRecord> tokens(frame.token_count);
    for (std::uint32_t i = 0; i < frame.token_count; ++i) {
        TokenRecord& t = tokens[i];
        t.frame_id = frame.frame_id;
        t.token_index = i;
        const auto row = frame.features.begin() + static_cast<std::ptrdiff_t>(i) * frame.feature_dim;
        t.feature.assign(row, row + frame.feature_dim);
        t.anchor = anchors[i].anchor;
        t.range = anchors[i].range;
    }
    return tokens;
}

PruneResult prune_pipeline(std::span<const FrameObservation> frames, const PipelineConfig& config, bool parallel) {
    config.validate();
    PruneResult result;
    if (frames.empty()) {
        return result;
    }
    for (std::size_t f = 1; f < frames.size(); ++f) {
        DGVT_CHECK(frames[f].frame_id > frames[f - 1].frame_id,
                   ErrorCode::NonMonotonicFrame,
                   "frame ids must be strictly increasing");
    }
    for (const auto& frame : frames) {
        DGVT_CHECK(frame.token_count == frames.front().token_count && frame.feature_dim == frames.front().feature_dim,
                   ErrorCode::LengthMismatch,
                   "all frames must share the token grid and feature dimension");
    }

    const auto n = static_cast<std::int64_t>(frames.size());
    std::vector<std::vector<TokenRecord>> per_frame(frames.size());
    detail::parallel_for(n, parallel, [&](std::int64_t f) {
        auto& tokens = per_frame[static_cast<std::size_t>(f)];
        tokens = make_frame_tokens(frames[static_cast<std::size_t>(f)], config);
        assign_voxels(tokens, config.resolution);
    });
    for (auto& tokens : per_frame) {
        result.frame_offsets.push_back(result.tokens.size());
        std::move(tokens.begin(), tokens.end(), std::back_inserter(result.tokens));
    }

    result.grid = group(result.tokens);
    auto selected = apply_selection(result.grid, result.tokens, config.rule, parallel);
    for (const auto& frame : frames) {
        result.selected.push_back(std::move(selected[frame.frame_id]));
    }

    const std::uint64_t min_frame = frames.front().frame_id;
    const std::uint64_t max_frame = frames.back().frame_id;
    result.completed.resize(frames.size());
    detail::parallel_for(n, parallel, [&](std::int64_t f) {
        const auto i = static_cast<std::size_t>(f);
        result.completed[i] = config.rho > 0.0
                                  ? complete(result.selected[i], result.frame_tokens(i), config.rho, config.weights,
                                             min_frame, max_frame)
                                  : result.selected[i];
    });

    SmoothingOptions opts;
    opts.window = config.smoothing_window;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        opts.min_keep.push_back(required_keep(config.rho, frames[f].token_count));
        std::vector<std::uint8_t> pinned(frames[f].token_count, 0);
        for (const TokenRecord& t : result.frame_tokens(f)) {
            pinned[t.token_index] = !t.anchored();
        }
        opts.pinned.push_back(std::move(pinned));
    }
    result.final = smooth(result.completed, opts);
    return result;
}

}  // namespace dgvt
