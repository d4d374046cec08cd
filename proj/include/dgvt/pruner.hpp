// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <variant>
#include <vector>

#include "dgvt/token.hpp"
#include "dgvt/voxel_grid.hpp"

namespace dgvt {

struct LatestRule {};

/// Keeps the single token with the highest recency/proximity score.
struct PriorityRule {
    double w_recency = 0.5;
    double w_proximity = 0.5;
};

/// Keeps the top-k tokens by priority score with default weights.
struct MultiTokenRule {
    std::size_t k = 2;
};

using SelectionRule = std::variant<LatestRule, PriorityRule, MultiTokenRule>;

void validate_rule(const SelectionRule& rule);  // throws ConfigInvalid

struct CompletionWeights {
    double w_feat = 0.3;
    double w_range = 0.3;
    double w_spread = 0.2;
    double w_recency = 0.2;

    void validate() const;  // throws ConfigInvalid
};

struct PruneMask {
    std::uint64_t frame_id = 0;
    std::vector<std::uint8_t> bits;

    std::size_t kept() const;
    bool operator==(const PruneMask&) const = default;
};

/// Number of tokens a frame of `token_count` must keep for ratio `rho`.
std::size_t required_keep(double rho, std::size_t token_count);

/// Priority score of every entry of a cell: per-cell min-max normalized
/// recency and proximity. A degenerate window contributes 1.
std::vector<double> priority_scores(std::span<const TokenRecord* const> cell, const PriorityRule& weights);

/// Representative tokens of one voxel cell, returned as positions in `cell`
/// in ascending order. Ties prefer the higher frame id, then the lower token
/// index. Throws EmptyCell on an empty cell.
std::vector<std::size_t> select(std::span<const TokenRecord* const> cell, const SelectionRule& rule);

/// Initial masks: a bit is set iff its token was selected in its cell or is
/// anchorless. `tokens` must be the sequence the grid was built from.
std::map<std::uint64_t, PruneMask> apply_selection(const VoxelGrid& grid,
                                                   std::span<const TokenRecord> tokens,
                                                   const SelectionRule& rule,
                                                   bool parallel = true);

/// Normalization windows shared by every importance evaluation in a frame.
struct ImportanceContext {
    double max_feature_norm = 0.0;
    double min_range = 0.0;
    double max_range = 0.0;
    double min_frame = 0.0;
    double max_frame = 0.0;
    double max_spread = 0.0;  // largest min-distance-to-kept over candidates
};

double feature_norm(std::span<const float> feature);

/// Weighted sum of feature magnitude, nearness, spread from the kept set and
/// recency, each in [0, 1]. `spread` is the token's min distance to any kept
/// anchor, or a negative value when nothing is kept yet.
double importance(const TokenRecord& token, double spread, const ImportanceContext& ctx, const CompletionWeights& w);

/// Convenience form computing the spread term from an explicit kept set.
double importance(const TokenRecord& token,
                  std::span<const Vec3> kept_anchors,
                  const ImportanceContext& ctx,
                  const CompletionWeights& w);

/// Greedily re-adds the highest-importance discarded tokens of one frame until
/// ceil(rho * L) are kept. The spread term is recomputed after every addition.
/// Never clears a bit. Throws BadRatio unless rho is in (0, 1].
PruneMask complete(const PruneMask& mask,
                   std::span<const TokenRecord> frame_tokens,
                   double rho,
                   const CompletionWeights& w,
                   std::uint64_t min_frame,
                   std::uint64_t max_frame);

struct SmoothingOptions {
    std::size_t window = 3;
    /// Per-mask floor; a vote may not drop a mask below it. Empty = no floor.
    std::vector<std::size_t> min_keep;
    /// Per-mask bits that must stay set (anchorless tokens). Empty = none.
    std::vector<std::vector<std::uint8_t>> pinned;
};

/// Majority vote per token index over a centered temporal window, computed
/// from the unsmoothed masks. Windows truncate at the sequence edges and a
/// tied vote keeps the center frame's bit. Bits cleared by the vote are
/// restored in ascending index order where needed to respect min_keep.
std::vector<PruneMask> smooth(std::span<const PruneMask> masks, const SmoothingOptions& opts = {});

/// Number of bit changes between consecutive masks, summed over indices.
std::size_t flip_count(std::span<const PruneMask> masks);

struct PipelineConfig;

struct PruneResult {
    std::vector<TokenRecord> tokens;  // every token, frame-major
    std::vector<std::size_t> frame_offsets;
    VoxelGrid grid;
    std::vector<PruneMask> selected;   // after voxel selection
    std::vector<PruneMask> completed;  // after keep-ratio completion
    std::vector<PruneMask> final;      // after temporal smoothing

    std::span<const TokenRecord> frame_tokens(std::size_t frame) const;
    std::vector<TokenRecord> surviving_tokens() const;
};

/// Patch edge for a frame: `configured` when non-zero, otherwise the square
/// patch size that tiles the depth map into exactly token_count patches.
std::uint32_t resolve_patch_size(const FrameObservation& frame, std::uint32_t configured);

/// Builds the token records of one frame: backprojection, anchoring and the
/// feature rows. Voxel indices are not assigned.
std::vector<TokenRecord> make_frame_tokens(const FrameObservation& frame, const PipelineConfig& config);

/// anchor -> quantize -> group -> select -> complete -> smooth over a
/// time-ordered batch of frames.
PruneResult prune_pipeline(std::span<const FrameObservation> frames, const PipelineConfig& config, bool parallel = true);

}  // namespace dgvt
