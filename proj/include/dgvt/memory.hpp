// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgvt/config.hpp"
#include "dgvt/token.hpp"

namespace dgvt {

enum class LedgerState : std::uint8_t {
    Active = 0,
    Evicted = 1,
};

/// Append/evict bookkeeping for one observed frame; stands in for the
/// per-frame key/value cache slot.
struct LedgerEntry {
    std::uint64_t frame_id = 0;
    std::uint32_t token_count = 0;
    LedgerState state = LedgerState::Active;

    bool operator==(const LedgerEntry&) const = default;
};

struct EvictionReport {
    std::optional<std::uint64_t> evicted_frame;
    std::size_t evicted_tokens = 0;
    std::size_t retained_tokens = 0;  // survivors of the evicted frame
    std::size_t replaced_tokens = 0;  // older memory tokens displaced by them
};

/// Placeholder for the instruction tokens that lead the decoder context.
struct InstructionSlot {};

struct MemorySnapshot {
    InstructionSlot instruction;
    std::vector<TokenRecord> memory;  // pruned history, by (frame, index)
    std::vector<TokenRecord> active;  // sliding window, by (frame, index)
};

struct BudgetReport {
    std::size_t active_frames = 0;
    std::size_t active_tokens = 0;
    std::size_t memory_tokens = 0;
    std::size_t occupied_voxels = 0;
    std::size_t observed_tokens = 0;
    double reduction_ratio = 1.0;  // (active + memory) / observed
};

/// Sliding-window token memory. The newest `window_size` frames stay whole;
/// each frame leaving the window is folded into a voxel-deduplicated store of
/// historical tokens.
///
/// Folding an evicted frame runs the selection rule per voxel over the
/// tokens already stored there plus the evicted frame's tokens, so a
/// revisited voxel keeps its representatives instead of accumulating them.
/// Anchorless tokens are kept up to ceil(rho * L) per frame.
///
/// advance() must be externally serialized. snapshot() and budget_report()
/// may be called concurrently with each other and never observe a partially
/// applied eviction.
class MemoryStore {
public:
    explicit MemoryStore(PipelineConfig config);

    MemoryStore(const MemoryStore&) = delete;
    MemoryStore& operator=(const MemoryStore&) = delete;

    /// Throws NonMonotonicFrame unless `frame` directly follows the last one.
    EvictionReport advance(const FrameObservation& frame);

    MemorySnapshot snapshot() const;
    BudgetReport budget_report() const;

    std::vector<std::uint64_t> active_frame_ids() const;
    std::map<std::uint64_t, std::vector<TokenRecord>> pruned_store() const;
    std::vector<LedgerEntry> ledger() const;
    /// Occupied memory voxels in ascending key order with their token counts.
    std::vector<std::pair<VoxelIndex, std::size_t>> occupied_voxels() const;
    std::optional<std::uint64_t> last_frame_id() const;
    const PipelineConfig& config() const {
        return m_config;
    }

    std::vector<std::uint8_t> serialize() const;
    static std::unique_ptr<MemoryStore> restore(std::span<const std::uint8_t> bytes);

private:
    struct ActiveFrame {
        std::uint64_t frame_id = 0;
        std::vector<TokenRecord> tokens;
    };

    EvictionReport admit(std::uint64_t frame_id, std::vector<TokenRecord> tokens);
    EvictionReport evict_oldest();
    void index_token(const TokenRecord& t);

    mutable std::shared_mutex m_mutex;
    PipelineConfig m_config;
    std::deque<ActiveFrame> m_active;
    std::map<std::uint64_t, std::map<std::uint32_t, TokenRecord>> m_pruned;
    std::unordered_map<VoxelIndex, std::vector<TokenKey>, VoxelIndexHash> m_occupied;
    std::vector<LedgerEntry> m_ledger;
    std::uint64_t m_observed_tokens = 0;
    std::optional<std::uint64_t> m_last_frame;
};

}  // namespace dgvt
