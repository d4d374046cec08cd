// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/memory.hpp"

#include <algorithm>
#include <mutex>
#include <string>

#include "dgvt/binary_io.hpp"
#include "dgvt/error.hpp"
#include "dgvt/pruner.hpp"

namespace dgvt {

namespace {

constexpr std::string_view kSessionMagic = "DGVS";
constexpr std::uint32_t kSessionVersion = 1;

void write_token(ByteWriter& w, const TokenRecord& t) {
    w.u64(t.frame_id);
    w.u32(t.token_index);
    w.u32(static_cast<std::uint32_t>(t.feature.size()));
    for (float f : t.feature) {
        w.f32(f);
    }
    w.u8(t.anchored() ? 1 : 0);
    if (t.anchored()) {
        w.f64(t.anchor->x());
        w.f64(t.anchor->y());
        w.f64(t.anchor->z());
        w.f64(t.range);
    }
    w.u8(t.voxel ? 1 : 0);
    if (t.voxel) {
        w.i64(t.voxel->ix);
        w.i64(t.voxel->iy);
        w.i64(t.voxel->iz);
        w.u8(t.voxel->band);
        w.f64(t.voxel->cell_size);
    }
}

TokenRecord read_token(ByteReader& r) {
    TokenRecord t;
    t.frame_id = r.u64();
    t.token_index = r.u32();
    const std::uint32_t dim = r.u32();
    r.expect(dim, 4);
    t.feature.resize(dim);
    for (auto& f : t.feature) {
        f = r.f32();
    }
    if (r.u8()) {
        const double x = r.f64();
        const double y = r.f64();
        const double z = r.f64();
        t.anchor = Vec3(x, y, z);
        t.range = r.f64();
    }
    if (r.u8()) {
        VoxelIndex v;
        v.ix = r.i64();
        v.iy = r.i64();
        v.iz = r.i64();
        v.band = r.u8();
        v.cell_size = r.f64();
        t.voxel = v;
    }
    return t;
}

}  // namespace

MemoryStore::MemoryStore(PipelineConfig config) : m_config(std::move(config)) {
    m_config.validate();
}

EvictionReport MemoryStore::advance(const FrameObservation& frame) {
    std::vector<TokenRecord> tokens = make_frame_tokens(frame, m_config);
    assign_voxels(tokens, m_config.resolution);
    std::unique_lock lock(m_mutex);
    return admit(frame.frame_id, std::move(tokens));
}

EvictionReport MemoryStore::admit(std::uint64_t frame_id, std::vector<TokenRecord> tokens) {
    DGVT_CHECK(!m_last_frame || frame_id == *m_last_frame + 1,
               ErrorCode::NonMonotonicFrame,
               "frame " + std::to_string(frame_id) + " does not follow frame " +
                   (m_last_frame ? std::to_string(*m_last_frame) : std::string("<none>")));
    m_last_frame = frame_id;
    m_observed_tokens += tokens.size();
    m_ledger.push_back({frame_id, static_cast<std::uint32_t>(tokens.size()), LedgerState::Active});
    m_active.push_back({frame_id, std::move(tokens)});
    if (m_active.size() <= m_config.window_size) {
        return {};
    }
    return evict_oldest();
}

EvictionReport MemoryStore::evict_oldest() {
    ActiveFrame frame = std::move(m_active.front());
    m_active.pop_front();
    for (auto& entry : m_ledger) {
        if (entry.frame_id == frame.frame_id) {
            entry.state = LedgerState::Evicted;
            break;
        }
    }

    EvictionReport report;
    report.evicted_frame = frame.frame_id;
    report.evicted_tokens = frame.tokens.size();
    auto& stored = m_pruned[frame.frame_id];

    std::size_t anchorless_budget = required_keep(m_config.rho, frame.tokens.size());
    std::map<VoxelIndex, std::vector<const TokenRecord*>> incoming;
    for (const TokenRecord& t : frame.tokens) {
        if (t.voxel) {
            incoming[*t.voxel].push_back(&t);
        } else if (anchorless_budget > 0) {
            stored.emplace(t.token_index, t);
            --anchorless_budget;
            ++report.retained_tokens;
        }
    }

    std::unordered_map<VoxelIndex, std::vector<const TokenRecord*>, VoxelIndexHash> active_by_voxel;
    if (m_config.consult_active_window) {
        for (const auto& af : m_active) {
            for (const TokenRecord& t : af.tokens) {
                if (t.voxel) {
                    active_by_voxel[*t.voxel].push_back(&t);
                }
            }
        }
    }

    for (const auto& [voxel, arrivals] : incoming) {
        std::vector<const TokenRecord*> members;
        auto occ = m_occupied.find(voxel);
        if (occ != m_occupied.end()) {
            for (const TokenKey& key : occ->second) {
                members.push_back(&m_pruned.at(key.frame_id).at(key.token_index));
            }
        }
        members.insert(members.end(), arrivals.begin(), arrivals.end());
        if (auto it = active_by_voxel.find(voxel); it != active_by_voxel.end()) {
            members.insert(members.end(), it->second.begin(), it->second.end());
        }
        std::sort(members.begin(), members.end(), [](const TokenRecord* a, const TokenRecord* b) {
            return a->key() < b->key();
        });

        std::vector<std::uint8_t> keep(members.size(), 0);
        for (std::size_t pos : select(members, m_config.rule)) {
            keep[pos] = 1;
        }
        std::vector<TokenKey> reps;
        std::vector<TokenKey> dropped;
        std::vector<const TokenRecord*> admitted;
        for (std::size_t i = 0; i < members.size(); ++i) {
            const TokenRecord* m = members[i];
            if (m->frame_id > frame.frame_id) {
                continue;  // active-window competitor; never stored here
            }
            const bool arriving = m->frame_id == frame.frame_id;
            if (keep[i]) {
                reps.push_back(m->key());
                if (arriving) {
                    admitted.push_back(m);
                }
            } else if (!arriving) {
                dropped.push_back(m->key());
            }
        }
        for (const TokenKey& key : dropped) {
            m_pruned.at(key.frame_id).erase(key.token_index);
            ++report.replaced_tokens;
        }
        for (const TokenRecord* t : admitted) {
            stored.emplace(t->token_index, *t);
            ++report.retained_tokens;
        }
        if (reps.empty()) {
            m_occupied.erase(voxel);
        } else {
            m_occupied[voxel] = std::move(reps);
        }
    }
    return report;
}

void MemoryStore::index_token(const TokenRecord& t) {
    if (!t.voxel) {
        return;
    }
    auto& reps = m_occupied[*t.voxel];
    reps.insert(std::upper_bound(reps.begin(), reps.end(), t.key()), t.key());
}

MemorySnapshot MemoryStore::snapshot() const {
    std::shared_lock lock(m_mutex);
    MemorySnapshot snap;
    for (const auto& [_, tokens] : m_pruned) {
        for (const auto& [__, t] : tokens) {
            snap.memory.push_back(t);
        }
    }
    for (const auto& frame : m_active) {
        snap.active.insert(snap.active.end(), frame.tokens.begin(), frame.tokens.end());
    }
    return snap;
}

BudgetReport MemoryStore::budget_report() const {
    std::shared_lock lock(m_mutex);
    BudgetReport r;
    r.active_frames = m_active.size();
    for (const auto& frame : m_active) {
        r.active_tokens += frame.tokens.size();
    }
    for (const auto& [_, tokens] : m_pruned) {
        r.memory_tokens += tokens.size();
    }
    r.occupied_voxels = m_occupied.size();
    r.observed_tokens = m_observed_tokens;
    if (m_observed_tokens > 0) {
        r.reduction_ratio = static_cast<double>(r.active_tokens + r.memory_tokens) / static_cast<double>(m_observed_tokens);
    }
    return r;
}

std::vector<std::uint64_t> MemoryStore::active_frame_ids() const {
    std::shared_lock lock(m_mutex);
    std::vector<std::uint64_t> ids;
    for (const auto& f : m_active) {
        ids.push_back(f.frame_id);
    }
    return ids;
}

std::map<std::uint64_t, std::vector<TokenRecord>> MemoryStore::pruned_store() const {
    std::shared_lock lock(m_mutex);
    std::map<std::uint64_t, std::vector<TokenRecord>> out;
    for (const auto& [frame, tokens] : m_pruned) {
        auto& dst = out[frame];
        for (const auto& [_, t] : tokens) {
            dst.push_back(t);
        }
    }
    return out;
}

std::vector<LedgerEntry> MemoryStore::ledger() const {
    std::shared_lock lock(m_mutex);
    return m_ledger;
}

std::vector<std::pair<VoxelIndex, std::size_t>> MemoryStore::occupied_voxels() const {
    std::shared_lock lock(m_mutex);
    std::vector<std::pair<VoxelIndex, std::size_t>> out;
    out.reserve(m_occupied.size());
    for (const auto& [voxel, reps] : m_occupied) {
        out.emplace_back(voxel, reps.size());
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::optional<std::uint64_t> MemoryStore::last_frame_id() const {
    std::shared_lock lock(m_mutex);
    return m_last_frame;
}

std::vector<std::uint8_t> MemoryStore::serialize() const {
    std::shared_lock lock(m_mutex);
    ByteWriter w;
    w.bytes(kSessionMagic);
    w.u32(kSessionVersion);
    w.string(to_json(m_config).dump());
    w.u8(m_last_frame ? 1 : 0);
    w.u64(m_last_frame.value_or(0));
    w.u64(m_observed_tokens);
    w.u32(static_cast<std::uint32_t>(m_ledger.size()));
    for (const auto& e : m_ledger) {
        w.u64(e.frame_id);
        w.u32(e.token_count);
        w.u8(static_cast<std::uint8_t>(e.state));
    }
    w.u32(static_cast<std::uint32_t>(m_active.size()));
    for (const auto& f : m_active) {
        w.u64(f.frame_id);
        w.u32(static_cast<std::uint32_t>(f.tokens.size()));
        for (const auto& t : f.tokens) {
            write_token(w, t);
        }
    }
    w.u32(static_cast<std::uint32_t>(m_pruned.size()));
    for (const auto& [frame, tokens] : m_pruned) {
        w.u64(frame);
        w.u32(static_cast<std::uint32_t>(tokens.size()));
        for (const auto& [_, t] : tokens) {
            write_token(w, t);
        }
    }
    return w.take();
}

std::unique_ptr<MemoryStore> MemoryStore::restore(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorCode::MalformedLog);
    DGVT_CHECK(r.bytes(4) == kSessionMagic, ErrorCode::MalformedLog, "not a session file");
    DGVT_CHECK(r.u32() == kSessionVersion, ErrorCode::MalformedLog, "unsupported session version");
    auto store = std::make_unique<MemoryStore>(parse_config(r.string()));
    const bool has_last = r.u8() != 0;
    const std::uint64_t last = r.u64();
    if (has_last) {
        store->m_last_frame = last;
    }
    store->m_observed_tokens = r.u64();
    const std::uint32_t ledger_size = r.u32();
    r.expect(ledger_size, 13);
    for (std::uint32_t i = 0; i < ledger_size; ++i) {
        LedgerEntry e;
        e.frame_id = r.u64();
        e.token_count = r.u32();
        e.state = r.u8() ? LedgerState::Evicted : LedgerState::Active;
        store->m_ledger.push_back(e);
    }
    const std::uint32_t active = r.u32();
    for (std::uint32_t i = 0; i < active; ++i) {
        ActiveFrame f;
        f.frame_id = r.u64();
        const std::uint32_t n = r.u32();
        for (std::uint32_t j = 0; j < n; ++j) {
            f.tokens.push_back(read_token(r));
        }
        store->m_active.push_back(std::move(f));
    }
    const std::uint32_t pruned = r.u32();
    for (std::uint32_t i = 0; i < pruned; ++i) {
        const std::uint64_t frame = r.u64();
        auto& dst = store->m_pruned[frame];
        const std::uint32_t n = r.u32();
        for (std::uint32_t j = 0; j < n; ++j) {
            TokenRecord t = read_token(r);
            store->index_token(t);
            dst.emplace(t.token_index, std::move(t));
        }
    }
    DGVT_CHECK(r.remaining() == 0, ErrorCode::MalformedLog, "trailing bytes after session payload");
    DGVT_CHECK(store->m_active.size() <= store->m_config.window_size,
               ErrorCode::InvariantViolation,
               "session holds more active frames than the window allows");
    return store;
}

}  // namespace dgvt
