// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "dgvt/geometry.hpp"
#include "dgvt/pruner.hpp"
#include "dgvt/voxel_grid.hpp"

namespace dgvt {

/// Every tunable of the pipeline. Defaults are the documented baseline.
struct PipelineConfig {
    ResolutionPolicy resolution;
    SelectionRule rule = LatestRule{};
    double rho = 0.1;  // 0 disables completion
    CompletionWeights weights;
    std::size_t smoothing_window = 3;
    std::size_t window_size = 8;
    AnchorMode anchor_mode = AnchorMode::Centroid;
    std::uint32_t patch_size = 0;  // 0: inferred per frame from L and the depth size
    double max_range = 0.0;  // <= 0: no depth cutoff
    bool consult_active_window = false;

    /// Re-checks every component invariant; throws ConfigInvalid.
    void validate() const;
};

std::string rule_name(const SelectionRule& rule);

nlohmann::ordered_json to_json(const PipelineConfig& config);

/// Keys missing from `j` keep their defaults; unknown keys are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);

PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace dgvt
