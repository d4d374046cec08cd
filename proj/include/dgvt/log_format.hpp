// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dgvt/fusion.hpp"
#include "dgvt/geometry.hpp"

namespace dgvt {

/// Per-frame binary record, little-endian:
///
///   "DGVT" | u32 version=1 | u64 frame_id | u32 width | u32 height
///   | f64 fx fy cx cy | f64 rotation[9] (row-major) | f64 translation[3]
///   | f32 depth[height*width] (row-major) | u32 L | u32 C | f32 features[L*C]
///
/// Depth is stored single precision; decoding widens it back to double.
std::vector<std::uint8_t> encode_frame(const FrameObservation& frame);
FrameObservation decode_frame(std::span<const std::uint8_t> bytes);

/// Trajectory manifest: JSON object {"format": "dgvt-trajectory",
/// "version": 1, "frames": [relative record paths in time order]}.
std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest);

/// Loads every frame of a manifest; frame ids must be strictly increasing.
std::vector<FrameObservation> load_trajectory(const std::filesystem::path& manifest);

/// Writes one record per frame plus `manifest.json` into `dir`; returns the
/// manifest path.
std::filesystem::path write_trajectory(const std::filesystem::path& dir, std::span<const FrameObservation> frames);

/// Named-tensor container, little-endian:
///
///   "DGVW" | u32 version=1 | u32 count | count x (u32 name_len | name
///   | u32 rows | u32 cols | f64 values[rows*cols] row-major)
using TensorMap = std::map<std::string, TokenMatrix>;

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors);
TensorMap decode_tensors(std::span<const std::uint8_t> bytes);

/// Attention weights use tensors "query", "key", "value", "output" and a
/// 1x1 "num_heads"; an optional "align" tensor holds the alignment map.
TensorMap attention_to_tensors(const AttentionWeights& w);
AttentionWeights attention_from_tensors(const TensorMap& tensors);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dgvt
