// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dgvt/error.hpp"

namespace dgvt {

namespace {

const char* scale_mode_name(FrameScaleMode m) {
    switch (m) {
    case FrameScaleMode::Off:
        return "off";
    case FrameScaleMode::Median:
        return "median";
    case FrameScaleMode::MedianOctave:
        return "median_octave";
    }
    return "off";
}

FrameScaleMode parse_scale_mode(const std::string& s) {
    if (s == "off") return FrameScaleMode::Off;
    if (s == "median") return FrameScaleMode::Median;
    if (s == "median_octave") return FrameScaleMode::MedianOctave;
    throw Error(ErrorCode::ConfigInvalid, "unknown frame_scale_mode '" + s + "'");
}

AnchorMode parse_anchor_mode(const std::string& s) {
    if (s == "centroid") return AnchorMode::Centroid;
    if (s == "center_pixel") return AnchorMode::CenterPixel;
    throw Error(ErrorCode::ConfigInvalid, "unknown anchor_mode '" + s + "'");
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "base_size",   "frame_scale_mode", "reference_depth",       "band_edges",      "band_scales",
        "rule",        "w_recency",        "w_proximity",           "k",               "rho",
        "w_feat",      "w_range",          "w_spread",              "w_temporal", "smoothing_window",
        "window_size", "anchor_mode",      "consult_active_window", "patch_size",      "max_range",
    };
    return keys;
}

template <typename T>
T get_as(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace

std::string rule_name(const SelectionRule& rule) {
    if (std::holds_alternative<LatestRule>(rule)) return "latest";
    if (std::holds_alternative<PriorityRule>(rule)) return "priority";
    return "multi_token";
}

void PipelineConfig::validate() const {
    resolution.validate();
    validate_rule(rule);
    weights.validate();
    DGVT_CHECK(std::isfinite(rho) && rho >= 0.0 && rho <= 1.0, ErrorCode::ConfigInvalid, "rho must lie in [0, 1]");
    DGVT_CHECK(smoothing_window >= 1 && smoothing_window % 2 == 1,
               ErrorCode::ConfigInvalid,
               "smoothing_window must be a positive odd integer");
    DGVT_CHECK(window_size >= 1, ErrorCode::ConfigInvalid, "window_size must be at least 1");
    DGVT_CHECK(std::isfinite(max_range), ErrorCode::ConfigInvalid, "max_range must be finite");
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["base_size"] = c.resolution.base_size;
    j["frame_scale_mode"] = scale_mode_name(c.resolution.frame_scale_mode);
    j["reference_depth"] = c.resolution.reference_depth;
    j["band_edges"] = c.resolution.band_edges;
    j["band_scales"] = c.resolution.band_scales;
    j["rule"] = rule_name(c.rule);
    const PriorityRule pr = std::holds_alternative<PriorityRule>(c.rule) ? std::get<PriorityRule>(c.rule) : PriorityRule{};
    j["w_recency"] = pr.w_recency;
    j["w_proximity"] = pr.w_proximity;
    j["k"] = std::holds_alternative<MultiTokenRule>(c.rule) ? std::get<MultiTokenRule>(c.rule).k : MultiTokenRule{}.k;
    j["rho"] = c.rho;
    j["w_feat"] = c.weights.w_feat;
    j["w_range"] = c.weights.w_range;
    j["w_spread"] = c.weights.w_spread;
    j["w_temporal"] = c.weights.w_recency;
    j["smoothing_window"] = c.smoothing_window;
    j["window_size"] = c.window_size;
    j["anchor_mode"] = c.anchor_mode == AnchorMode::Centroid ? "centroid" : "center_pixel";
    j["consult_active_window"] = c.consult_active_window;
    j["patch_size"] = c.patch_size;
    j["max_range"] = c.max_range;
    return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    DGVT_CHECK(j.is_object(), ErrorCode::ConfigInvalid, "config must be a key/value object");
    for (const auto& [key, _] : j.items()) {
        DGVT_CHECK(known_keys().count(key) == 1, ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
    }
    PipelineConfig c;
    auto& r = c.resolution;
    if (j.contains("base_size")) r.base_size = get_as<double>(j, "base_size");
    if (j.contains("frame_scale_mode")) r.frame_scale_mode = parse_scale_mode(get_as<std::string>(j, "frame_scale_mode"));
    if (j.contains("reference_depth")) r.reference_depth = get_as<double>(j, "reference_depth");
    if (j.contains("band_edges")) r.band_edges = get_as<std::array<double, 2>>(j, "band_edges");
    if (j.contains("band_scales")) r.band_scales = get_as<std::array<double, 3>>(j, "band_scales");

    PriorityRule pr;
    if (j.contains("w_recency")) pr.w_recency = get_as<double>(j, "w_recency");
    if (j.contains("w_proximity")) pr.w_proximity = get_as<double>(j, "w_proximity");
    MultiTokenRule mt;
    if (j.contains("k")) {
        const auto k = get_as<std::int64_t>(j, "k");
        DGVT_CHECK(k >= 1, ErrorCode::ConfigInvalid, "k must be at least 1");
        mt.k = static_cast<std::size_t>(k);
    }
    const std::string rule = j.contains("rule") ? get_as<std::string>(j, "rule") : "latest";
    if (rule == "latest") {
        c.rule = LatestRule{};
    } else if (rule == "priority") {
        c.rule = pr;
    } else if (rule == "multi_token") {
        c.rule = mt;
    } else {
        throw Error(ErrorCode::ConfigInvalid, "unknown rule '" + rule + "'");
    }

    if (j.contains("rho")) c.rho = get_as<double>(j, "rho");
    if (j.contains("w_feat")) c.weights.w_feat = get_as<double>(j, "w_feat");
    if (j.contains("w_range")) c.weights.w_range = get_as<double>(j, "w_range");
    if (j.contains("w_spread")) c.weights.w_spread = get_as<double>(j, "w_spread");
    if (j.contains("w_temporal")) c.weights.w_recency = get_as<double>(j, "w_temporal");
    if (j.contains("smoothing_window")) {
        const auto w = get_as<std::int64_t>(j, "smoothing_window");
        DGVT_CHECK(w >= 1, ErrorCode::ConfigInvalid, "smoothing_window must be positive");
        c.smoothing_window = static_cast<std::size_t>(w);
    }
    if (j.contains("window_size")) {
        const auto w = get_as<std::int64_t>(j, "window_size");
        DGVT_CHECK(w >= 1, ErrorCode::ConfigInvalid, "window_size must be positive");
        c.window_size = static_cast<std::size_t>(w);
    }
    if (j.contains("anchor_mode")) c.anchor_mode = parse_anchor_mode(get_as<std::string>(j, "anchor_mode"));
    if (j.contains("consult_active_window")) c.consult_active_window = get_as<bool>(j, "consult_active_window");
    if (j.contains("patch_size")) {
        const auto p = get_as<std::int64_t>(j, "patch_size");
        DGVT_CHECK(p >= 0 && p <= 65535, ErrorCode::ConfigInvalid, "patch_size out of range");
        c.patch_size = static_cast<std::uint32_t>(p);
    }
    if (j.contains("max_range")) c.max_range = get_as<double>(j, "max_range");
    c.validate();
    return c;
}

PipelineConfig parse_config(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    DGVT_CHECK(in.good(), ErrorCode::ConfigInvalid, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace dgvt
