// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/log_format.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "dgvt/binary_io.hpp"
#include "dgvt/error.hpp"

namespace dgvt {

namespace {

constexpr std::string_view kFrameMagic = "DGVT";
constexpr std::string_view kTensorMagic = "DGVW";
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_frame(const FrameObservation& frame) {
    DGVT_CHECK(frame.depth.values.size() == static_cast<std::size_t>(frame.depth.width) * frame.depth.height,
               ErrorCode::ShapeMismatch,
               "depth size does not match dimensions");
    DGVT_CHECK(frame.features.size() == static_cast<std::size_t>(frame.token_count) * frame.feature_dim,
               ErrorCode::ShapeMismatch,
               "feature payload does not match L x C");
    ByteWriter w;
    w.bytes(kFrameMagic);
    w.u32(kVersion);
    w.u64(frame.frame_id);
    w.u32(frame.depth.width);
    w.u32(frame.depth.height);
    w.f64(frame.intrinsics.fx);
    w.f64(frame.intrinsics.fy);
    w.f64(frame.intrinsics.cx);
    w.f64(frame.intrinsics.cy);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            w.f64(frame.pose.rotation(r, c));
        }
    }
    for (int i = 0; i < 3; ++i) {
        w.f64(frame.pose.translation[i]);
    }
    for (double d : frame.depth.values) {
        w.f32(static_cast<float>(d));
    }
    w.u32(frame.token_count);
    w.u32(frame.feature_dim);
    for (float f : frame.features) {
        w.f32(f);
    }
    return w.take();
}

FrameObservation decode_frame(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorCode::MalformedLog);
    DGVT_CHECK(r.bytes(4) == kFrameMagic, ErrorCode::MalformedLog, "bad frame magic");
    DGVT_CHECK(r.u32() == kVersion, ErrorCode::MalformedLog, "unsupported frame record version");
    FrameObservation f;
    f.frame_id = r.u64();
    f.depth.width = r.u32();
    f.depth.height = r.u32();
    f.intrinsics.fx = r.f64();
    f.intrinsics.fy = r.f64();
    f.intrinsics.cx = r.f64();
    f.intrinsics.cy = r.f64();
    for (int row = 0; row < 3; ++row) {
        for (int c = 0; c < 3; ++c) {
            f.pose.rotation(row, c) = r.f64();
        }
    }
    for (int i = 0; i < 3; ++i) {
        f.pose.translation[i] = r.f64();
    }
    const std::uint64_t pixels = static_cast<std::uint64_t>(f.depth.width) * f.depth.height;
    r.expect(pixels, 4);
    f.depth.values.resize(pixels);
    for (auto& d : f.depth.values) {
        d = static_cast<double>(r.f32());
    }
    f.token_count = r.u32();
    f.feature_dim = r.u32();
    const std::uint64_t count = static_cast<std::uint64_t>(f.token_count) * f.feature_dim;
    r.expect(count, 4);
    f.features.resize(count);
    for (auto& x : f.features) {
        x = r.f32();
    }
    DGVT_CHECK(r.remaining() == 0, ErrorCode::MalformedLog, "trailing bytes after frame record");
    DGVT_CHECK(f.intrinsics.is_valid(), ErrorCode::MalformedLog, "frame carries invalid intrinsics");
    return f;
}

std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    DGVT_CHECK(in.good(), ErrorCode::MalformedLog, "cannot read manifest " + manifest.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedLog, std::string("manifest is not valid JSON: ") + e.what());
    }
    DGVT_CHECK(j.is_object() && j.value("format", "") == "dgvt-trajectory" && j.value("version", 0) == 1 &&
                   j.contains("frames") && j["frames"].is_array(),
               ErrorCode::MalformedLog,
               "manifest must declare format dgvt-trajectory version 1 with a frames list");
    DGVT_CHECK(!j["frames"].empty(), ErrorCode::MalformedLog, "manifest lists no frames");
    std::vector<std::filesystem::path> out;
    for (const auto& entry : j["frames"]) {
        DGVT_CHECK(entry.is_string(), ErrorCode::MalformedLog, "frame entries must be paths");
        out.push_back(manifest.parent_path() / entry.get<std::string>());
    }
    return out;
}

std::vector<FrameObservation> load_trajectory(const std::filesystem::path& manifest) {
    std::vector<FrameObservation> frames;
    for (const auto& path : read_manifest(manifest)) {
        frames.push_back(decode_frame(read_file(path)));
        DGVT_CHECK(frames.size() == 1 || frames.back().frame_id > frames[frames.size() - 2].frame_id,
                   ErrorCode::MalformedLog,
                   "frame ids in the manifest are not strictly increasing");
    }
    return frames;
}

std::filesystem::path write_trajectory(const std::filesystem::path& dir, std::span<const FrameObservation> frames) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["format"] = "dgvt-trajectory";
    j["version"] = 1;
    j["frames"] = nlohmann::ordered_json::array();
    for (const auto& f : frames) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06llu.dgvt", static_cast<unsigned long long>(f.frame_id));
        write_file(dir / name, encode_frame(f));
        j["frames"].push_back(name);
    }
    const auto manifest = dir / "manifest.json";
    write_text(manifest, j.dump(2) + "\n");
    return manifest;
}

std::vector<std::uint8_t> encode_tensors(const TensorMap& tensors) {
    ByteWriter w;
    w.bytes(kTensorMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        w.string(name);
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            w.f64(m.data()[i]);
        }
    }
    return w.take();
}

TensorMap decode_tensors(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, ErrorCode::MalformedLog);
    DGVT_CHECK(r.bytes(4) == kTensorMagic, ErrorCode::MalformedLog, "bad tensor container magic");
    DGVT_CHECK(r.u32() == kVersion, ErrorCode::MalformedLog, "unsupported tensor container version");
    TensorMap out;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.string();
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        r.expect(static_cast<std::uint64_t>(rows) * cols, 8);
        TokenMatrix m(rows, cols);
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            m.data()[k] = r.f64();
        }
        DGVT_CHECK(out.emplace(std::move(name), std::move(m)).second, ErrorCode::MalformedLog, "duplicate tensor name");
    }
    DGVT_CHECK(r.remaining() == 0, ErrorCode::MalformedLog, "trailing bytes after tensor container");
    return out;
}

TensorMap attention_to_tensors(const AttentionWeights& w) {
    TensorMap t;
    t["query"] = w.query;
    t["key"] = w.key;
    t["value"] = w.value;
    t["output"] = w.output;
    t["num_heads"] = TokenMatrix::Constant(1, 1, static_cast<double>(w.num_heads));
    return t;
}

AttentionWeights attention_from_tensors(const TensorMap& tensors) {
    auto get = [&](const char* name) -> const TokenMatrix& {
        auto it = tensors.find(name);
        DGVT_CHECK(it != tensors.end(), ErrorCode::MalformedLog, std::string("missing tensor '") + name + "'");
        return it->second;
    };
    const TokenMatrix& heads = get("num_heads");
    DGVT_CHECK(heads.size() == 1 && heads(0, 0) >= 1.0 && heads(0, 0) == std::floor(heads(0, 0)),
               ErrorCode::MalformedLog,
               "num_heads must be a positive integer 1x1 tensor");
    AttentionWeights w;
    w.num_heads = static_cast<std::size_t>(heads(0, 0));
    w.query = get("query");
    w.key = get("key");
    w.value = get("value");
    w.output = get("output");
    w.validate();
    return w;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    DGVT_CHECK(in.good(), ErrorCode::MalformedLog, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    DGVT_CHECK(out.good(), ErrorCode::InvariantViolation, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    DGVT_CHECK(out.good(), ErrorCode::InvariantViolation, "cannot write " + path.string());
    out << text;
}

}  // namespace dgvt
