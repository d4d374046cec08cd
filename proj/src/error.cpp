// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/error.hpp"

namespace dgvt {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::PoseInvalid:
        return "PoseInvalid";
    case ErrorCode::ShapeMismatch:
        return "ShapeMismatch";
    case ErrorCode::EmptyCell:
        return "EmptyCell";
    case ErrorCode::BadRatio:
        return "BadRatio";
    case ErrorCode::LengthMismatch:
        return "LengthMismatch";
    case ErrorCode::NonMonotonicFrame:
        return "NonMonotonicFrame";
    case ErrorCode::NonFinite:
        return "NonFinite";
    case ErrorCode::WaypointOutOfBounds:
        return "WaypointOutOfBounds";
    case ErrorCode::ScaleExceeded:
        return "ScaleExceeded";
    case ErrorCode::ConfigInvalid:
        return "ConfigInvalid";
    case ErrorCode::MalformedLog:
        return "MalformedLog";
    case ErrorCode::NoRunData:
        return "NoRunData";
    case ErrorCode::InvariantViolation:
        return "InvariantViolation";
    }
    return "Unknown";
}

}  // namespace dgvt
