// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dgvt {

enum class ErrorCode {
    PoseInvalid,
    ShapeMismatch,
    EmptyCell,
    BadRatio,
    LengthMismatch,
    NonMonotonicFrame,
    NonFinite,
    WaypointOutOfBounds,
    ScaleExceeded,
    ConfigInvalid,
    MalformedLog,
    NoRunData,
    InvariantViolation,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for every recoverable failure in the library. The
/// code tells callers (notably the CLI) how to map the failure to an exit
/// status; the message carries the detail.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          m_code(code) {}

    ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

#define DGVT_CHECK(cond, code, msg)                \
    do {                                           \
        if (!(cond)) {                             \
            throw ::dgvt::Error((code), (msg));    \
        }                                          \
    } while (false)

}  // namespace dgvt
