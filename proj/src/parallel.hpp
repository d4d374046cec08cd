// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <exception>

namespace dgvt::detail {

/// OpenMP loop over [0, n) that carries exceptions out of the parallel
/// region. When several iterations throw, the one with the lowest index is
/// rethrown, matching what a serial loop would report.
template <typename Fn>
void parallel_for(std::int64_t n, bool parallel, Fn&& fn) {
    std::exception_ptr error;
    std::int64_t error_index = n;
#pragma omp parallel for schedule(dynamic, 1) if (parallel)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#pragma omp critical(dgvt_parallel_for_error)
            {
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace dgvt::detail
