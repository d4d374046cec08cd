// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#include "dgvt/fusion.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <string>

#include "dgvt/error.hpp"

namespace dgvt {

namespace {

struct HeadProjections {
    TokenMatrix q;  // queries x d
    TokenMatrix k;  // keys x d
    TokenMatrix v;  // keys x d
};

void check_inputs(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    w.validate();
    const auto d = static_cast<Eigen::Index>(w.model_dim());
    DGVT_CHECK(queries.rows() >= 1 && keys_values.rows() >= 1, ErrorCode::ShapeMismatch, "attention needs at least one query and one key");
    DGVT_CHECK(queries.cols() == d && keys_values.cols() == d,
               ErrorCode::ShapeMismatch,
               "query/key columns must equal the model dimension " + std::to_string(d));
    DGVT_CHECK(queries.allFinite() && keys_values.allFinite(), ErrorCode::NonFinite, "non-finite attention input");
}

HeadProjections project(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    return {queries * w.query, keys_values * w.key, keys_values * w.value};
}

// Softmax-weighted sum of one head's value rows for query row `row`. Writes
// into out[row, head cols] and returns false when a logit is not finite.
bool attend_row(const HeadProjections& p, std::size_t head, std::size_t head_dim, Eigen::Index row, TokenMatrix& out) {
    const auto col0 = static_cast<Eigen::Index>(head * head_dim);
    const auto dh = static_cast<Eigen::Index>(head_dim);
    const auto keys = p.k.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Eigen::VectorXd logits(keys);
    for (Eigen::Index j = 0; j < keys; ++j) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) {
            dot += p.q(row, col0 + c) * p.k(j, col0 + c);
        }
        logits[j] = dot * scale;
    }
    if (!logits.allFinite()) {
        return false;
    }
    const double peak = logits.maxCoeff();
    double total = 0.0;
    for (Eigen::Index j = 0; j < keys; ++j) {
        logits[j] = std::exp(logits[j] - peak);
        total += logits[j];
    }
    for (Eigen::Index c = 0; c < dh; ++c) {
        out(row, col0 + c) = 0.0;
    }
    for (Eigen::Index j = 0; j < keys; ++j) {
        const double a = logits[j] / total;
        for (Eigen::Index c = 0; c < dh; ++c) {
            out(row, col0 + c) += a * p.v(j, col0 + c);
        }
    }
    return true;
}

TokenMatrix heads_parallel(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    check_inputs(queries, keys_values, w);
    const HeadProjections p = project(queries, keys_values, w);
    TokenMatrix out(queries.rows(), queries.cols());
    const auto heads = static_cast<std::int64_t>(w.num_heads);
    const auto rows = static_cast<std::int64_t>(queries.rows());
    std::atomic<bool> finite{true};
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < rows; ++i) {
            if (!attend_row(p, static_cast<std::size_t>(h), w.head_dim(), i, out)) {
                finite.store(false, std::memory_order_relaxed);
            }
        }
    }
    DGVT_CHECK(finite.load(), ErrorCode::NonFinite, "attention logits overflowed");
    return out;
}

}  // namespace

void AttentionWeights::validate() const {
    const auto d = query.rows();
    DGVT_CHECK(num_heads >= 1 && d >= 1, ErrorCode::ShapeMismatch, "attention needs at least one head and one feature");
    DGVT_CHECK(static_cast<std::size_t>(d) % num_heads == 0,
               ErrorCode::ShapeMismatch,
               "model dimension " + std::to_string(d) + " is not divisible by " + std::to_string(num_heads) + " heads");
    for (const TokenMatrix* m : {&query, &key, &value, &output}) {
        DGVT_CHECK(m->rows() == d && m->cols() == d, ErrorCode::ShapeMismatch, "projection matrices must be d x d");
        DGVT_CHECK(m->allFinite(), ErrorCode::NonFinite, "projection matrices must be finite");
    }
}

AttentionWeights AttentionWeights::random(std::size_t model_dim, std::size_t num_heads, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(model_dim)));
    const auto d = static_cast<Eigen::Index>(model_dim);
    auto draw = [&] {
        TokenMatrix m(d, d);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = normal(rng);
        }
        return m;
    };
    AttentionWeights w;
    w.num_heads = num_heads;
    w.query = draw();
    w.key = draw();
    w.value = draw();
    w.output = draw();
    return w;
}

TokenMatrix align(const TokenMatrix& geo_tokens, const TokenMatrix& projection) {
    DGVT_CHECK(geo_tokens.cols() == projection.rows(),
               ErrorCode::ShapeMismatch,
               "geometry tokens have " + std::to_string(geo_tokens.cols()) + " features, projection expects " +
                   std::to_string(projection.rows()));
    return geo_tokens * projection;
}

TokenMatrix attention_weights(const TokenMatrix& queries,
                              const TokenMatrix& keys_values,
                              const AttentionWeights& w,
                              std::size_t head) {
    check_inputs(queries, keys_values, w);
    DGVT_CHECK(head < w.num_heads, ErrorCode::ShapeMismatch, "head index out of range");
    const HeadProjections p = project(queries, keys_values, w);
    const auto col0 = static_cast<Eigen::Index>(head * w.head_dim());
    const auto dh = static_cast<Eigen::Index>(w.head_dim());
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.head_dim()));
    TokenMatrix logits = (p.q.middleCols(col0, dh) * p.k.middleCols(col0, dh).transpose()) * scale;
    DGVT_CHECK(logits.allFinite(), ErrorCode::NonFinite, "attention logits overflowed");
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        logits.row(i) = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

TokenMatrix attend_heads(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    return heads_parallel(queries, keys_values, w);
}

TokenMatrix cross_attend(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    return heads_parallel(queries, keys_values, w) * w.output;
}

namespace serial {

TokenMatrix cross_attend(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w) {
    check_inputs(queries, keys_values, w);
    const HeadProjections p = project(queries, keys_values, w);
    TokenMatrix heads(queries.rows(), queries.cols());
    for (std::size_t h = 0; h < w.num_heads; ++h) {
        for (Eigen::Index i = 0; i < queries.rows(); ++i) {
            DGVT_CHECK(attend_row(p, h, w.head_dim(), i, heads), ErrorCode::NonFinite, "attention logits overflowed");
        }
    }
    return heads * w.output;
}

}  // namespace serial

}  // namespace dgvt
