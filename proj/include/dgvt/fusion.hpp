// Copyright (C) 2026 The dgvt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>

namespace dgvt {

/// L tokens x C features.
using TokenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameters of one multi-head cross-attention block over model dimension d.
/// Each projection is d x d and is applied on the right (X * W); head h uses
/// columns [h * d/heads, (h+1) * d/heads) of the query/key/value projections.
struct AttentionWeights {
    std::size_t num_heads = 4;
    TokenMatrix query;
    TokenMatrix key;
    TokenMatrix value;
    TokenMatrix output;

    std::size_t model_dim() const {
        return static_cast<std::size_t>(query.rows());
    }
    std::size_t head_dim() const {
        return model_dim() / num_heads;
    }
    void validate() const;  // throws ShapeMismatch / NonFinite

    /// Deterministic weights drawn from N(0, 1/d).
    static AttentionWeights random(std::size_t model_dim, std::size_t num_heads, std::uint64_t seed);
};

/// Linear feature alignment: geo (L x Cg) times projection (Cg x Cv).
TokenMatrix align(const TokenMatrix& geo_tokens, const TokenMatrix& projection);

/// Scaled dot-product attention of each query row over every key row, per
/// head, with max-subtracted softmax; the concatenated head outputs go
/// through the output projection. No residual or normalization is applied.
TokenMatrix cross_attend(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w);

/// Row-stochastic attention weights (queries x keys) of one head.
TokenMatrix attention_weights(const TokenMatrix& queries,
                              const TokenMatrix& keys_values,
                              const AttentionWeights& w,
                              std::size_t head);

/// Head outputs before the output projection (queries x d).
TokenMatrix attend_heads(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w);

namespace serial {

TokenMatrix cross_attend(const TokenMatrix& queries, const TokenMatrix& keys_values, const AttentionWeights& w);

}  // namespace serial

}  // namespace dgvt
