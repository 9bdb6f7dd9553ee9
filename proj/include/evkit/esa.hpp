#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/numerics.hpp"
#include "evkit/tensor.hpp"

// Event-based sparse attention: per-row top-K masking of the score matrix at
// several fractions, one softmax per level, and a lambda-weighted sum of the
// resulting attention matrices applied to V.
//
// K = ceil(fraction * L_k), so K >= 1 and every row keeps at least its
// maximum. Ties at the K boundary break toward the lowest column index.
// Lambdas scale the attention matrices after the softmax; the summed matrix
// is not renormalized.

namespace evkit {

struct SparsityConfig {
    std::vector<double> fractions;
    std::vector<double> lambdas;

    // Four levels at fractions 1/2, 2/3, 3/4, 4/5, uniform lambdas.
    static SparsityConfig defaults() {
        return {{0.5, 2.0 / 3.0, 0.75, 0.8}, {0.25, 0.25, 0.25, 0.25}};
    }

    static SparsityConfig dense() { return {{1.0}, {1.0}}; }

    std::size_t levels() const { return fractions.size(); }

    void validate() const {
        if (fractions.empty()) {
            throw ConfigError("sparsity config needs at least one level");
        }
        if (fractions.size() != lambdas.size()) {
            throw ConfigError("sparsity config has " + std::to_string(fractions.size()) +
                              " fractions but " + std::to_string(lambdas.size()) + " lambdas");
        }
        for (double f : fractions) {
            if (!(f > 0.0 && f <= 1.0)) {
                throw ConfigError("top-K fraction must lie in (0,1], got " + std::to_string(f));
            }
        }
    }
};

inline std::int64_t top_k_count(double fraction, std::int64_t row_len) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw ConfigError("top-K fraction must lie in (0,1], got " + std::to_string(fraction));
    }
    const std::int64_t k =
        static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(row_len)));
    return std::clamp<std::int64_t>(k, 1, row_len);
}

// Per-row binary mask with exactly K ones at the K largest scores. Selection
// finds the K-th value with nth_element, keeps everything strictly above it,
// and fills the remainder from tied entries in ascending column order.
inline Tensor topk_mask(const Tensor& scores, double fraction) {
    require_rank(scores, 2, "topk_mask");
    const std::int64_t rows = scores.extent(0), cols = scores.extent(1);
    const std::int64_t k = top_k_count(fraction, cols);
    Tensor mask({rows, cols});
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) row[static_cast<std::size_t>(c)] = scores(r, c);
        std::nth_element(row.begin(), row.begin() + (k - 1), row.end(), std::greater<>());
        const double kth = row[static_cast<std::size_t>(k - 1)];
        std::int64_t kept_above = 0;
        for (std::int64_t c = 0; c < cols; ++c) {
            if (scores(r, c) > kth) ++kept_above;
        }
        std::int64_t tied_budget = k - kept_above;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double s = scores(r, c);
            if (s > kth) {
                mask(r, c) = 1.0;
            } else if (s == kth && tied_budget > 0) {
                mask(r, c) = 1.0;
                --tied_budget;
            }
        }
    }
    return mask;
}

// Kept positions pass through; masked positions become the -inf sentinel that
// softmax_rows maps to exactly zero.
inline Tensor apply_mask(const Tensor& scores, const Tensor& mask) {
    require_same_shape(scores, mask, "apply_mask");
    Tensor out = scores;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = mask.flat(i);
        if (m == 0.0) {
            out.flat(i) = kNegInf;
        } else if (m != 1.0) {
            throw DomainError("apply_mask: mask entry " + std::to_string(m) + " not in {0,1}");
        }
    }
    return out;
}

// Q K^T / sqrt(d_k) with shape validation. Q: L_q x d, K: L_k x d.
inline Tensor attention_scores(const Tensor& q, const Tensor& k) {
    require_rank(q, 2, "attention query");
    require_rank(k, 2, "attention key");
    if (q.extent(1) != k.extent(1)) {
        throw DimensionError("attention: query/key dims disagree, " + shape_str(q.shape()) +
                             " vs " + shape_str(k.shape()));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.extent(1)));
    return scale(matmul(q, transpose(k)), inv_sqrt_d);
}

inline void require_value_shape(const Tensor& k, const Tensor& v) {
    require_rank(v, 2, "attention value");
    if (v.extent(0) != k.extent(0)) {
        throw DimensionError("attention: key/value lengths disagree, " + shape_str(k.shape()) +
                             " vs " + shape_str(v.shape()));
    }
}

inline Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require_value_shape(k, v);
    return matmul(softmax_rows(attention_scores(q, k)), v);
}

// Everything the forward pass produces, kept for statistics, tests and the
// backward pass.
struct SparseAttentionDetail {
    Tensor scores;               // pre-mask S = QK^T/sqrt(d)
    std::vector<Tensor> masks;   // one binary mask per level
    std::vector<Tensor> attn;    // softmax of each masked score matrix
    Tensor combined;             // sum_i lambda_i * attn_i
    Tensor output;               // combined * V
};

inline SparseAttentionDetail sparse_attention_detail(const Tensor& q, const Tensor& k,
                                                     const Tensor& v,
                                                     const SparsityConfig& cfg) {
    cfg.validate();
    require_value_shape(k, v);
    SparseAttentionDetail d;
    d.scores = attention_scores(q, k);
    d.combined = Tensor(d.scores.shape());
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        Tensor mask = topk_mask(d.scores, cfg.fractions[i]);
        Tensor attn = softmax_rows(apply_mask(d.scores, mask));
        for (std::size_t j = 0; j < d.combined.size(); ++j) {
            d.combined.flat(j) += cfg.lambdas[i] * attn.flat(j);
        }
        d.masks.push_back(std::move(mask));
        d.attn.push_back(std::move(attn));
    }
    d.output = matmul(d.combined, v);
    return d;
}

inline Tensor sparse_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                               const SparsityConfig& cfg) {
    return sparse_attention_detail(q, k, v, cfg).output;
}

// True if any row of any level has a tie between the K-th and (K+1)-th
// largest scores. At such points the selection is discontinuous and the
// mask-as-constant gradient is one-sided.
inline bool has_boundary_tie(const Tensor& scores, const SparsityConfig& cfg) {
    const std::int64_t rows = scores.extent(0), cols = scores.extent(1);
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (double f : cfg.fractions) {
        const std::int64_t k = top_k_count(f, cols);
        if (k == cols) continue;  // full row, nothing to cut
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cols; ++c) {
                row[static_cast<std::size_t>(c)] = scores(r, c);
            }
            std::nth_element(row.begin(), row.begin() + (k - 1), row.end(), std::greater<>());
            const double kth = row[static_cast<std::size_t>(k - 1)];
            const double next =
                *std::max_element(row.begin() + k, row.end());
            if (kth == next) return true;
        }
    }
    return false;
}

struct SparseAttentionGrads {
    Tensor dq;
    Tensor dk;
    Tensor dv;
    std::vector<double> dlambdas;
    bool boundary_tie = false;  // selection held fixed; gradient one-sided
};

// Adjoint of sparse_attention with the top-K selection treated as constant.
// lambda_i receives <upstream, attn_i * V>; Q and K receive the summed
// softmax adjoints routed through S = QK^T/sqrt(d).
inline SparseAttentionGrads sparse_attention_grads(const Tensor& q, const Tensor& k,
                                                   const Tensor& v, const SparsityConfig& cfg,
                                                   const Tensor& upstream) {
    const SparseAttentionDetail d = sparse_attention_detail(q, k, v, cfg);
    require_same_shape(upstream, d.output, "sparse_attention_grads upstream");

    SparseAttentionGrads g;
    g.boundary_tie = has_boundary_tie(d.scores, cfg);
    g.dv = matmul(transpose(d.combined), upstream);
    const Tensor d_combined = matmul(upstream, transpose(v));

    Tensor d_scores(d.scores.shape());
    g.dlambdas.resize(cfg.levels());
    for (std::size_t i = 0; i < cfg.levels(); ++i) {
        g.dlambdas[i] = dot(d_combined, d.attn[i]);
        const Tensor d_attn = scale(d_combined, cfg.lambdas[i]);
        const Tensor ds_level = softmax_rows_backward(d.attn[i], d_attn);
        for (std::size_t j = 0; j < d_scores.size(); ++j) {
            d_scores.flat(j) += ds_level.flat(j);
        }
    }

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k.extent(1)));
    g.dq = scale(matmul(d_scores, k), inv_sqrt_d);
    g.dk = scale(matmul(transpose(d_scores), q), inv_sqrt_d);
    return g;
}

}  // namespace evkit
