#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/esa.hpp"
#include "evkit/numerics.hpp"
#include "evkit/rng.hpp"
#include "evkit/tensor.hpp"

// Spatio-temporal motion entanglement: sparse self-attention on the previous
// subframe's features entangled with sparse cross-attention onto the current
// subframe's features (the previous subframe supplies the query for both
// branches), concatenated and fused by conv3x3 + batchnorm + relu. Feature
// maps are C x H x W; attention tokens are the H*W spatial positions with
// d_k = C.

namespace evkit {

// C x H x W -> (H*W) x C, row-major over space: token y*W + x carries the
// channel vector at (y, x). unflatten_spatial restores exactly.
inline Tensor flatten_spatial(const Tensor& f) {
    require_rank(f, 3, "flatten_spatial");
    const std::int64_t c = f.extent(0), h = f.extent(1), w = f.extent(2);
    Tensor out({h * w, c});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                out(y * w + x, ch) = f(ch, y, x);
            }
        }
    }
    return out;
}

inline Tensor unflatten_spatial(const Tensor& tokens, std::int64_t h, std::int64_t w) {
    require_rank(tokens, 2, "unflatten_spatial");
    if (tokens.extent(0) != h * w) {
        throw DimensionError("unflatten_spatial: " + std::to_string(tokens.extent(0)) +
                             " tokens do not cover " + std::to_string(h) + "x" +
                             std::to_string(w) + " positions");
    }
    const std::int64_t c = tokens.extent(1);
    Tensor out({c, h, w});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                out(ch, y, x) = tokens(y * w + x, ch);
            }
        }
    }
    return out;
}

inline Tensor slice_channels(const Tensor& f, std::int64_t c0, std::int64_t c1) {
    require_rank(f, 3, "slice_channels");
    const std::int64_t h = f.extent(1), w = f.extent(2);
    Tensor out({c1 - c0, h, w});
    for (std::int64_t ch = c0; ch < c1; ++ch) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                out(ch - c0, y, x) = f(ch, y, x);
            }
        }
    }
    return out;
}

inline Tensor concat_channels(const std::vector<Tensor>& parts) {
    std::int64_t c_total = 0;
    for (const Tensor& p : parts) {
        require_rank(p, 3, "concat_channels");
        c_total += p.extent(0);
    }
    const std::int64_t h = parts.front().extent(1), w = parts.front().extent(2);
    Tensor out({c_total, h, w});
    std::int64_t base = 0;
    for (const Tensor& p : parts) {
        if (p.extent(1) != h || p.extent(2) != w) {
            throw DimensionError("concat_channels: spatial extents disagree, " +
                                 shape_str(p.shape()) + " vs " + shape_str(parts.front().shape()));
        }
        for (std::int64_t ch = 0; ch < p.extent(0); ++ch) {
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    out(base + ch, y, x) = p(ch, y, x);
                }
            }
        }
        base += p.extent(0);
    }
    return out;
}

// Parameters of one STME block over C-channel features. The query projection
// is computed once from the previous subframe and shared by both branches;
// the K/V projections are separate per branch. The fusion conv maps the
// 2C-channel concat back to C channels.
struct StmeParams {
    Tensor wq_prev;  // C x C
    Tensor wk_prev;  // C x C
    Tensor wv_prev;  // C x C
    Tensor wk_curr;  // C x C
    Tensor wv_curr;  // C x C
    Tensor conv_w;   // C x 2C x 3 x 3
    Tensor conv_b;   // C
    Tensor bn_mean;  // C
    Tensor bn_var;   // C
    Tensor bn_gamma; // C
    Tensor bn_beta;  // C
    double bn_eps = 1e-5;
    SparsityConfig sparsity = SparsityConfig::defaults();

    void validate(std::int64_t channels) const {
        const Shape proj{channels, channels};
        for (const Tensor* p : {&wq_prev, &wk_prev, &wv_prev, &wk_curr, &wv_curr}) {
            if (p->shape() != proj) {
                throw DimensionError("STME projection must be " + shape_str(proj) + ", got " +
                                     shape_str(p->shape()));
            }
        }
        if (conv_w.shape() != Shape{channels, 2 * channels, 3, 3}) {
            throw DimensionError("STME conv weights must be " +
                                 shape_str({channels, 2 * channels, 3, 3}) + ", got " +
                                 shape_str(conv_w.shape()));
        }
        if (conv_b.shape() != Shape{channels}) {
            throw DimensionError("STME conv bias must be " + shape_str({channels}) + ", got " +
                                 shape_str(conv_b.shape()));
        }
        for (const Tensor* p : {&bn_mean, &bn_var, &bn_gamma, &bn_beta}) {
            if (p->shape() != Shape{channels}) {
                throw DimensionError("STME batchnorm parameter must be " +
                                     shape_str({channels}) + ", got " + shape_str(p->shape()));
            }
        }
        sparsity.validate();
    }

    // Uniform weights in [-0.5, 0.5), identity batchnorm statistics. Drawing
    // order is part of the fixture contract (see README).
    static StmeParams seeded(std::int64_t channels, const SparsityConfig& cfg, SplitMix64& rng) {
        auto draw = [&rng](Shape shape) {
            Tensor t(std::move(shape));
            for (double& x : t.data()) x = rng.next_in(-0.5, 0.5);
            return t;
        };
        StmeParams p;
        p.wq_prev = draw({channels, channels});
        p.wk_prev = draw({channels, channels});
        p.wv_prev = draw({channels, channels});
        p.wk_curr = draw({channels, channels});
        p.wv_curr = draw({channels, channels});
        p.conv_w = draw({channels, 2 * channels, 3, 3});
        p.conv_b = draw({channels});
        p.bn_mean = Tensor({channels});
        p.bn_var = Tensor::full({channels}, 1.0);
        p.bn_gamma = Tensor::full({channels}, 1.0);
        p.bn_beta = Tensor({channels});
        p.sparsity = cfg;
        return p;
    }
};

// Forward intermediates, kept for the backward pass, statistics and tests.
struct StmeForwardCache {
    Tensor tokens_prev;   // (H*W) x C
    Tensor tokens_curr;   // (H*W) x C
    Tensor q;             // shared query from the previous subframe
    Tensor k_prev, v_prev;
    Tensor k_curr, v_curr;
    SparseAttentionDetail branch_self;   // Q, K_{t-1}, V_{t-1}
    SparseAttentionDetail branch_cross;  // Q, K_t, V_t
    Tensor entangled;     // 2C x H x W concat, self branch first
    Tensor conv_out;      // C x H x W
    Tensor bn_out;
    Tensor output;        // relu(bn(conv(entangled)))
};

inline StmeForwardCache stme_forward_cached(const Tensor& e_prev, const Tensor& e_curr,
                                            const StmeParams& params) {
    require_rank(e_prev, 3, "stme_forward previous features");
    require_same_shape(e_prev, e_curr, "stme_forward subframe features");
    const std::int64_t c = e_prev.extent(0), h = e_prev.extent(1), w = e_prev.extent(2);
    params.validate(c);

    StmeForwardCache cache;
    cache.tokens_prev = flatten_spatial(e_prev);
    cache.tokens_curr = flatten_spatial(e_curr);
    cache.q = matmul(cache.tokens_prev, params.wq_prev);
    cache.k_prev = matmul(cache.tokens_prev, params.wk_prev);
    cache.v_prev = matmul(cache.tokens_prev, params.wv_prev);
    cache.k_curr = matmul(cache.tokens_curr, params.wk_curr);
    cache.v_curr = matmul(cache.tokens_curr, params.wv_curr);

    cache.branch_self =
        sparse_attention_detail(cache.q, cache.k_prev, cache.v_prev, params.sparsity);
    cache.branch_cross =
        sparse_attention_detail(cache.q, cache.k_curr, cache.v_curr, params.sparsity);

    cache.entangled = concat_channels({unflatten_spatial(cache.branch_self.output, h, w),
                                       unflatten_spatial(cache.branch_cross.output, h, w)});
    cache.conv_out = conv2d(cache.entangled, params.conv_w, params.conv_b);
    cache.bn_out = batchnorm(cache.conv_out, params.bn_mean, params.bn_var, params.bn_gamma,
                             params.bn_beta, params.bn_eps);
    cache.output = relu(cache.bn_out);
    return cache;
}

inline Tensor stme_forward(const Tensor& e_prev, const Tensor& e_curr, const StmeParams& params) {
    return stme_forward_cached(e_prev, e_curr, params).output;
}

struct StmeGrads {
    Tensor de_prev, de_curr;
    Tensor dwq_prev, dwk_prev, dwv_prev, dwk_curr, dwv_curr;
    Tensor dconv_w, dconv_b;
    Tensor dbn_gamma, dbn_beta;
    std::vector<double> dlambdas;
    bool boundary_tie = false;
};

// Full adjoint of stme_forward with the top-K selections of both branches
// held constant. The shared lambda parameters accumulate over both branches,
// as does the shared query projection.
inline StmeGrads stme_forward_grads(const Tensor& e_prev, const Tensor& e_curr,
                                    const StmeParams& params, const Tensor& upstream) {
    const StmeForwardCache cache = stme_forward_cached(e_prev, e_curr, params);
    require_same_shape(upstream, cache.output, "stme_forward_grads upstream");
    const std::int64_t h = e_prev.extent(1), w = e_prev.extent(2);
    const std::int64_t c = e_prev.extent(0);

    const Tensor d_bn_out = relu_backward(cache.bn_out, upstream);
    const BatchnormGrads bn_g = batchnorm_backward(cache.conv_out, params.bn_mean, params.bn_var,
                                                   params.bn_gamma, params.bn_eps, d_bn_out);
    const Conv2dGrads conv_g = conv2d_backward(cache.entangled, params.conv_w, bn_g.dinput);

    const Tensor d_self = flatten_spatial(slice_channels(conv_g.dinput, 0, c));
    const Tensor d_cross = flatten_spatial(slice_channels(conv_g.dinput, c, 2 * c));

    const SparseAttentionGrads g_self =
        sparse_attention_grads(cache.q, cache.k_prev, cache.v_prev, params.sparsity, d_self);
    const SparseAttentionGrads g_cross =
        sparse_attention_grads(cache.q, cache.k_curr, cache.v_curr, params.sparsity, d_cross);

    const Tensor dq = add(g_self.dq, g_cross.dq);

    StmeGrads g;
    g.boundary_tie = g_self.boundary_tie || g_cross.boundary_tie;
    g.dlambdas.resize(params.sparsity.levels());
    for (std::size_t i = 0; i < g.dlambdas.size(); ++i) {
        g.dlambdas[i] = g_self.dlambdas[i] + g_cross.dlambdas[i];
    }
    g.dconv_w = conv_g.dweights;
    g.dconv_b = conv_g.dbias;
    g.dbn_gamma = bn_g.dgamma;
    g.dbn_beta = bn_g.dbeta;

    g.dwq_prev = matmul(transpose(cache.tokens_prev), dq);
    g.dwk_prev = matmul(transpose(cache.tokens_prev), g_self.dk);
    g.dwv_prev = matmul(transpose(cache.tokens_prev), g_self.dv);
    g.dwk_curr = matmul(transpose(cache.tokens_curr), g_cross.dk);
    g.dwv_curr = matmul(transpose(cache.tokens_curr), g_cross.dv);

    Tensor d_tokens_prev = matmul(dq, transpose(params.wq_prev));
    d_tokens_prev = add(d_tokens_prev, matmul(g_self.dk, transpose(params.wk_prev)));
    d_tokens_prev = add(d_tokens_prev, matmul(g_self.dv, transpose(params.wv_prev)));
    Tensor d_tokens_curr = matmul(g_cross.dk, transpose(params.wk_curr));
    d_tokens_curr = add(d_tokens_curr, matmul(g_cross.dv, transpose(params.wv_curr)));

    g.de_prev = unflatten_spatial(d_tokens_prev, h, w);
    g.de_curr = unflatten_spatial(d_tokens_curr, h, w);
    return g;
}

struct PoolParams {
    Tensor conv_w;  // C x C x 1 x 1
    Tensor conv_b;  // C

    void validate(std::int64_t channels) const {
        if (conv_w.shape() != Shape{channels, channels, 1, 1}) {
            throw DimensionError("pool conv weights must be " +
                                 shape_str({channels, channels, 1, 1}) + ", got " +
                                 shape_str(conv_w.shape()));
        }
        if (conv_b.shape() != Shape{channels}) {
            throw DimensionError("pool conv bias must be " + shape_str({channels}) + ", got " +
                                 shape_str(conv_b.shape()));
        }
    }

    static PoolParams seeded(std::int64_t channels, SplitMix64& rng) {
        PoolParams p;
        p.conv_w = Tensor({channels, channels, 1, 1});
        for (double& x : p.conv_w.data()) x = rng.next_in(-0.5, 0.5);
        p.conv_b = Tensor({channels});
        for (double& x : p.conv_b.data()) x = rng.next_in(-0.5, 0.5);
        return p;
    }

    // Identity channel map, zero bias.
    static PoolParams identity(std::int64_t channels) {
        PoolParams p;
        p.conv_w = Tensor({channels, channels, 1, 1});
        for (std::int64_t i = 0; i < channels; ++i) p.conv_w(i, i, 0, 0) = 1.0;
        p.conv_b = Tensor({channels});
        return p;
    }
};

// Multiple scale pooling: split channels into four groups, max-pool at
// kernels 3/5/7/9 with groups 3 and 4 receiving the plain pooled output of
// the previous group before their own pooling, concat, 1x1 conv, residual.
// Constant input c with an identity 1x1 conv therefore yields group outputs
// {2c, 2c, 3c, 3c}.
inline Tensor multi_scale_pool(const Tensor& f, const PoolParams& params) {
    require_rank(f, 3, "multi_scale_pool");
    const std::int64_t c = f.extent(0);
    if (c % 4 != 0) {
        throw DimensionError("multi_scale_pool needs channels divisible by 4, got " +
                             std::to_string(c));
    }
    params.validate(c);
    const std::int64_t g = c / 4;

    const Tensor x1 = slice_channels(f, 0, g);
    const Tensor x2 = slice_channels(f, g, 2 * g);
    const Tensor x3 = slice_channels(f, 2 * g, 3 * g);
    const Tensor x4 = slice_channels(f, 3 * g, 4 * g);

    const Tensor g2 = maxpool2d(x2, 5);  // feeds group 3
    const Tensor g3 = maxpool2d(x3, 7);  // feeds group 4

    const Tensor pooled = concat_channels({maxpool2d(x1, 3), g2, maxpool2d(add(x3, g2), 7),
                                           maxpool2d(add(x4, g3), 9)});
    return add(conv2d(pooled, params.conv_w, params.conv_b), f);
}

}  // namespace evkit
