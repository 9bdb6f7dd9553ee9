#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "evkit/errors.hpp"
#include "evkit/tensor.hpp"

// Dense numeric kernels. All functions are pure; backward passes implement
// the hand-derived adjoints used by the gradient checks downstream.

namespace evkit {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             " tensor, got shape " + shape_str(t.shape()));
    }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const std::int64_t m = a.extent(0), k = a.extent(1);
    const std::int64_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw DimensionError("matmul: inner extents disagree, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
    Tensor c({m, n});
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < k; ++l) {
            const double a_il = a(i, l);
            for (std::int64_t j = 0; j < n; ++j) {
                c(i, j) += a_il * b(l, j);
            }
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    Tensor out({a.extent(1), a.extent(0)});
    for (std::int64_t i = 0; i < a.extent(0); ++i) {
        for (std::int64_t j = 0; j < a.extent(1); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

struct MatmulGrads {
    Tensor da;
    Tensor db;
};

inline MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& upstream) {
    return {matmul(upstream, transpose(b)), matmul(transpose(a), upstream)};
}

// Row softmax with max subtraction. -inf entries are mask sentinels and map
// to exactly 0; +inf or NaN entries are rejected. A row with no finite entry
// has no defined distribution and raises DegenerateRowError.
inline Tensor softmax_rows(const Tensor& scores) {
    require_rank(scores, 2, "softmax_rows");
    const std::int64_t rows = scores.extent(0), cols = scores.extent(1);
    Tensor out({rows, cols});
    for (std::int64_t r = 0; r < rows; ++r) {
        double row_max = kNegInf;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double s = scores(r, c);
            if (std::isnan(s) || s == std::numeric_limits<double>::infinity()) {
                throw NumericError("softmax_rows: non-finite score at row " + std::to_string(r) +
                                   ", col " + std::to_string(c));
            }
            row_max = std::max(row_max, s);
        }
        if (row_max == kNegInf) {
            throw DegenerateRowError("softmax_rows: row " + std::to_string(r) +
                                     " has no finite entry");
        }
        double sum = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) {
            const double e = std::exp(scores(r, c) - row_max);  // exp(-inf) == 0
            out(r, c) = e;
            sum += e;
        }
        for (std::int64_t c = 0; c < cols; ++c) out(r, c) /= sum;
    }
    return out;
}

// Adjoint of softmax_rows given its output. Entries that are exactly 0
// (masked positions) receive zero gradient, which is what the
// mask-as-constant convention requires.
inline Tensor softmax_rows_backward(const Tensor& softmax_out, const Tensor& upstream) {
    require_same_shape(softmax_out, upstream, "softmax_rows_backward");
    const std::int64_t rows = softmax_out.extent(0), cols = softmax_out.extent(1);
    Tensor ds({rows, cols});
    for (std::int64_t r = 0; r < rows; ++r) {
        double weighted = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) weighted += softmax_out(r, c) * upstream(r, c);
        for (std::int64_t c = 0; c < cols; ++c) {
            ds(r, c) = softmax_out(r, c) * (upstream(r, c) - weighted);
        }
    }
    return ds;
}

// 2-D cross-correlation with same zero padding (k-1)/2.
// input: C_in x H x W, weights: C_out x C_in x k x k, bias: C_out.
inline Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    require_rank(input, 3, "conv2d input");
    require_rank(weights, 4, "conv2d weights");
    require_rank(bias, 1, "conv2d bias");
    const std::int64_t c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::int64_t c_out = weights.extent(0), k = weights.extent(2);
    if (weights.extent(1) != c_in) {
        throw DimensionError("conv2d: weight input channels " + shape_str(weights.shape()) +
                             " do not match input " + shape_str(input.shape()));
    }
    if (weights.extent(3) != k) {
        throw DimensionError("conv2d: kernel must be square, got " + shape_str(weights.shape()));
    }
    if (k % 2 == 0) {
        throw KernelSizeError("conv2d: kernel size must be odd, got " + std::to_string(k));
    }
    if (bias.extent(0) != c_out) {
        throw DimensionError("conv2d: bias extent " + shape_str(bias.shape()) +
                             " does not match output channels " + std::to_string(c_out));
    }
    const std::int64_t pad = (k - 1) / 2;
    Tensor out({c_out, h, w});
    for (std::int64_t o = 0; o < c_out; ++o) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                double acc = bias(o);
                for (std::int64_t i = 0; i < c_in; ++i) {
                    for (std::int64_t dy = 0; dy < k; ++dy) {
                        const std::int64_t sy = y + dy - pad;
                        if (sy < 0 || sy >= h) continue;
                        for (std::int64_t dx = 0; dx < k; ++dx) {
                            const std::int64_t sx = x + dx - pad;
                            if (sx < 0 || sx >= w) continue;
                            acc += weights(o, i, dy, dx) * input(i, sy, sx);
                        }
                    }
                }
                out(o, y, x) = acc;
            }
        }
    }
    return out;
}

struct Conv2dGrads {
    Tensor dinput;
    Tensor dweights;
    Tensor dbias;
};

inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                                   const Tensor& upstream) {
    const std::int64_t c_in = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::int64_t c_out = weights.extent(0), k = weights.extent(2);
    const std::int64_t pad = (k - 1) / 2;
    Conv2dGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({c_out})};
    for (std::int64_t o = 0; o < c_out; ++o) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double up = upstream(o, y, x);
                g.dbias(o) += up;
                for (std::int64_t i = 0; i < c_in; ++i) {
                    for (std::int64_t dy = 0; dy < k; ++dy) {
                        const std::int64_t sy = y + dy - pad;
                        if (sy < 0 || sy >= h) continue;
                        for (std::int64_t dx = 0; dx < k; ++dx) {
                            const std::int64_t sx = x + dx - pad;
                            if (sx < 0 || sx >= w) continue;
                            g.dweights(o, i, dy, dx) += up * input(i, sy, sx);
                            g.dinput(i, sy, sx) += up * weights(o, i, dy, dx);
                        }
                    }
                }
            }
        }
    }
    return g;
}

// Stride-1 max pooling, shape preserving. Padding cells never win the max
// (equivalent to padding with -inf), so negative-valued feature maps pool
// correctly.
inline Tensor maxpool2d(const Tensor& input, std::int64_t k) {
    require_rank(input, 3, "maxpool2d input");
    if (k < 1 || k % 2 == 0) {
        throw KernelSizeError("maxpool2d: kernel size must be odd and >= 1, got " +
                              std::to_string(k));
    }
    const std::int64_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    const std::int64_t pad = (k - 1) / 2;
    Tensor out({c, h, w});
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = 0; y < h; ++y) {
            const std::int64_t y0 = std::max<std::int64_t>(0, y - pad);
            const std::int64_t y1 = std::min(h - 1, y + pad);
            for (std::int64_t x = 0; x < w; ++x) {
                const std::int64_t x0 = std::max<std::int64_t>(0, x - pad);
                const std::int64_t x1 = std::min(w - 1, x + pad);
                double m = kNegInf;
                for (std::int64_t sy = y0; sy <= y1; ++sy) {
                    for (std::int64_t sx = x0; sx <= x1; ++sx) {
                        m = std::max(m, input(ch, sy, sx));
                    }
                }
                out(ch, y, x) = m;
            }
        }
    }
    return out;
}

// Inference-mode batch normalization: statistics and affine parameters are
// explicit per-channel inputs, no running state.
inline Tensor batchnorm(const Tensor& input, const Tensor& mean, const Tensor& var,
                        const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    require_rank(input, 3, "batchnorm input");
    const std::int64_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    for (const Tensor* param : {&mean, &var, &gamma, &beta}) {
        require_rank(*param, 1, "batchnorm parameter");
        if (param->extent(0) != c) {
            throw DimensionError("batchnorm: parameter extent " + shape_str(param->shape()) +
                                 " does not match " + std::to_string(c) + " channels");
        }
    }
    if (eps < 0.0) {
        throw StatisticsError("batchnorm: eps must be >= 0, got " + std::to_string(eps));
    }
    Tensor out(input.shape());
    for (std::int64_t ch = 0; ch < c; ++ch) {
        if (var(ch) < 0.0) {
            throw StatisticsError("batchnorm: negative variance " + std::to_string(var(ch)) +
                                  " at channel " + std::to_string(ch));
        }
        const double inv = 1.0 / std::sqrt(var(ch) + eps);
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                out(ch, y, x) = gamma(ch) * (input(ch, y, x) - mean(ch)) * inv + beta(ch);
            }
        }
    }
    return out;
}

struct BatchnormGrads {
    Tensor dinput;
    Tensor dgamma;
    Tensor dbeta;
};

// Statistics are constants here, so the adjoint is per-channel affine.
inline BatchnormGrads batchnorm_backward(const Tensor& input, const Tensor& mean,
                                         const Tensor& var, const Tensor& gamma, double eps,
                                         const Tensor& upstream) {
    const std::int64_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
    BatchnormGrads g{Tensor(input.shape()), Tensor({c}), Tensor({c})};
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double inv = 1.0 / std::sqrt(var(ch) + eps);
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                const double up = upstream(ch, y, x);
                g.dinput(ch, y, x) = up * gamma(ch) * inv;
                g.dgamma(ch) += up * (input(ch, y, x) - mean(ch)) * inv;
                g.dbeta(ch) += up;
            }
        }
    }
    return g;
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& x : out.data()) x = std::max(0.0, x);
    return out;
}

inline Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
    require_same_shape(input, upstream, "relu_backward");
    Tensor out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (input.flat(i) <= 0.0) out.flat(i) = 0.0;
    }
    return out;
}

}  // namespace evkit
