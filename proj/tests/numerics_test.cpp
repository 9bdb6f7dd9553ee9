#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "evkit/grad_check.hpp"
#include "evkit/numerics.hpp"
#include "evkit/rng.hpp"

using namespace evkit;

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.data()) x = rng.next_in(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand sums") {
    SplitMix64 rng(1);
    const Tensor m = random_tensor({3, 3}, rng);
    CHECK(matmul(Tensor::identity(3), m) == m);

    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {1, 1});
    const Tensor c = matmul(a, b);
    CHECK(c(0, 0) == 3.0);
    CHECK(c(1, 0) == 7.0);

    CHECK_THROWS_AS(matmul(a, Tensor({3, 2})), DimensionError);
    CHECK_THROWS_WITH(matmul(a, Tensor({3, 2})),
                      Catch::Matchers::ContainsSubstring("[2x2]") &&
                          Catch::Matchers::ContainsSubstring("[3x2]"));
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
    SplitMix64 rng(2);
    const Tensor a = random_tensor({5, 7}, rng);
    const Tensor b = random_tensor({7, 4}, rng);
    const Tensor c = matmul(a, b);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) {
            double want = 0.0;
            for (int l = 0; l < 7; ++l) want += a(i, l) * b(l, j);
            CHECK(std::abs(c(i, j) - want) <= 1e-12);
        }
    }
}

TEST_CASE("softmax symmetry, masking and the formula oracle") {
    const Tensor uniform = softmax_rows(Tensor({1, 3}));
    for (int c = 0; c < 3; ++c) CHECK(uniform(0, c) == Catch::Approx(1.0 / 3.0).margin(1e-15));

    const Tensor masked = softmax_rows(Tensor({1, 2}, {0.7, kNegInf}));
    CHECK(masked(0, 0) == 1.0);
    CHECK(masked(0, 1) == 0.0);

    SplitMix64 rng(3);
    const Tensor row = random_tensor({1, 9}, rng, -4.0, 4.0);
    const Tensor got = softmax_rows(row);
    double max = row(0, 0);
    for (int c = 1; c < 9; ++c) max = std::max(max, row(0, c));
    double sum = 0.0;
    for (int c = 0; c < 9; ++c) sum += std::exp(row(0, c) - max);
    for (int c = 0; c < 9; ++c) {
        CHECK(std::abs(got(0, c) - std::exp(row(0, c) - max) / sum) <= 1e-12);
    }
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    SplitMix64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor scores = random_tensor({4, 6}, rng, -3.0, 3.0);
        const Tensor p = softmax_rows(scores);
        Tensor shifted = scores;
        for (int r = 0; r < 4; ++r) {
            const double s = rng.next_in(-10.0, 10.0);
            for (int c = 0; c < 6; ++c) shifted(r, c) += s;
        }
        const Tensor q = softmax_rows(shifted);
        for (int r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 6; ++c) sum += p(r, c);
            CHECK(std::abs(sum - 1.0) <= 1e-9);
            for (int c = 0; c < 6; ++c) CHECK(std::abs(p(r, c) - q(r, c)) <= 1e-9);
        }
    }
}

TEST_CASE("softmax rejects degenerate and non-finite rows") {
    CHECK_THROWS_AS(softmax_rows(Tensor({1, 2}, {kNegInf, kNegInf})), DegenerateRowError);
    CHECK_THROWS_AS(softmax_rows(Tensor({1, 1}, {std::numeric_limits<double>::quiet_NaN()})),
                    NumericError);
    CHECK_THROWS_AS(softmax_rows(Tensor({1, 1}, {std::numeric_limits<double>::infinity()})),
                    NumericError);
}

TEST_CASE("conv2d identity, hand counts and padding") {
    SplitMix64 rng(5);
    const Tensor input = random_tensor({2, 4, 5}, rng);

    // 1x1 identity weights, zero bias
    Tensor w({2, 2, 1, 1});
    w(0, 0, 0, 0) = 1.0;
    w(1, 1, 0, 0) = 1.0;
    CHECK(conv2d(input, w, Tensor({2})) == input);

    // 3x3 all-ones kernel over an all-ones 3x3 single-channel input
    const Tensor ones = Tensor::full({1, 3, 3}, 1.0);
    const Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor out = conv2d(ones, kernel, Tensor({1}));
    CHECK(out(0, 1, 1) == 9.0);
    CHECK(out(0, 0, 0) == 4.0);
    CHECK(out(0, 2, 2) == 4.0);
    CHECK(out(0, 0, 1) == 6.0);
    CHECK(out(0, 1, 0) == 6.0);

    CHECK_THROWS_AS(conv2d(ones, Tensor({1, 1, 2, 2}), Tensor({1})), KernelSizeError);
    CHECK_THROWS_AS(conv2d(ones, Tensor({1, 3, 3, 3}), Tensor({1})), DimensionError);
}

TEST_CASE("conv2d agrees with the sliding-window oracle") {
    SplitMix64 rng(6);
    const Tensor input = random_tensor({3, 6, 5}, rng);
    const Tensor weights = random_tensor({4, 3, 3, 3}, rng);
    const Tensor bias = random_tensor({4}, rng);
    const Tensor got = conv2d(input, weights, bias);
    REQUIRE(got.shape() == Shape{4, 6, 5});

    for (int o = 0; o < 4; ++o) {
        for (int y = 0; y < 6; ++y) {
            for (int x = 0; x < 5; ++x) {
                double want = bias(o);
                for (int i = 0; i < 3; ++i) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int sy = y + dy, sx = x + dx;
                            if (sy < 0 || sy >= 6 || sx < 0 || sx >= 5) continue;
                            want += weights(o, i, dy + 1, dx + 1) * input(i, sy, sx);
                        }
                    }
                }
                CHECK(std::abs(got(o, y, x) - want) <= 1e-10);
            }
        }
    }
}

TEST_CASE("maxpool constants, spike dilation and the window-scan oracle") {
    const Tensor constant = Tensor::full({2, 4, 4}, 3.5);
    CHECK(maxpool2d(constant, 3) == constant);

    Tensor spike({1, 5, 5});
    spike(0, 2, 2) = 1.0;
    const Tensor dilated = maxpool2d(spike, 3);
    for (int y = 0; y < 5; ++y) {
        for (int x = 0; x < 5; ++x) {
            const bool in_block = std::abs(y - 2) <= 1 && std::abs(x - 2) <= 1;
            CHECK(dilated(0, y, x) == (in_block ? 1.0 : 0.0));
        }
    }

    SplitMix64 rng(7);
    for (const std::int64_t k : {3, 5, 7, 9}) {
        const Tensor input = random_tensor({2, 6, 7}, rng, -2.0, 2.0);
        const Tensor got = maxpool2d(input, k);
        REQUIRE(got.shape() == input.shape());
        const std::int64_t pad = (k - 1) / 2;
        for (int c = 0; c < 2; ++c) {
            for (int y = 0; y < 6; ++y) {
                for (int x = 0; x < 7; ++x) {
                    double want = kNegInf;
                    for (std::int64_t sy = y - pad; sy <= y + pad; ++sy) {
                        for (std::int64_t sx = x - pad; sx <= x + pad; ++sx) {
                            if (sy < 0 || sy >= 6 || sx < 0 || sx >= 7) continue;
                            want = std::max(want, input(static_cast<std::int64_t>(c), sy, sx));
                        }
                    }
                    CHECK(got(c, y, x) == want);
                }
            }
        }
    }

    CHECK_THROWS_AS(maxpool2d(constant, 4), KernelSizeError);
}

TEST_CASE("maxpool padding never wins on negative maps") {
    const Tensor negative = Tensor::full({1, 3, 3}, -2.0);
    CHECK(maxpool2d(negative, 3) == negative);  // zero padding would give 0 at the border
}

TEST_CASE("maxpool is monotone") {
    SplitMix64 rng(8);
    const Tensor x = random_tensor({1, 5, 5}, rng);
    Tensor y = x;
    for (double& v : y.data()) v += rng.next_in(0.0, 1.0);
    const Tensor px = maxpool2d(x, 5);
    const Tensor py = maxpool2d(y, 5);
    for (std::size_t i = 0; i < px.size(); ++i) CHECK(px.flat(i) <= py.flat(i));
}

TEST_CASE("batchnorm identity, centering and the formula oracle") {
    SplitMix64 rng(9);
    const Tensor x = random_tensor({2, 3, 3}, rng);
    const Tensor zero({2});
    const Tensor one = Tensor::full({2}, 1.0);

    CHECK(batchnorm(x, zero, one, one, zero, 0.0) == x);

    // x == mean -> output == beta
    const Tensor mean({2}, {0.3, -0.7});
    Tensor centered({2, 2, 2});
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 4; ++i) centered.flat(static_cast<std::size_t>(c * 4 + i)) = mean(c);
    }
    const Tensor beta({2}, {5.0, -5.0});
    const Tensor bn = batchnorm(centered, mean, one, one, beta);
    for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < 2; ++y) {
            for (int x2 = 0; x2 < 2; ++x2) CHECK(bn(c, y, x2) == beta(c));
        }
    }

    const Tensor var = random_tensor({2}, rng, 0.1, 2.0);
    const Tensor gamma = random_tensor({2}, rng);
    const Tensor b2 = random_tensor({2}, rng);
    const double eps = 1e-5;
    const Tensor got = batchnorm(x, mean, var, gamma, b2, eps);
    for (int c = 0; c < 2; ++c) {
        for (int y = 0; y < 3; ++y) {
            for (int x2 = 0; x2 < 3; ++x2) {
                const double want =
                    gamma(c) * (x(c, y, x2) - mean(c)) / std::sqrt(var(c) + eps) + b2(c);
                CHECK(std::abs(got(c, y, x2) - want) <= 1e-12);
            }
        }
    }

    CHECK_THROWS_AS(batchnorm(x, zero, Tensor({2}, {-0.1, 1.0}), one, zero), StatisticsError);
}

TEST_CASE("relu examples and idempotence") {
    const Tensor t({3}, {-1.0, 0.0, 2.0});
    const Tensor r = relu(t);
    CHECK(r == Tensor({3}, {0.0, 0.0, 2.0}));
    CHECK(relu(Tensor({2}, {-3.0, -0.5})) == Tensor({2}));
    CHECK(relu(r) == r);
}

TEST_CASE("grad_check on quadratic and constant readouts") {
    SplitMix64 rng(10);
    Tensor x = random_tensor({3, 2}, rng);

    const auto quadratic = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data()) s += v * v;
        return s;
    };
    CHECK(grad_check(quadratic, x, scale(x, 2.0)) <= 1e-7);

    const auto constant = [](const Tensor&) { return 4.2; };
    CHECK(grad_check(constant, x, Tensor(x.shape())) <= 1e-9);

    const auto bad = [](const Tensor& t) { return std::sqrt(t.flat(0) - 1e9); };
    CHECK_THROWS_AS(grad_check(bad, x, Tensor(x.shape())), NumericError);
}

TEST_CASE("grad_check validates kernel adjoints") {
    SplitMix64 rng(11);

    SECTION("matmul") {
        const Tensor a = random_tensor({3, 4}, rng);
        const Tensor b = random_tensor({4, 2}, rng);
        const Tensor upstream = random_tensor({3, 2}, rng);
        const MatmulGrads g = matmul_backward(a, b, upstream);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, matmul(t, b)); }, a, g.da) <=
              1e-5);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, matmul(a, t)); }, b, g.db) <=
              1e-5);
    }

    SECTION("softmax") {
        const Tensor scores = random_tensor({3, 5}, rng);
        const Tensor upstream = random_tensor({3, 5}, rng);
        const Tensor ds = softmax_rows_backward(softmax_rows(scores), upstream);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, softmax_rows(t)); }, scores,
                         ds) <= 1e-5);
    }

    SECTION("conv2d") {
        const Tensor input = random_tensor({2, 4, 4}, rng);
        const Tensor weights = random_tensor({3, 2, 3, 3}, rng);
        const Tensor bias = random_tensor({3}, rng);
        const Tensor upstream = random_tensor({3, 4, 4}, rng);
        const Conv2dGrads g = conv2d_backward(input, weights, upstream);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, conv2d(t, weights, bias)); },
                         input, g.dinput) <= 1e-5);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, conv2d(input, t, bias)); },
                         weights, g.dweights) <= 1e-5);
        CHECK(grad_check([&](const Tensor& t) { return dot(upstream, conv2d(input, weights, t)); },
                         bias, g.dbias) <= 1e-5);
    }

    SECTION("batchnorm") {
        const Tensor input = random_tensor({2, 3, 3}, rng);
        const Tensor mean = random_tensor({2}, rng);
        const Tensor var = random_tensor({2}, rng, 0.5, 1.5);
        const Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
        const Tensor beta = random_tensor({2}, rng);
        const Tensor upstream = random_tensor({2, 3, 3}, rng);
        const double eps = 1e-5;
        const BatchnormGrads g = batchnorm_backward(input, mean, var, gamma, eps, upstream);
        CHECK(grad_check(
                  [&](const Tensor& t) {
                      return dot(upstream, batchnorm(t, mean, var, gamma, beta, eps));
                  },
                  input, g.dinput) <= 1e-5);
        CHECK(grad_check(
                  [&](const Tensor& t) {
                      return dot(upstream, batchnorm(input, mean, var, t, beta, eps));
                  },
                  gamma, g.dgamma) <= 1e-5);
        CHECK(grad_check(
                  [&](const Tensor& t) {
                      return dot(upstream, batchnorm(input, mean, var, gamma, t, eps));
                  },
                  beta, g.dbeta) <= 1e-5);
    }
}
