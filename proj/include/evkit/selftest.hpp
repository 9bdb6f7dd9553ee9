#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evkit/accumulator.hpp"
#include "evkit/codec.hpp"
#include "evkit/des.hpp"
#include "evkit/esa.hpp"
#include "evkit/grad_check.hpp"
#include "evkit/pipeline.hpp"
#include "evkit/rng.hpp"
#include "evkit/stme.hpp"

// The acceptance suite: every check pits a library code path against an
// independently coded brute-force oracle, a frozen golden value, or a
// central-difference gradient. The oracles here deliberately avoid the
// Tensor kernels and work on plain vectors so that both routes stay
// independent.

namespace evkit::selftest {

struct CheckResult {
    std::string id;
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace oracle {

// --- straight-line sparse attention reference -------------------------------
// Explicit score loops, repeated max-scan selection, explicit softmax and
// explicit output matmul. No Tensor ops.

using Matrix = std::vector<std::vector<double>>;

inline Matrix reference_scores(const Matrix& q, const Matrix& k, std::size_t d) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix s(q.size(), std::vector<double>(k.size(), 0.0));
    for (std::size_t i = 0; i < q.size(); ++i) {
        for (std::size_t j = 0; j < k.size(); ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < d; ++l) acc += q[i][l] * k[j][l];
            s[i][j] = acc * inv;
        }
    }
    return s;
}

// Top-K of one row by K repeated scans for the strictly largest unpicked
// entry; the first (lowest-index) occurrence wins each scan.
inline std::vector<bool> reference_topk_row(const std::vector<double>& row, std::size_t k) {
    std::vector<bool> picked(row.size(), false);
    for (std::size_t pick = 0; pick < k; ++pick) {
        std::size_t best = row.size();
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (picked[j]) continue;
            if (best == row.size() || row[j] > row[best]) best = j;
        }
        picked[best] = true;
    }
    return picked;
}

inline std::size_t reference_top_k_count(double fraction, std::size_t len) {
    const std::size_t k =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(len)));
    return std::max<std::size_t>(1, std::min(k, len));
}

inline Matrix reference_sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                         const std::vector<double>& fractions,
                                         const std::vector<double>& lambdas) {
    const std::size_t lq = q.size(), lk = k.size(), d = q.front().size();
    const std::size_t dv = v.front().size();
    const Matrix s = reference_scores(q, k, d);

    Matrix combined(lq, std::vector<double>(lk, 0.0));
    for (std::size_t level = 0; level < fractions.size(); ++level) {
        const std::size_t kk = reference_top_k_count(fractions[level], lk);
        for (std::size_t i = 0; i < lq; ++i) {
            const std::vector<bool> picked = reference_topk_row(s[i], kk);
            // softmax over the picked entries only
            double row_max = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < lk; ++j) {
                if (picked[j]) row_max = std::max(row_max, s[i][j]);
            }
            std::vector<double> e(lk, 0.0);
            double sum = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
                if (picked[j]) {
                    e[j] = std::exp(s[i][j] - row_max);
                    sum += e[j];
                }
            }
            for (std::size_t j = 0; j < lk; ++j) {
                combined[i][j] += lambdas[level] * (e[j] / sum);
            }
        }
    }

    Matrix out(lq, std::vector<double>(dv, 0.0));
    for (std::size_t i = 0; i < lq; ++i) {
        for (std::size_t j = 0; j < lk; ++j) {
            for (std::size_t c = 0; c < dv; ++c) out[i][c] += combined[i][j] * v[j][c];
        }
    }
    return out;
}

// --- naive multi-scale pooling cascade ---------------------------------------

inline double window_max(const Tensor& t, std::int64_t ch, std::int64_t y, std::int64_t x,
                         std::int64_t k) {
    const std::int64_t pad = (k - 1) / 2;
    double m = -std::numeric_limits<double>::infinity();
    for (std::int64_t sy = y - pad; sy <= y + pad; ++sy) {
        for (std::int64_t sx = x - pad; sx <= x + pad; ++sx) {
            if (sy < 0 || sy >= t.extent(1) || sx < 0 || sx >= t.extent(2)) continue;
            m = std::max(m, t(ch, sy, sx));
        }
    }
    return m;
}

inline Tensor naive_multi_scale_pool(const Tensor& f, const Tensor& conv_w,
                                     const Tensor& conv_b) {
    const std::int64_t c = f.extent(0), h = f.extent(1), w = f.extent(2);
    const std::int64_t g = c / 4;
    const std::int64_t kernels[4] = {3, 5, 7, 9};

    // plain per-group poolings; groups 2 and 3 feed the next group's input
    Tensor concat({c, h, w});
    for (std::int64_t grp = 0; grp < 4; ++grp) {
        for (std::int64_t gc = 0; gc < g; ++gc) {
            const std::int64_t ch = grp * g + gc;
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    double val;
                    if (grp < 2) {
                        val = window_max(f, ch, y, x, kernels[grp]);
                    } else {
                        // input channel = this group's slice plus the plain
                        // pooled previous group
                        Tensor cell({1, h, w});
                        for (std::int64_t yy = 0; yy < h; ++yy) {
                            for (std::int64_t xx = 0; xx < w; ++xx) {
                                cell(0, yy, xx) =
                                    f(ch, yy, xx) +
                                    window_max(f, (grp - 1) * g + gc, yy, xx, kernels[grp - 1]);
                            }
                        }
                        val = window_max(cell, 0, y, x, kernels[grp]);
                    }
                    concat(ch, y, x) = val;
                }
            }
        }
    }

    Tensor out({c, h, w});
    for (std::int64_t o = 0; o < c; ++o) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                double acc = conv_b(o);
                for (std::int64_t i = 0; i < c; ++i) acc += conv_w(o, i, 0, 0) * concat(i, y, x);
                out(o, y, x) = acc + f(o, y, x);
            }
        }
    }
    return out;
}

}  // namespace oracle

namespace detail {

inline Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& x : t.data()) x = rng.next_in(lo, hi);
    return t;
}

inline EventStream random_stream(SplitMix64& rng, std::size_t count, const SensorGeometry& geom,
                                 std::int64_t t_lo, std::int64_t t_hi) {
    EventStream s;
    s.geom = geom;
    s.events.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Event e;
        e.t = t_lo + static_cast<std::int64_t>(
                         rng.next_below(static_cast<std::uint64_t>(t_hi - t_lo + 1)));
        e.x = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(geom.width)));
        e.y = static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(geom.height)));
        e.p = rng.next_below(2) == 0 ? std::int8_t{1} : std::int8_t{-1};
        s.events.push_back(e);
    }
    sort_events_stable(s.events);
    return s;
}

// Smallest gap between the K-th and (K+1)-th largest scores over all rows and
// levels; gradient checks demand a comfortable margin so that central
// differences cannot flip the selection.
inline double min_boundary_gap(const Tensor& scores, const SparsityConfig& cfg) {
    const std::int64_t rows = scores.extent(0), cols = scores.extent(1);
    double min_gap = std::numeric_limits<double>::infinity();
    std::vector<double> row(static_cast<std::size_t>(cols));
    for (double f : cfg.fractions) {
        const std::int64_t k = top_k_count(f, cols);
        if (k == cols) continue;
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t c = 0; c < cols; ++c) row[static_cast<std::size_t>(c)] = scores(r, c);
            std::sort(row.begin(), row.end(), std::greater<>());
            min_gap = std::min(min_gap, row[static_cast<std::size_t>(k - 1)] -
                                            row[static_cast<std::size_t>(k)]);
        }
    }
    return min_gap;
}

struct Failure {
    bool failed = false;
    std::string message;

    void record(const std::string& msg) {
        if (!failed) {
            failed = true;
            message = msg;
        }
    }
};

}  // namespace detail

// AC1: split conservation, disjointness and ordering over randomized streams.
inline CheckResult check_des_conservation() {
    const auto started = std::chrono::steady_clock::now();
    SplitMix64 rng(0xAC01);
    const SensorGeometry geom{64, 48};
    const std::int64_t n_choices[] = {1, 2, 3, 5, 8};
    detail::Failure fail;

    for (int trial = 0; trial < 1000 && !fail.failed; ++trial) {
        const std::size_t count = rng.next_below(10001);
        const std::int64_t n = n_choices[rng.next_below(5)];
        const std::int64_t start = static_cast<std::int64_t>(rng.next_below(1000));
        const std::int64_t span = n + static_cast<std::int64_t>(rng.next_below(100000));
        const std::int64_t end = start + span;
        // quarter-window margins on both sides so some events drop
        const EventStream stream =
            detail::random_stream(rng, count, geom, std::max<std::int64_t>(0, start - span / 4),
                                  end + span / 4);
        const EventClusterSet cs = split(stream, {start, end, n});

        std::size_t total = cs.dropped();
        for (std::size_t i = 0; i < cs.cluster_count(); ++i) total += cs.cluster(i).size();
        if (total != stream.events.size()) {
            fail.record("trial " + std::to_string(trial) + ": cluster sizes + dropped = " +
                        std::to_string(total) + " != " + std::to_string(stream.events.size()));
            break;
        }

        const auto& b = cs.boundaries();
        for (std::size_t i = 0; i + 1 < b.size(); ++i) {
            if (b[i] >= b[i + 1]) {
                fail.record("trial " + std::to_string(trial) + ": boundaries not increasing");
            }
        }

        // oracle: independent per-event boundary scan
        std::vector<std::vector<Event>> expected(static_cast<std::size_t>(n));
        for (const Event& e : stream.events) {
            if (e.t < start || e.t > end) continue;
            std::size_t bin = static_cast<std::size_t>(n) - 1;
            for (std::size_t i = 0; i + 1 < b.size(); ++i) {
                if (e.t >= b[i] && (e.t < b[i + 1] || i + 2 == b.size())) {
                    bin = i;
                    break;
                }
            }
            expected[bin].push_back(e);
        }
        for (std::size_t i = 0; i < cs.cluster_count() && !fail.failed; ++i) {
            const auto got = cs.cluster(i);
            if (!std::equal(got.begin(), got.end(), expected[i].begin(), expected[i].end())) {
                fail.record("trial " + std::to_string(trial) + ": cluster " + std::to_string(i) +
                            " disagrees with boundary-scan oracle");
            }
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CheckResult r{"AC1", "DES conservation / disjointness (1000 streams)", !fail.failed, ""};
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << elapsed << "s";
    if (elapsed >= 10.0) {
        r.pass = false;
        fail.record("runtime " + os.str() + " exceeds 10s budget");
    }
    r.detail = fail.failed ? fail.message : os.str();
    return r;
}

// AC2: summing the n subframe count grids reproduces the single-frame grid.
inline CheckResult check_split_accumulate_additivity() {
    const auto started = std::chrono::steady_clock::now();
    SplitMix64 rng(0xAC02);
    const SensorGeometry geom{32, 24};
    const std::int64_t n_choices[] = {2, 3, 5};
    detail::Failure fail;

    for (int trial = 0; trial < 200 && !fail.failed; ++trial) {
        const std::size_t count = rng.next_below(2001);
        const std::int64_t n = n_choices[rng.next_below(3)];
        const std::int64_t start = 0;
        const std::int64_t end = n + static_cast<std::int64_t>(rng.next_below(5000));
        const EventStream stream = detail::random_stream(rng, count, geom, 0, end + end / 3);
        const EventClusterSet cs = split(stream, {start, end, n});
        const EventClusterSet single = split_to_single(stream, {start, end, n});

        std::vector<std::int64_t> summed(static_cast<std::size_t>(geom.width * geom.height), 0);
        for (std::size_t i = 0; i < cs.cluster_count(); ++i) {
            const EventFrame f = accumulate(cs.cluster(i), geom);
            for (std::size_t j = 0; j < summed.size(); ++j) summed[j] += f.counts[j];
        }
        const EventFrame whole = accumulate(single.cluster(0), geom);
        if (summed != whole.counts) {
            fail.record("trial " + std::to_string(trial) +
                        ": summed subframe grids differ from the single-frame grid");
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CheckResult r{"AC2", "split/accumulate additivity (200 fixtures)", !fail.failed, ""};
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << elapsed << "s";
    if (elapsed >= 10.0) {
        r.pass = false;
        fail.record("runtime " + os.str() + " exceeds 10s budget");
    }
    r.detail = fail.failed ? fail.message : os.str();
    return r;
}

// AC3: topk_mask against the full-sort oracle, tie cases included.
inline CheckResult check_topk_oracle() {
    SplitMix64 rng(0xAC03);
    const double fractions[] = {0.5, 2.0 / 3.0, 0.75, 0.8, 1.0};
    detail::Failure fail;

    for (int trial = 0; trial < 10000 && !fail.failed; ++trial) {
        const std::int64_t len = 1 + static_cast<std::int64_t>(rng.next_below(64));
        const double fraction = fractions[rng.next_below(5)];
        Tensor scores({1, len});
        const bool discrete = rng.next_below(2) == 0;  // force ties half the time
        for (std::int64_t c = 0; c < len; ++c) {
            scores(0, c) = discrete ? -0.5 + 0.25 * static_cast<double>(rng.next_below(5))
                                    : rng.next_in(-1.0, 1.0);
        }
        const Tensor mask = topk_mask(scores, fraction);

        // full-sort oracle: indices ordered by (score desc, column asc)
        const std::size_t k = oracle::reference_top_k_count(fraction, static_cast<std::size_t>(len));
        std::vector<std::size_t> order(static_cast<std::size_t>(len));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores(0, static_cast<std::int64_t>(a)) != scores(0, static_cast<std::int64_t>(b)))
                return scores(0, static_cast<std::int64_t>(a)) >
                       scores(0, static_cast<std::int64_t>(b));
            return a < b;
        });
        std::set<std::size_t> expected(order.begin(), order.begin() + static_cast<long>(k));

        std::size_t ones = 0;
        for (std::int64_t c = 0; c < len; ++c) {
            const bool kept = mask(0, c) == 1.0;
            if (kept) ++ones;
            if (kept != expected.contains(static_cast<std::size_t>(c))) {
                fail.record("trial " + std::to_string(trial) + ": mask disagrees at column " +
                            std::to_string(c));
                break;
            }
        }
        if (!fail.failed && ones != k) {
            fail.record("trial " + std::to_string(trial) + ": mask has " + std::to_string(ones) +
                        " ones, expected " + std::to_string(k));
        }
    }

    return {"AC3", "top-K mask vs full-sort oracle (10000 rows)", !fail.failed,
            fail.failed ? fail.message : "exact"};
}

// AC4: fraction-1.0 sparse attention equals dense attention.
inline CheckResult check_dense_equivalence() {
    SplitMix64 rng(0xAC04);
    detail::Failure fail;
    double worst = 0.0;

    for (int trial = 0; trial < 500 && !fail.failed; ++trial) {
        const std::int64_t lq = 1 + static_cast<std::int64_t>(rng.next_below(16));
        const std::int64_t lk = 1 + static_cast<std::int64_t>(rng.next_below(16));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.next_below(8));
        const Tensor q = detail::random_tensor({lq, d}, rng);
        const Tensor k = detail::random_tensor({lk, d}, rng);
        const Tensor v = detail::random_tensor({lk, d}, rng);
        const double diff =
            max_abs_diff(sparse_attention(q, k, v, SparsityConfig::dense()),
                         dense_attention(q, k, v));
        worst = std::max(worst, diff);
        if (diff > 1e-9) {
            fail.record("trial " + std::to_string(trial) + ": diff " + std::to_string(diff));
        }
    }

    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << "max diff " << worst;
    return {"AC4", "fraction-1.0 equals dense attention (500 instances)", !fail.failed,
            fail.failed ? fail.message : os.str()};
}

// AC5: the 4-level default ESA config against the straight-line reference.
inline CheckResult check_esa_brute_force() {
    SplitMix64 rng(0xAC05);
    const SparsityConfig cfg = SparsityConfig::defaults();
    detail::Failure fail;
    double worst = 0.0;

    for (int trial = 0; trial < 500 && !fail.failed; ++trial) {
        const std::size_t lq = 1 + rng.next_below(12);
        const std::size_t lk = 1 + rng.next_below(12);
        const std::size_t d = 1 + rng.next_below(6);
        oracle::Matrix q(lq, std::vector<double>(d));
        oracle::Matrix k(lk, std::vector<double>(d));
        oracle::Matrix v(lk, std::vector<double>(d));
        for (auto& row : q)
            for (double& x : row) x = rng.next_in(-1.0, 1.0);
        for (auto& row : k)
            for (double& x : row) x = rng.next_in(-1.0, 1.0);
        for (auto& row : v)
            for (double& x : row) x = rng.next_in(-1.0, 1.0);

        auto to_tensor = [](const oracle::Matrix& m) {
            Tensor t({static_cast<std::int64_t>(m.size()),
                      static_cast<std::int64_t>(m.front().size())});
            for (std::size_t i = 0; i < m.size(); ++i)
                for (std::size_t j = 0; j < m[i].size(); ++j)
                    t(static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) = m[i][j];
            return t;
        };
        const Tensor out = sparse_attention(to_tensor(q), to_tensor(k), to_tensor(v), cfg);
        const oracle::Matrix ref =
            oracle::reference_sparse_attention(q, k, v, cfg.fractions, cfg.lambdas);

        for (std::size_t i = 0; i < lq; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = std::abs(
                    out(static_cast<std::int64_t>(i), static_cast<std::int64_t>(c)) - ref[i][c]);
                worst = std::max(worst, diff);
                if (diff > 1e-10) {
                    fail.record("trial " + std::to_string(trial) + ": diff " +
                                std::to_string(diff) + " at (" + std::to_string(i) + "," +
                                std::to_string(c) + ")");
                }
            }
        }
    }

    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << "max diff " << worst;
    return {"AC5", "4-level ESA vs brute-force reference (500 instances)", !fail.failed,
            fail.failed ? fail.message : os.str()};
}

// AC6: per-level row-stochasticity, exact off-support zeros, support nesting.
inline CheckResult check_row_stochasticity() {
    SplitMix64 rng(0xAC06);
    const SparsityConfig cfg = SparsityConfig::defaults();  // fractions ascend
    detail::Failure fail;

    for (int trial = 0; trial < 200 && !fail.failed; ++trial) {
        const std::int64_t lq = 1 + static_cast<std::int64_t>(rng.next_below(10));
        const std::int64_t lk = 1 + static_cast<std::int64_t>(rng.next_below(10));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.next_below(5));
        const Tensor q = detail::random_tensor({lq, d}, rng);
        const Tensor k = detail::random_tensor({lk, d}, rng);
        const Tensor v = detail::random_tensor({lk, d}, rng);
        const SparseAttentionDetail det = sparse_attention_detail(q, k, v, cfg);

        for (std::size_t level = 0; level < cfg.levels() && !fail.failed; ++level) {
            const Tensor& attn = det.attn[level];
            const Tensor& mask = det.masks[level];
            for (std::int64_t r = 0; r < lq; ++r) {
                double sum = 0.0;
                for (std::int64_t c = 0; c < lk; ++c) {
                    sum += attn(r, c);
                    if (mask(r, c) == 0.0 && attn(r, c) != 0.0) {
                        fail.record("trial " + std::to_string(trial) +
                                    ": nonzero attention off support");
                    }
                    if (mask(r, c) == 1.0 && attn(r, c) <= 0.0) {
                        fail.record("trial " + std::to_string(trial) +
                                    ": non-positive attention on support");
                    }
                }
                if (std::abs(sum - 1.0) > 1e-9) {
                    fail.record("trial " + std::to_string(trial) + ": row sum " +
                                std::to_string(sum));
                }
            }
            if (level > 0) {
                const Tensor& prev = det.masks[level - 1];
                for (std::size_t j = 0; j < mask.size(); ++j) {
                    if (prev.flat(j) == 1.0 && mask.flat(j) == 0.0) {
                        fail.record("trial " + std::to_string(trial) +
                                    ": support not nested between levels");
                        break;
                    }
                }
            }
        }
    }

    return {"AC6", "row-stochasticity and support nesting (200 instances)", !fail.failed,
            fail.failed ? fail.message : "within 1e-9"};
}

// AC7: analytic gradients of sparse_attention and stme_forward vs central
// differences at non-tied points.
inline CheckResult check_gradients() {
    const auto started = std::chrono::steady_clock::now();
    SplitMix64 rng(0xAC07);
    detail::Failure fail;
    double worst = 0.0;
    const double tol = 1e-5;
    const double gap_margin = 1e-3;

    // sparse attention: 50 non-tied instances
    for (int done = 0; done < 50 && !fail.failed;) {
        const std::int64_t lq = 3 + static_cast<std::int64_t>(rng.next_below(6));
        const std::int64_t lk = 3 + static_cast<std::int64_t>(rng.next_below(6));
        const std::int64_t d = 2 + static_cast<std::int64_t>(rng.next_below(4));
        SparsityConfig cfg = SparsityConfig::defaults();
        for (double& l : cfg.lambdas) l = rng.next_in(0.1, 0.9);
        const Tensor q = detail::random_tensor({lq, d}, rng);
        const Tensor k = detail::random_tensor({lk, d}, rng);
        const Tensor v = detail::random_tensor({lk, d}, rng);
        if (detail::min_boundary_gap(attention_scores(q, k), cfg) < gap_margin) continue;
        ++done;

        const Tensor upstream = detail::random_tensor({lq, d}, rng);
        const SparseAttentionGrads g = sparse_attention_grads(q, k, v, cfg, upstream);
        if (g.boundary_tie) {
            fail.record("sparse instance flagged a tie after the gap filter");
            break;
        }

        const double eq = grad_check(
            [&](const Tensor& x) { return dot(upstream, sparse_attention(x, k, v, cfg)); }, q,
            g.dq);
        const double ek = grad_check(
            [&](const Tensor& x) { return dot(upstream, sparse_attention(q, x, v, cfg)); }, k,
            g.dk);
        const double ev = grad_check(
            [&](const Tensor& x) { return dot(upstream, sparse_attention(q, k, x, cfg)); }, v,
            g.dv);
        Tensor lam({static_cast<std::int64_t>(cfg.levels())});
        Tensor dlam(lam.shape());
        for (std::size_t i = 0; i < cfg.levels(); ++i) {
            lam.flat(i) = cfg.lambdas[i];
            dlam.flat(i) = g.dlambdas[i];
        }
        const double el = grad_check(
            [&](const Tensor& x) {
                SparsityConfig c2 = cfg;
                for (std::size_t i = 0; i < c2.lambdas.size(); ++i) c2.lambdas[i] = x.flat(i);
                return dot(upstream, sparse_attention(q, k, v, c2));
            },
            lam, dlam);

        const double err = std::max({eq, ek, ev, el});
        worst = std::max(worst, err);
        if (err > tol) {
            fail.record("sparse attention gradient error " + std::to_string(err));
        }
    }

    // full STME block: 50 non-tied, non-kink instances
    const std::int64_t c = 4, h = 3, w = 3;
    for (int done = 0; done < 50 && !fail.failed;) {
        SparsityConfig cfg{{0.5, 0.75}, {rng.next_in(0.2, 0.8), rng.next_in(0.2, 0.8)}};
        StmeParams params = StmeParams::seeded(c, cfg, rng);
        for (double& x : params.bn_gamma.data()) x = rng.next_in(0.5, 1.5);
        for (double& x : params.bn_beta.data()) x = rng.next_in(-0.5, 0.5);
        const Tensor e_prev = detail::random_tensor({c, h, w}, rng);
        const Tensor e_curr = detail::random_tensor({c, h, w}, rng);

        const StmeForwardCache cache = stme_forward_cached(e_prev, e_curr, params);
        if (detail::min_boundary_gap(cache.branch_self.scores, cfg) < gap_margin) continue;
        if (detail::min_boundary_gap(cache.branch_cross.scores, cfg) < gap_margin) continue;
        double min_abs_bn = std::numeric_limits<double>::infinity();
        for (double xv : cache.bn_out.data()) min_abs_bn = std::min(min_abs_bn, std::abs(xv));
        if (min_abs_bn < 1e-4) continue;  // keep clear of the relu kink
        ++done;

        const Tensor upstream = detail::random_tensor(cache.output.shape(), rng);
        const StmeGrads g = stme_forward_grads(e_prev, e_curr, params, upstream);

        auto readout_with = [&](const StmeParams& p, const Tensor& prev, const Tensor& curr) {
            return dot(upstream, stme_forward(prev, curr, p));
        };
        std::vector<std::pair<double, const char*>> errs;
        errs.emplace_back(grad_check([&](const Tensor& x) { return readout_with(params, x, e_curr); },
                                     e_prev, g.de_prev),
                          "e_prev");
        errs.emplace_back(grad_check([&](const Tensor& x) { return readout_with(params, e_prev, x); },
                                     e_curr, g.de_curr),
                          "e_curr");
        auto param_check = [&](Tensor StmeParams::* field, const Tensor& analytic) {
            return grad_check(
                [&](const Tensor& x) {
                    StmeParams p2 = params;
                    p2.*field = x;
                    return readout_with(p2, e_prev, e_curr);
                },
                params.*field, analytic);
        };
        errs.emplace_back(param_check(&StmeParams::wq_prev, g.dwq_prev), "wq_prev");
        errs.emplace_back(param_check(&StmeParams::wk_prev, g.dwk_prev), "wk_prev");
        errs.emplace_back(param_check(&StmeParams::wv_prev, g.dwv_prev), "wv_prev");
        errs.emplace_back(param_check(&StmeParams::wk_curr, g.dwk_curr), "wk_curr");
        errs.emplace_back(param_check(&StmeParams::wv_curr, g.dwv_curr), "wv_curr");
        errs.emplace_back(param_check(&StmeParams::conv_w, g.dconv_w), "conv_w");
        errs.emplace_back(param_check(&StmeParams::conv_b, g.dconv_b), "conv_b");
        errs.emplace_back(param_check(&StmeParams::bn_gamma, g.dbn_gamma), "bn_gamma");
        errs.emplace_back(param_check(&StmeParams::bn_beta, g.dbn_beta), "bn_beta");

        Tensor lam({static_cast<std::int64_t>(cfg.levels())});
        Tensor dlam(lam.shape());
        for (std::size_t i = 0; i < cfg.levels(); ++i) {
            lam.flat(i) = cfg.lambdas[i];
            dlam.flat(i) = g.dlambdas[i];
        }
        errs.emplace_back(grad_check(
                              [&](const Tensor& x) {
                                  StmeParams p2 = params;
                                  for (std::size_t i = 0; i < p2.sparsity.lambdas.size(); ++i) {
                                      p2.sparsity.lambdas[i] = x.flat(i);
                                  }
                                  return readout_with(p2, e_prev, e_curr);
                              },
                              lam, dlam),
                          "lambdas");

        for (const auto& [err, name] : errs) {
            worst = std::max(worst, err);
            if (err > tol) {
                fail.record(std::string("stme gradient error ") + std::to_string(err) + " on " +
                            name);
            }
        }
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CheckResult r{"AC7", "gradient checks, sparse attention + STME (50 each)", !fail.failed, ""};
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << "max rel err " << worst << ", "
       << std::fixed << std::setprecision(2) << elapsed << "s";
    if (elapsed >= 60.0) {
        r.pass = false;
        fail.record("runtime " + os.str() + " exceeds 60s budget");
    }
    r.detail = fail.failed ? fail.message : os.str();
    return r;
}

// AC8: multi-scale pooling vs the naive cascade oracle, plus the forced
// constant-field pattern.
inline CheckResult check_multi_scale_pool() {
    SplitMix64 rng(0xAC08);
    detail::Failure fail;

    for (int trial = 0; trial < 200 && !fail.failed; ++trial) {
        const std::int64_t c = rng.next_below(2) == 0 ? 4 : 8;
        const std::int64_t h = 1 + static_cast<std::int64_t>(rng.next_below(6));
        const std::int64_t w = 1 + static_cast<std::int64_t>(rng.next_below(6));
        const Tensor f = detail::random_tensor({c, h, w}, rng);
        PoolParams params;
        params.conv_w = detail::random_tensor({c, c, 1, 1}, rng);
        params.conv_b = detail::random_tensor({c}, rng);
        const Tensor got = multi_scale_pool(f, params);
        const Tensor want = oracle::naive_multi_scale_pool(f, params.conv_w, params.conv_b);
        if (!(got == want)) {
            fail.record("trial " + std::to_string(trial) +
                        ": pooling disagrees with the naive cascade oracle");
        }
    }

    // constant field c with identity 1x1 conv: groups come out {2c,2c,3c,3c}
    if (!fail.failed) {
        const double cval = 1.5;
        const std::int64_t c = 8, h = 5, w = 4;
        const Tensor f = Tensor::full({c, h, w}, cval);
        const Tensor out = multi_scale_pool(f, PoolParams::identity(c));
        const double expected_per_group[4] = {2 * cval, 2 * cval, 3 * cval, 3 * cval};
        for (std::int64_t ch = 0; ch < c && !fail.failed; ++ch) {
            const double want = expected_per_group[ch / (c / 4)];
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t x = 0; x < w; ++x) {
                    if (out(ch, y, x) != want) {
                        fail.record("constant field: channel " + std::to_string(ch) + " got " +
                                    std::to_string(out(ch, y, x)) + ", want " +
                                    std::to_string(want));
                    }
                }
            }
        }
    }

    return {"AC8", "multi-scale pooling vs naive cascade (200 inputs)", !fail.failed,
            fail.failed ? fail.message : "exact"};
}

// AC9: codec round-trips and the frozen PPM golden bytes.
inline CheckResult check_codec_round_trips() {
    SplitMix64 rng(0xAC09);
    const SensorGeometry geom{64, 48};
    detail::Failure fail;

    for (int trial = 0; trial < 1000 && !fail.failed; ++trial) {
        const EventStream s = detail::random_stream(rng, rng.next_below(501), geom, 0, 100000);
        if (parse_binary(write_binary(s), geom) != s) {
            fail.record("trial " + std::to_string(trial) + ": binary round-trip changed stream");
        }
        if (parse_csv(write_csv(s), geom) != s) {
            fail.record("trial " + std::to_string(trial) + ": CSV round-trip changed stream");
        }
    }

    if (!fail.failed) {
        // frozen golden: two +1 events at (1,1), one -1 event at (2,0) on 4x3
        EventFrame frame;
        frame.geom = {4, 3};
        frame.counts = {0, 0, -1, 0, 0, 2, 0, 0, 0, 0, 0, 0};
        // pixel bytes carry embedded NULs, so the length is explicit
        static constexpr char pixels[] =
            "\xFF\xFF\xFF\xFF\xFF\xFF\xFF\x00\x00\xFF\xFF\xFF"
            "\xFF\xFF\xFF\x00\x00\xFF\xFF\xFF\xFF\xFF\xFF\xFF"
            "\xFF\xFF\xFF\xFF\xFF\xFF\xFF\xFF\xFF\xFF\xFF\xFF";
        const std::string golden = std::string("P6\n4 3\n255\n") + std::string(pixels, 36);
        if (ppm_bytes(render(frame)) != golden) {
            fail.record("PPM bytes differ from the frozen golden");
        }
    }

    return {"AC9", "codec round-trips (1000 streams) + PPM golden", !fail.failed,
            fail.failed ? fail.message : "exact"};
}

// AC10: run_split and run_stme are bit-identical across repeated invocations.
inline CheckResult check_cli_determinism() {
    namespace fs = std::filesystem;
    detail::Failure fail;
    const fs::path base = fs::temp_directory_path() / "evkit_selftest_ac10";
    std::error_code ec;
    fs::remove_all(base, ec);
    fs::create_directories(base);

    SplitMix64 rng(0xAC10);
    EventStream fixture = detail::random_stream(rng, 4000, {80, 60}, 0, 30000);
    const fs::path input = base / "fixture.csv";
    write_text_file(input, write_csv(fixture));

    PipelineConfig cfg;
    cfg.input = input;
    cfg.format = "csv";
    cfg.geom = {80, 60};
    cfg.subframes = 3;
    cfg.seed = 7;

    auto run_both = [&](const fs::path& dir) {
        cfg.out_dir = dir;
        run_split(cfg);
        run_stme(cfg);
    };
    try {
        run_both(base / "a");
        run_both(base / "b");
    } catch (const Error& e) {
        fail.record(std::string("pipeline raised: ") + e.what());
    }

    if (!fail.failed) {
        for (const auto& entry : fs::directory_iterator(base / "a")) {
            const fs::path other = base / "b" / entry.path().filename();
            if (!fs::exists(other)) {
                fail.record("missing artifact " + other.string());
                break;
            }
            if (read_file_bytes(entry.path()) != read_file_bytes(other)) {
                fail.record("artifact " + entry.path().filename().string() +
                            " differs between runs");
                break;
            }
        }
    }

    fs::remove_all(base, ec);
    return {"AC10", "pipeline determinism across repeated runs", !fail.failed,
            fail.failed ? fail.message : "bit-identical"};
}

// Runs every acceptance check. The caller's sparsity config is validated
// first so that a bad --esa-fractions flag fails fast with a config error.
inline std::vector<CheckResult> run_all(const SparsityConfig& user_cfg) {
    user_cfg.validate();
    return {
        check_des_conservation(),       check_split_accumulate_additivity(),
        check_topk_oracle(),            check_dense_equivalence(),
        check_esa_brute_force(),        check_row_stochasticity(),
        check_gradients(),              check_multi_scale_pool(),
        check_codec_round_trips(),      check_cli_determinism(),
    };
}

inline bool all_passed(const std::vector<CheckResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const CheckResult& r) { return r.pass; });
}

inline void print_report(std::ostream& os, const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results) {
        os << (r.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(5) << r.id
           << r.name;
        if (!r.detail.empty()) os << "  [" << r.detail << "]";
        os << "\n";
    }
    const std::size_t passed =
        static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                               [](const CheckResult& r) { return r.pass; }));
    os << passed << "/" << results.size() << " acceptance checks passed\n";
}

}  // namespace evkit::selftest
