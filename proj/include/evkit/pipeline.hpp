#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evkit/accumulator.hpp"
#include "evkit/codec.hpp"
#include "evkit/des.hpp"
#include "evkit/errors.hpp"
#include "evkit/esa.hpp"
#include "evkit/json_io.hpp"
#include "evkit/parallel.hpp"
#include "evkit/rng.hpp"
#include "evkit/stme.hpp"

// Pipeline orchestration shared by the CLI and the tests: ingest events,
// split into subframes, accumulate/render, featurize, pool, run STME, and
// emit frames, features and statistics. All outputs are deterministic given
// (input, config, seed), independent of the worker count.

namespace evkit {

struct PipelineConfig {
    std::filesystem::path input;
    std::string format = "csv";  // "csv" | "bin"
    SensorGeometry geom{346, 260};
    std::optional<std::int64_t> start_us;  // defaults to the first event
    std::optional<std::int64_t> end_us;    // defaults to the last event
    std::int64_t subframes = 3;
    SparsityConfig sparsity = SparsityConfig::defaults();
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = ".";
    std::optional<std::filesystem::path> params_path;  // overrides seeded STME/pool parameters
};

// Feature-space geometry of the stme stage: event coordinates are remapped
// onto a coarse grid (at most 16x16) before featurization so that attention
// runs over a tractable token count.
inline constexpr std::int64_t kMaxFeatureExtent = 16;
inline constexpr std::int64_t kFeatureChannels = 8;

inline EventStream read_stream(const std::filesystem::path& path, const std::string& format,
                               const SensorGeometry& geom) {
    if (format != "csv" && format != "bin") {
        throw ConfigError("unknown event format '" + format + "', expected csv or bin");
    }
    const std::string bytes = read_file_bytes(path);
    try {
        return format == "csv" ? parse_csv(bytes, geom) : parse_binary(bytes, geom);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const DomainError& e) {
        throw DomainError(path.string() + ": " + e.what());
    } catch (const BoundsError& e) {
        throw BoundsError(path.string() + ": " + e.what());
    }
}

// Fills in the split window: explicit flags win, otherwise the stream's own
// span, widened so the window can hold n one-microsecond bins.
inline SplitConfig resolve_window(const EventStream& stream, const PipelineConfig& cfg) {
    SplitConfig split_cfg;
    split_cfg.n = cfg.subframes;
    const std::int64_t first = stream.events.empty() ? 0 : stream.events.front().t;
    const std::int64_t last = stream.events.empty() ? 0 : stream.events.back().t;
    split_cfg.start_us = cfg.start_us.value_or(first);
    split_cfg.end_us = cfg.end_us.value_or(std::max(last, split_cfg.start_us + cfg.subframes));
    split_cfg.validate();
    return split_cfg;
}

struct SplitRunResult {
    std::size_t event_count = 0;
    std::size_t dropped = 0;
    std::vector<std::size_t> per_cluster_counts;
    std::vector<std::int64_t> boundaries;
    std::vector<std::filesystem::path> subframe_paths;
    std::filesystem::path single_frame_path;
    std::filesystem::path stats_path;
};

inline std::string subframe_name(std::size_t index) {
    std::ostringstream os;
    os << "subframe_" << std::setfill('0') << std::setw(3) << index << ".ppm";
    return os.str();
}

inline SplitRunResult run_split(const PipelineConfig& cfg) {
    cfg.geom.validate();
    const EventStream stream = read_stream(cfg.input, cfg.format, cfg.geom);
    const SplitConfig split_cfg = resolve_window(stream, cfg);
    const EventClusterSet clusters = split(stream, split_cfg);
    const EventClusterSet single = split_to_single(stream, split_cfg);

    std::filesystem::create_directories(cfg.out_dir);

    SplitRunResult result;
    result.event_count = stream.events.size();
    result.dropped = clusters.dropped();
    result.boundaries = clusters.boundaries();

    const std::size_t n = clusters.cluster_count();
    std::vector<EventFrame> frames(n);
    parallel_for(n, [&](std::size_t i) {
        frames[i] = accumulate(clusters.cluster(i), cfg.geom, clusters.boundaries()[i],
                               clusters.boundaries()[i + 1]);
    });

    for (std::size_t i = 0; i < n; ++i) {
        result.per_cluster_counts.push_back(clusters.cluster(i).size());
        const std::filesystem::path path = cfg.out_dir / subframe_name(i);
        write_ppm(render(frames[i]), path);
        result.subframe_paths.push_back(path);
    }

    const EventFrame single_frame = accumulate(single.cluster(0), cfg.geom,
                                               split_cfg.start_us, split_cfg.end_us);
    result.single_frame_path = cfg.out_dir / "single_frame.ppm";
    write_ppm(render(single_frame), result.single_frame_path);

    nlohmann::json stats;
    stats["event_count"] = result.event_count;
    stats["dropped"] = result.dropped;
    stats["per_cluster_counts"] = result.per_cluster_counts;
    stats["boundaries"] = result.boundaries;
    result.stats_path = cfg.out_dir / "stats.json";
    write_text_file(result.stats_path, stats.dump(2) + "\n");
    return result;
}

// Remaps events onto the coarse feature grid by integer coordinate scaling.
inline SensorGeometry feature_geometry(const SensorGeometry& geom) {
    return {std::min(geom.width, kMaxFeatureExtent), std::min(geom.height, kMaxFeatureExtent)};
}

inline EventFrame accumulate_on_feature_grid(std::span<const Event> cluster,
                                             const SensorGeometry& geom,
                                             std::int64_t t_begin, std::int64_t t_end) {
    const SensorGeometry feat = feature_geometry(geom);
    std::vector<Event> remapped(cluster.begin(), cluster.end());
    for (Event& e : remapped) {
        e.x = static_cast<std::int32_t>(static_cast<std::int64_t>(e.x) * feat.width / geom.width);
        e.y = static_cast<std::int32_t>(static_cast<std::int64_t>(e.y) * feat.height / geom.height);
    }
    return accumulate(remapped, feat, t_begin, t_end);
}

// The featurizer lifting a 1-channel count grid to kFeatureChannels via one
// 3x3 conv. Drawn from the seed stream before the stage parameters.
struct FeaturizerParams {
    Tensor conv_w;  // kFeatureChannels x 1 x 3 x 3
    Tensor conv_b;  // kFeatureChannels

    static FeaturizerParams seeded(SplitMix64& rng) {
        FeaturizerParams p;
        p.conv_w = Tensor({kFeatureChannels, 1, 3, 3});
        for (double& x : p.conv_w.data()) x = rng.next_in(-0.5, 0.5);
        p.conv_b = Tensor({kFeatureChannels});
        for (double& x : p.conv_b.data()) x = rng.next_in(-0.5, 0.5);
        return p;
    }
};

struct StmePairResult {
    std::size_t prev_index = 0;
    std::size_t curr_index = 0;
    double branch_diff_norm = 0.0;          // ||self - cross|| over branch outputs
    Tensor output;                          // C x FH x FW
    std::vector<double> retained_mass_self;   // per level, mean over rows
    std::vector<double> retained_mass_cross;
};

struct StmeRunResult {
    std::vector<StmePairResult> pairs;
    std::filesystem::path features_path;
    std::filesystem::path sparsity_stats_path;
    std::filesystem::path params_path;
};

namespace detail {

// Mean over rows of the dense-softmax mass lying on the level's support.
inline std::vector<double> retained_mass_per_level(const SparseAttentionDetail& d) {
    const Tensor dense = softmax_rows(d.scores);
    const std::int64_t rows = dense.extent(0);
    std::vector<double> mass;
    mass.reserve(d.masks.size());
    for (const Tensor& mask : d.masks) {
        double total = 0.0;
        for (std::size_t i = 0; i < mask.size(); ++i) total += mask.flat(i) * dense.flat(i);
        mass.push_back(total / static_cast<double>(rows));
    }
    return mass;
}

inline double frobenius_diff(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.flat(i) - b.flat(i);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace detail

// Pooling runs per subframe before STME; STME then entangles consecutive
// pooled subframe features.
inline StmeRunResult run_stme(const PipelineConfig& cfg) {
    cfg.geom.validate();
    if (cfg.subframes < 2) {
        throw ConfigError("stme needs at least 2 subframes, got " +
                          std::to_string(cfg.subframes));
    }
    cfg.sparsity.validate();
    const EventStream stream = read_stream(cfg.input, cfg.format, cfg.geom);
    const SplitConfig split_cfg = resolve_window(stream, cfg);
    const EventClusterSet clusters = split(stream, split_cfg);

    // Parameter seeding order is fixed: featurizer, pool, STME.
    SplitMix64 rng(cfg.seed);
    const FeaturizerParams featurizer = FeaturizerParams::seeded(rng);
    StageParams stage;
    stage.pool = PoolParams::seeded(kFeatureChannels, rng);
    stage.stme = StmeParams::seeded(kFeatureChannels, cfg.sparsity, rng);
    if (cfg.params_path) {
        stage = load_params(*cfg.params_path);
    }

    const std::size_t n = clusters.cluster_count();
    std::vector<Tensor> pooled(n);
    parallel_for(n, [&](std::size_t i) {
        const EventFrame frame =
            accumulate_on_feature_grid(clusters.cluster(i), cfg.geom, clusters.boundaries()[i],
                                       clusters.boundaries()[i + 1]);
        const Tensor lifted =
            conv2d(frame_to_tensor(frame), featurizer.conv_w, featurizer.conv_b);
        pooled[i] = multi_scale_pool(lifted, stage.pool);
    });

    StmeRunResult result;
    result.pairs.resize(n - 1);
    parallel_for(n - 1, [&](std::size_t i) {
        const StmeForwardCache cache = stme_forward_cached(pooled[i], pooled[i + 1], stage.stme);
        StmePairResult& pair = result.pairs[i];
        pair.prev_index = i;
        pair.curr_index = i + 1;
        pair.branch_diff_norm =
            detail::frobenius_diff(cache.branch_self.output, cache.branch_cross.output);
        pair.output = cache.output;
        pair.retained_mass_self = detail::retained_mass_per_level(cache.branch_self);
        pair.retained_mass_cross = detail::retained_mass_per_level(cache.branch_cross);
    });

    std::filesystem::create_directories(cfg.out_dir);
    const SensorGeometry feat = feature_geometry(cfg.geom);

    nlohmann::json features;
    features["channels"] = kFeatureChannels;
    features["feature_height"] = feat.height;
    features["feature_width"] = feat.width;
    features["subframes"] = n;
    features["pairs"] = nlohmann::json::array();
    for (const StmePairResult& pair : result.pairs) {
        nlohmann::json jp;
        jp["prev_index"] = pair.prev_index;
        jp["curr_index"] = pair.curr_index;
        jp["branch_diff_norm"] = pair.branch_diff_norm;
        jp["output"] = tensor_to_json(pair.output);
        features["pairs"].push_back(jp);
    }
    result.features_path = cfg.out_dir / "features.json";
    write_text_file(result.features_path, features.dump(2) + "\n");

    nlohmann::json stats;
    stats["fractions"] = stage.stme.sparsity.fractions;
    stats["lambdas"] = stage.stme.sparsity.lambdas;
    stats["pairs"] = nlohmann::json::array();
    for (const StmePairResult& pair : result.pairs) {
        nlohmann::json jp;
        jp["prev_index"] = pair.prev_index;
        jp["curr_index"] = pair.curr_index;
        jp["levels"] = nlohmann::json::array();
        for (std::size_t level = 0; level < stage.stme.sparsity.levels(); ++level) {
            nlohmann::json jl;
            jl["fraction"] = stage.stme.sparsity.fractions[level];
            jl["lambda"] = stage.stme.sparsity.lambdas[level];
            jl["retained_mass_self"] = pair.retained_mass_self[level];
            jl["retained_mass_cross"] = pair.retained_mass_cross[level];
            jp["levels"].push_back(jl);
        }
        stats["pairs"].push_back(jp);
    }
    result.sparsity_stats_path = cfg.out_dir / "sparsity_stats.json";
    write_text_file(result.sparsity_stats_path, stats.dump(2) + "\n");

    result.params_path = cfg.out_dir / "params.json";
    save_params(result.params_path, stage);
    return result;
}

}  // namespace evkit
