// Command-line front end for the event pipeline.
//
//   evkit split    --input events.csv --n 3 --out outdir
//   evkit stme     --input events.csv --n 3 --seed 42 --out outdir
//   evkit selftest
//
// split:    DES-split the stream and write one PPM per subframe plus the
//           single-frame baseline and stats.json.
// stme:     featurize subframes, run multi-scale pooling and the STME block
//           over consecutive pairs, write features.json, sparsity_stats.json
//           and params.json.
// selftest: run the full oracle/invariant/gradient suite.
//
// EVKIT_THREADS caps worker parallelism; outputs do not depend on it.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evkit/evkit.hpp"
#include "evkit/selftest.hpp"

namespace {

struct CommonFlags {
    std::string input;
    std::string format = "csv";
    std::int64_t width = 346;
    std::int64_t height = 260;
    std::int64_t start_us = -1;
    std::int64_t end_us = -1;
    std::int64_t n = 3;
    std::vector<double> fractions;
    std::vector<double> lambdas;
    std::uint64_t seed = 0;
    std::string out = ".";
    std::string params;
};

void add_common_flags(CLI::App& cmd, CommonFlags& flags, bool needs_input) {
    auto* input = cmd.add_option("--input", flags.input, "event file to ingest");
    if (needs_input) input->required();
    cmd.add_option("--format", flags.format, "event file format: csv or bin")
        ->check(CLI::IsMember({"csv", "bin"}));
    cmd.add_option("--width", flags.width, "sensor width in pixels");
    cmd.add_option("--height", flags.height, "sensor height in pixels");
    cmd.add_option("--start-us", flags.start_us, "window start (default: first event)");
    cmd.add_option("--end-us", flags.end_us, "window end, inclusive (default: last event)");
    cmd.add_option("--n", flags.n, "number of event subframes");
    cmd.add_option("--esa-fractions", flags.fractions, "top-K fractions, comma separated")
        ->delimiter(',');
    cmd.add_option("--esa-lambdas", flags.lambdas, "level mixture weights, comma separated")
        ->delimiter(',');
    cmd.add_option("--seed", flags.seed, "seed for deterministic parameter generation");
    cmd.add_option("--out", flags.out, "output directory");
}

evkit::PipelineConfig to_config(const CommonFlags& flags) {
    evkit::PipelineConfig cfg;
    cfg.input = flags.input;
    cfg.format = flags.format;
    cfg.geom = {flags.width, flags.height};
    if (flags.start_us >= 0) cfg.start_us = flags.start_us;
    if (flags.end_us >= 0) cfg.end_us = flags.end_us;
    cfg.subframes = flags.n;
    if (!flags.fractions.empty() || !flags.lambdas.empty()) {
        cfg.sparsity.fractions = flags.fractions;
        cfg.sparsity.lambdas = flags.lambdas;
        // lambdas default to uniform when only fractions are given
        if (cfg.sparsity.lambdas.empty() && !cfg.sparsity.fractions.empty()) {
            cfg.sparsity.lambdas.assign(cfg.sparsity.fractions.size(),
                                        1.0 / static_cast<double>(cfg.sparsity.fractions.size()));
        }
        cfg.sparsity.validate();
    }
    cfg.seed = flags.seed;
    cfg.out_dir = flags.out;
    if (!flags.params.empty()) cfg.params_path = flags.params;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-stream subframe splitting, sparse attention and STME pipeline"};
    app.require_subcommand(1);

    CommonFlags split_flags, stme_flags, selftest_flags;

    CLI::App* split_cmd =
        app.add_subcommand("split", "split events into subframes and render PPM frames");
    add_common_flags(*split_cmd, split_flags, true);

    CLI::App* stme_cmd =
        app.add_subcommand("stme", "run pooling + STME over consecutive subframes");
    add_common_flags(*stme_cmd, stme_flags, true);
    stme_cmd->add_option("--params", stme_flags.params,
                         "load STME/pool parameters from a JSON document instead of seeding");

    CLI::App* selftest_cmd =
        app.add_subcommand("selftest", "run the acceptance suite and print a per-check table");
    add_common_flags(*selftest_cmd, selftest_flags, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (split_cmd->parsed()) {
            const evkit::PipelineConfig cfg = to_config(split_flags);
            const evkit::SplitRunResult r = evkit::run_split(cfg);
            std::cout << "events " << r.event_count << ", dropped " << r.dropped << ", "
                      << r.per_cluster_counts.size() << " subframes -> "
                      << cfg.out_dir.string() << "\n";
        } else if (stme_cmd->parsed()) {
            const evkit::PipelineConfig cfg = to_config(stme_flags);
            const evkit::StmeRunResult r = evkit::run_stme(cfg);
            std::cout << r.pairs.size() << " subframe pairs -> " << cfg.out_dir.string() << "\n";
        } else {
            const evkit::PipelineConfig cfg = to_config(selftest_flags);
            const auto results = evkit::selftest::run_all(cfg.sparsity);
            evkit::selftest::print_report(std::cout, results);
            return evkit::selftest::all_passed(results) ? 0 : 1;
        }
    } catch (const evkit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
