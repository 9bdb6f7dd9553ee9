#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "evkit/json_io.hpp"

namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CommandResult run_cli(const std::string& args, const fs::path& scratch) {
    const fs::path out_file = scratch / "stdout.txt";
    const fs::path err_file = scratch / "stderr.txt";
    const std::string cmd = std::string(EVKIT_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    CommandResult r;
#ifdef _WIN32
    r.exit_code = status;
#else
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#endif
    r.out = evkit::read_file_bytes(out_file);
    r.err = evkit::read_file_bytes(err_file);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("evkit_cli_" + tag);
        std::error_code ec;
        fs::remove_all(path, ec);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string small_fixture() {
    std::string text = "t,x,y,p\n";
    for (int t = 0; t < 120; ++t) {
        text += std::to_string(t * 5) + "," + std::to_string(t % 8) + "," +
                std::to_string(t % 6) + "," + (t % 2 == 0 ? "1" : "-1") + "\n";
    }
    return text;
}

}  // namespace

TEST_CASE("cli requires a subcommand") {
    TempDir dir("usage");
    const CommandResult r = run_cli("", dir.path);
    CHECK(r.exit_code != 0);
}

TEST_CASE("cli split writes frames and stats") {
    TempDir dir("split");
    const fs::path input = dir.path / "events.csv";
    evkit::write_text_file(input, small_fixture());
    const fs::path out = dir.path / "out";

    const CommandResult r = run_cli("split --input " + input.string() +
                                        " --width 8 --height 6 --n 3 --out " + out.string(),
                                    dir.path);
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(out / "subframe_000.ppm"));
    CHECK(fs::exists(out / "subframe_001.ppm"));
    CHECK(fs::exists(out / "subframe_002.ppm"));
    CHECK(fs::exists(out / "single_frame.ppm"));

    const std::string ppm = evkit::read_file_bytes(out / "subframe_000.ppm");
    CHECK(ppm.substr(0, 3) == "P6\n");

    const nlohmann::json stats =
        nlohmann::json::parse(evkit::read_file_bytes(out / "stats.json"));
    CHECK(stats.at("event_count") == 120);
    std::size_t clustered = stats.at("dropped").get<std::size_t>();
    for (const auto& c : stats.at("per_cluster_counts")) clustered += c.get<std::size_t>();
    CHECK(clustered == 120);
}

TEST_CASE("cli runs are bit-identical for a fixed seed") {
    TempDir dir("determinism");
    const fs::path input = dir.path / "events.csv";
    evkit::write_text_file(input, small_fixture());

    const std::string common = " --input " + input.string() +
                               " --width 8 --height 6 --n 3 --seed 42 --out ";
    REQUIRE(run_cli("split" + common + (dir.path / "a").string(), dir.path).exit_code == 0);
    REQUIRE(run_cli("split" + common + (dir.path / "b").string(), dir.path).exit_code == 0);
    REQUIRE(run_cli("stme" + common + (dir.path / "sa").string(), dir.path).exit_code == 0);
    REQUIRE(run_cli("stme" + common + (dir.path / "sb").string(), dir.path).exit_code == 0);

    for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
        CHECK(evkit::read_file_bytes(entry.path()) ==
              evkit::read_file_bytes(dir.path / "b" / entry.path().filename()));
    }
    for (const auto& entry : fs::directory_iterator(dir.path / "sa")) {
        CHECK(evkit::read_file_bytes(entry.path()) ==
              evkit::read_file_bytes(dir.path / "sb" / entry.path().filename()));
    }
}

TEST_CASE("cli esa flags reach the stme stage") {
    TempDir dir("flags");
    const fs::path input = dir.path / "events.csv";
    evkit::write_text_file(input, small_fixture());
    const fs::path out = dir.path / "out";

    const CommandResult r =
        run_cli("stme --input " + input.string() + " --width 8 --height 6 --n 2" +
                    " --esa-fractions 0.5,0.75 --esa-lambdas 0.6,0.4 --out " + out.string(),
                dir.path);
    REQUIRE(r.exit_code == 0);
    const nlohmann::json stats =
        nlohmann::json::parse(evkit::read_file_bytes(out / "sparsity_stats.json"));
    CHECK(stats.at("fractions") == std::vector<double>{0.5, 0.75});
    CHECK(stats.at("lambdas") == std::vector<double>{0.6, 0.4});
}

TEST_CASE("cli surfaces parse errors with file and line context") {
    TempDir dir("badfile");
    const fs::path input = dir.path / "broken.csv";
    evkit::write_text_file(input, "0,0,0,1\n5,zzz,0,1\n");

    const CommandResult r = run_cli("split --input " + input.string() + " --width 8 --height 6",
                                    dir.path);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("broken.csv") != std::string::npos);
    CHECK(r.err.find("line 2") != std::string::npos);
}

TEST_CASE("cli selftest rejects an invalid fraction before running") {
    TempDir dir("badfraction");
    const CommandResult r = run_cli("selftest --esa-fractions 0,0.5", dir.path);
    CHECK(r.exit_code != 0);
    CHECK(r.err.find("fraction") != std::string::npos);
}
