#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fusioncim/report.hpp"

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "fusioncim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = fusioncim::cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::filesystem::path tmp(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "fusioncim_test_cli";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("validate the default profile") {
    const auto r = run({"validate", "--config", "default"});
    CHECK(r.code == 0);
    CHECK(r.out == "config ok\n");
}

TEST_CASE("validate reports violations with exit 1") {
    const auto path = tmp("bad.json");
    std::ofstream(path) << R"({"model": {"num_kv_heads": 5}})";
    const auto r = run({"validate", "--config", path.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("GQA grouping") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"sweep", "--no-such-flag"}).code == 2);
    CHECK(run({"run", "--design", "tpu"}).code == 2);
    CHECK(run({"sweep", "--format", "xml"}).code == 2);
    CHECK(run({"trace-gen"}).code == 2);
}

TEST_CASE("help lists subcommands and flags") {
    const auto top = run({"--help"});
    CHECK(top.code == 0);
    for (const char* s : {"validate", "run", "sweep", "compare", "trace-gen", "schedule-dump"}) {
        CHECK(top.out.find(s) != std::string::npos);
    }
    const auto sweep = run({"sweep", "--help"});
    CHECK(sweep.code == 0);
    for (const char* f : {"--config", "--out", "--format", "--seed", "--jobs", "--seq-len", "--design", "--order",
                          "--ablate", "--generator"}) {
        CHECK(sweep.out.find(f) != std::string::npos);
    }
}

TEST_CASE("runtime errors exit 1 with a diagnostic") {
    const auto r = run({"validate", "--config", "/nonexistent/profile.json"});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("fusioncim: error:", 0) == 0);
    CHECK(run({"run", "--seq-len", "100000"}).code == 1);
    CHECK(run({"run", "--trace", "/nonexistent.trace"}).code == 1);
}

TEST_CASE("sweep writes one row per length and design") {
    const auto path = tmp("results.csv");
    const auto r = run({"sweep", "--config", "default", "--out", path.string()});
    REQUIRE(r.code == 0);
    const auto rows = fusioncim::report::parse_csv(slurp(path));
    CHECK(rows.size() == 15);
}

TEST_CASE("sweep with ablations and json output") {
    const auto path = tmp("ablate.json");
    const auto r = run({"sweep", "--seq-len", "256", "--ablate", "all", "--format", "json", "--out", path.string()});
    REQUIRE(r.code == 0);
    const auto rows = fusioncim::report::parse_json(slurp(path));
    CHECK(rows.size() == 2 + 4);
}

TEST_CASE("run prints the rescale reduction") {
    const auto r = run({"run", "--design", "fusioncim", "--seq-len", "4096", "--order", "reverse"});
    REQUIRE(r.code == 0);
    const auto pos = r.out.find("rescale_reduction_vs_forward: ");
    REQUIRE(pos != std::string::npos);
    const double red = std::stod(r.out.substr(pos + 30));
    CHECK(red > 0.3);
    CHECK(red <= 1.0);
}

TEST_CASE("run with an ingested trace") {
    const auto trace = std::string(FUSIONCIM_TEST_DATA) + "/rope_dump_64x64.trace";
    const auto r = run({"run", "--seq-len", "256", "--trace", trace});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("trace_rows: 64") != std::string::npos);
    CHECK(r.out.find("trace_rescale_reduction: ") != std::string::npos);
}

TEST_CASE("run writes an occupancy trace") {
    const auto path = tmp("occ.csv");
    const auto r = run({"run", "--seq-len", "128", "--occupancy", path.string()});
    REQUIRE(r.code == 0);
    const auto text = slurp(path);
    CHECK(text.rfind("cycle,stage,tile,vector\n", 0) == 0);
    CHECK(text.find(",softmax,") != std::string::npos);
}

TEST_CASE("compare prints a table") {
    const auto r = run({"compare", "--seq-len", "512"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("speedup") != std::string::npos);
    CHECK(r.out.find("baseline2") != std::string::npos);
}

TEST_CASE("trace-gen output reads back with the printed checksum") {
    const auto path = tmp("gen.trace");
    const auto r = run({"trace-gen", "--out", path.string(), "--rows", "16", "--cols", "32", "--mode", "alibi_like"});
    REQUIRE(r.code == 0);
    const auto t = fusioncim::attention::read_trace(path.string());
    CHECK(t.scores.rows == 16);
    CHECK(t.scores.cols == 32);
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx",
                  static_cast<unsigned long long>(fusioncim::attention::trace_checksum(t.scores)));
    CHECK(r.out.find(hex) != std::string::npos);
}

TEST_CASE("schedule-dump") {
    const auto r = run({"schedule-dump", "--q-tiles", "4", "--hes", "4"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("{wave: 0, step: 1, kv_tile: 2, dest: [2, 3]}") != std::string::npos);
}
