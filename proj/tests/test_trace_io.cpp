#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "fusioncim/attention.hpp"

using namespace fusioncim::attention;

namespace {

std::string tmp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "fusioncim_test_trace";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

void write_raw(const std::string& path, const std::string& header, std::size_t payload_floats) {
    std::ofstream out(path, std::ios::binary);
    out << header << "\n";
    std::vector<float> payload(payload_floats, 1.0f);
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
}

}  // namespace

TEST_CASE("round trip of a random 8x8 matrix") {
    std::mt19937 rng(4);
    Matrix m(8, 8);
    for (auto& x : m.data) x = static_cast<float>(std::normal_distribution<double>()(rng));
    const auto path = tmp_path("rt.trace");
    write_trace(path, m, false);
    const auto t = read_trace(path);
    CHECK_FALSE(t.causal);
    CHECK(t.scores.rows == 8);
    CHECK(t.scores.cols == 8);
    CHECK(t.scores.data == m.data);
    CHECK(trace_checksum(t.scores) == trace_checksum(m));
}

TEST_CASE("causal traces mask the upper triangle on read") {
    const auto s = generate_scores(GeneratorSpec{}, 6, 10, true);
    const auto path = tmp_path("causal.trace");
    write_trace(path, s, true);
    const auto t = read_trace(path);
    CHECK(t.causal);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            if (j <= 10 - 6 + i) {
                CHECK(t.scores.at(i, j) == static_cast<double>(static_cast<float>(s.at(i, j))));
            } else {
                CHECK(std::isinf(t.scores.at(i, j)));
            }
        }
    }
}

TEST_CASE("header format") {
    const auto path = tmp_path("hdr.trace");
    write_trace(path, Matrix(2, 3, 0.5), true);
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    CHECK(line == R"({"rows":2,"cols":3,"dtype":"f32le","causal":true})");
}

TEST_CASE("payload length disagreeing with the header") {
    const auto path = tmp_path("short.trace");
    write_raw(path, R"({"rows":4,"cols":4,"dtype":"f32le","causal":false})", 15);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    write_raw(path, R"({"rows":4,"cols":4,"dtype":"f32le","causal":false})", 17);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    write_raw(path, R"({"rows":4,"cols":4,"dtype":"f32le","causal":false})", 16);
    CHECK_NOTHROW(read_trace(path));
}

TEST_CASE("malformed headers") {
    const auto path = tmp_path("bad.trace");
    write_raw(path, R"({"rows":4,"cols":4,"dtype":"f16","causal":false})", 16);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    write_raw(path, R"({"rows":4,"dtype":"f32le","causal":false})", 16);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    write_raw(path, R"(rows=4 cols=4)", 16);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    write_raw(path, R"({"rows":5,"cols":4,"dtype":"f32le","causal":true})", 20);
    CHECK_THROWS_AS(read_trace(path), TraceError);
    CHECK_THROWS_AS(read_trace(tmp_path("missing.trace")), TraceError);
}

TEST_CASE("externally dumped trace matches its recorded checksum") {
    const std::string base = std::string(FUSIONCIM_TEST_DATA) + "/rope_dump_64x64.trace";
    std::ifstream meta_in(base + ".json");
    REQUIRE(meta_in);
    const auto meta = nlohmann::json::parse(meta_in);
    const auto t = read_trace(base);
    CHECK(t.scores.rows == meta.at("rows").get<std::size_t>());
    CHECK(t.scores.cols == meta.at("cols").get<std::size_t>());
    CHECK(t.causal == meta.at("causal").get<bool>());
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(trace_checksum(t.scores)));
    CHECK(std::string(hex) == meta.at("checksum").get<std::string>());
}
