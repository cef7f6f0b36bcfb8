#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fusioncim/attention.hpp"

namespace fusioncim::attention {

static_assert(std::endian::native == std::endian::little, "trace I/O assumes a little-endian host");

namespace {

std::vector<float> to_payload(const Matrix& scores) {
    std::vector<float> out(scores.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(scores.data[i]);
    return out;
}

}  // namespace

std::uint64_t trace_checksum(const Matrix& scores) {
    const auto payload = to_payload(scores);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    for (std::size_t i = 0; i < payload.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_trace(const std::string& path, const Matrix& scores, bool causal) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw TraceError("cannot open trace file for writing: " + path);
    out << "{\"rows\":" << scores.rows << ",\"cols\":" << scores.cols << ",\"dtype\":\"f32le\",\"causal\":"
        << (causal ? "true" : "false") << "}\n";
    const auto payload = to_payload(scores);
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw TraceError("failed writing trace file: " + path);
}

ScoreTrace read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceError("cannot open trace file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw TraceError("trace file has no header line: " + path);

    nlohmann::json h;
    try {
        h = nlohmann::json::parse(header);
    } catch (const nlohmann::json::parse_error& e) {
        throw TraceError(std::string("malformed trace header: ") + e.what());
    }
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool causal = false;
    try {
        rows = h.at("rows").get<std::size_t>();
        cols = h.at("cols").get<std::size_t>();
        causal = h.at("causal").get<bool>();
        if (h.at("dtype").get<std::string>() != "f32le") throw TraceError("unsupported trace dtype");
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("trace header missing or mistyped field: ") + e.what());
    }
    if (causal && rows > cols) throw TraceError("causal trace has more rows than columns");

    const std::streampos payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto payload_bytes = static_cast<std::uint64_t>(in.tellg() - payload_start);
    const std::uint64_t expected = static_cast<std::uint64_t>(rows) * cols * sizeof(float);
    if (payload_bytes != expected) {
        throw TraceError("trace payload is " + std::to_string(payload_bytes) + " bytes, header implies " +
                         std::to_string(expected));
    }
    in.seekg(payload_start);

    std::vector<float> payload(rows * cols);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
    if (!in) throw TraceError("truncated trace payload: " + path);

    ScoreTrace trace{Matrix(rows, cols), causal};
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t valid = valid_columns(i, rows, cols, causal);
        for (std::size_t j = 0; j < cols; ++j) {
            trace.scores.at(i, j) =
                j < valid ? static_cast<double>(payload[i * cols + j]) : -std::numeric_limits<double>::infinity();
        }
    }
    return trace;
}

}  // namespace fusioncim::attention
