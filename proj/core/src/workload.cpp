#include "fusioncim/workload.hpp"

#include <algorithm>

namespace fusioncim {

namespace {
std::uint32_t ceil_div(std::uint32_t a, std::uint32_t b) { return (a + b - 1) / b; }
}  // namespace

std::uint32_t WorkloadSpec::kv_tile_len(std::uint32_t t) const {
    const std::uint32_t begin = t * tile;
    return begin >= seq_len ? 0 : std::min(tile, seq_len - begin);
}

std::uint32_t WorkloadSpec::q_tile_len(std::uint32_t t) const {
    const std::uint32_t begin = t * tile;
    return begin >= q_rows ? 0 : std::min(tile, q_rows - begin);
}

std::uint32_t WorkloadSpec::kv_tiles_for_q_tile(std::uint32_t t) const {
    if (!causal) return kv_tiles;
    const std::uint32_t last_row = t * tile + q_tile_len(t) - 1;
    return query_position(last_row) / tile + 1;
}

std::uint64_t WorkloadSpec::tile_pairs_per_head() const {
    std::uint64_t pairs = 0;
    for (std::uint32_t t = 0; t < q_tiles; ++t) pairs += kv_tiles_for_q_tile(t);
    return pairs;
}

std::uint64_t WorkloadSpec::valid_scores_per_head() const {
    if (!causal) return static_cast<std::uint64_t>(q_rows) * seq_len;
    std::uint64_t n = 0;
    for (std::uint32_t r = 0; r < q_rows; ++r) n += query_position(r) + 1;
    return n;
}

WorkloadSpec derive_workload(const config::ModelConfig& model, Phase phase, std::uint32_t seq_len,
                             std::uint32_t decode_parallel, std::uint32_t tile) {
    if (tile == 0) throw WorkloadError("derive_workload: tile size must be positive");
    if (seq_len == 0) throw WorkloadError("derive_workload: seq_len must be positive");
    if (seq_len > model.max_seq_len) {
        throw WorkloadError("derive_workload: seq_len " + std::to_string(seq_len) + " exceeds max_seq_len " +
                            std::to_string(model.max_seq_len));
    }
    if (model.num_kv_heads == 0 || model.num_q_heads % model.num_kv_heads != 0) {
        throw WorkloadError("derive_workload: invalid GQA grouping");
    }
    if (phase == Phase::decode && (decode_parallel == 0 || decode_parallel > seq_len)) {
        throw WorkloadError("derive_workload: decode_parallel must be in [1, seq_len]");
    }

    WorkloadSpec w;
    w.phase = phase;
    w.seq_len = seq_len;
    w.decode_parallel = phase == Phase::decode ? decode_parallel : 1;
    w.head_dim = model.head_dim;
    w.num_layers = model.num_layers;
    w.causal = model.causal;
    w.tile = tile;
    w.q_rows = phase == Phase::prefill ? seq_len : decode_parallel;
    w.q_tiles = ceil_div(w.q_rows, tile);
    w.kv_tiles = ceil_div(seq_len, tile);
    w.num_kv_heads = model.num_kv_heads;

    // Contiguous GQA blocks: q heads [g*k, g*k + g) share kv head k.
    const std::uint32_t group = model.num_q_heads / model.num_kv_heads;
    w.heads.reserve(model.num_q_heads);
    for (std::uint32_t h = 0; h < model.num_q_heads; ++h) w.heads.push_back({h, h / group});

    w.bytes_q = static_cast<std::uint64_t>(w.q_rows) * model.head_dim;
    w.bytes_o = w.bytes_q;
    w.bytes_k = static_cast<std::uint64_t>(seq_len) * model.head_dim;
    w.bytes_v = w.bytes_k;
    return w;
}

std::string to_string(Phase phase) { return phase == Phase::prefill ? "prefill" : "decode"; }

}  // namespace fusioncim
