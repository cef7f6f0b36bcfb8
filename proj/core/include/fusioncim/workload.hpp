#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusioncim/config.hpp"

namespace fusioncim {

/// Rows of Q and vectors of K/V per tile; matches the CIM array depth.
inline constexpr std::uint32_t kTileSize = 128;

enum class Phase { prefill, decode };

struct HeadMapping {
    std::uint32_t q_head;
    std::uint32_t kv_head;
};

/// Tiled attention work for one layer. Byte totals are INT8 (one byte per
/// element) and are per head: bytes_q / bytes_o per query head,
/// bytes_k / bytes_v per kv head.
struct WorkloadSpec {
    Phase phase{Phase::prefill};
    std::uint32_t seq_len{0};
    std::uint32_t decode_parallel{1};
    std::uint32_t head_dim{0};
    std::uint32_t num_layers{1};
    bool causal{true};
    std::uint32_t tile{kTileSize};
    std::uint32_t q_rows{0};
    std::uint32_t q_tiles{0};
    std::uint32_t kv_tiles{0};
    std::vector<HeadMapping> heads;
    std::uint32_t num_kv_heads{0};
    std::uint64_t bytes_q{0};
    std::uint64_t bytes_k{0};
    std::uint64_t bytes_v{0};
    std::uint64_t bytes_o{0};

    [[nodiscard]] std::uint32_t group_size() const {
        return num_kv_heads == 0 ? 0 : static_cast<std::uint32_t>(heads.size()) / num_kv_heads;
    }
    /// Valid KV vectors in kv tile `t` (the last tile may be partial).
    [[nodiscard]] std::uint32_t kv_tile_len(std::uint32_t t) const;
    /// Query rows in q tile `t`.
    [[nodiscard]] std::uint32_t q_tile_len(std::uint32_t t) const;
    /// Absolute sequence position of query row `r` (bottom-right aligned).
    [[nodiscard]] std::uint32_t query_position(std::uint32_t r) const { return seq_len - q_rows + r; }
    /// KV tiles touched by q tile `t` under the causal triangle.
    [[nodiscard]] std::uint32_t kv_tiles_for_q_tile(std::uint32_t t) const;
    /// Number of (q tile, kv tile) pairs processed for one query head.
    [[nodiscard]] std::uint64_t tile_pairs_per_head() const;
    /// Unmasked (query row, key) score entries for one query head.
    [[nodiscard]] std::uint64_t valid_scores_per_head() const;
};

class WorkloadError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

[[nodiscard]] WorkloadSpec derive_workload(const config::ModelConfig& model, Phase phase, std::uint32_t seq_len,
                                           std::uint32_t decode_parallel = 1, std::uint32_t tile = kTileSize);

[[nodiscard]] std::string to_string(Phase phase);

}  // namespace fusioncim
