#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "fusioncim/attention.hpp"
#include "fusioncim/workload.hpp"

namespace fusioncim::sched {

/// One multicast: a single global-buffer read of `kv_tile` delivered to
/// every engine in `dest_hes` at broadcast step `step`.
struct Broadcast {
    std::uint32_t step{0};
    std::uint32_t wave{0};
    std::uint32_t kv_tile{0};
    std::vector<std::uint32_t> dest_hes;
};

/// Tile-level schedule for one query head.
struct BroadcastSchedule {
    std::uint32_t n_qtiles{0};
    std::uint32_t n_kvtiles{0};
    std::uint32_t n_hes{0};
    bool causal{true};
    std::vector<Broadcast> broadcasts;        // ordered by (wave, step)
    std::vector<std::uint32_t> qtile_to_he;   // assignment
    std::vector<std::uint32_t> qtile_wave;
    /// KV tile visitation order for each q tile.
    std::vector<std::vector<std::uint32_t>> qtile_sequence;
    /// Step (within its wave) at which each q tile receives its first tile.
    std::vector<std::uint32_t> qtile_start_step;

    [[nodiscard]] std::uint32_t num_waves() const;
    /// Steps in wave `w` (the broadcast critical path length).
    [[nodiscard]] std::uint32_t wave_steps(std::uint32_t w) const;
    /// Sequence of KV tiles delivered to `he`, in delivery order.
    [[nodiscard]] std::vector<std::uint32_t> he_tile_sequence(std::uint32_t he) const;
    /// Tiles received per engine summed over all waves.
    [[nodiscard]] std::vector<std::uint64_t> he_tile_totals() const;
    [[nodiscard]] std::uint64_t destination_count() const;
};

class ScheduleError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Staggered diagonal-first multicast plan. With n_qtiles <= n_hes q tile n
/// runs on engine n; otherwise q tiles are dealt out in waves of n_hes with
/// the engine order reversed on every other wave.
[[nodiscard]] BroadcastSchedule build_inter_tile_schedule(std::uint32_t n_qtiles, std::uint32_t n_hes, bool causal);

/// Same construction driven by a workload, which also covers decode blocks
/// whose diagonal sits in the last KV tile.
[[nodiscard]] BroadcastSchedule build_inter_tile_schedule(const WorkloadSpec& workload, std::uint32_t n_hes);

enum class OrderMode { forward, reverse_diagonal_first, random };

struct TraversalOrder {
    OrderMode mode{OrderMode::reverse_diagonal_first};
    std::uint64_t seed{0};
    std::vector<attention::RowOrder> rows;
};

/// Local visitation order inside one KV tile for a row whose valid columns
/// in this tile are [0, valid_len). `valid_len` <= tile_len.
[[nodiscard]] std::vector<std::uint32_t> intra_tile_order(std::uint32_t tile_len, std::uint32_t valid_len,
                                                          OrderMode mode, std::uint64_t seed = 0);

/// Per-row global column order obtained by walking each row's q tile
/// sequence and expanding every tile with intra_tile_order.
[[nodiscard]] TraversalOrder schedule_to_traversal(const BroadcastSchedule& schedule, const WorkloadSpec& workload,
                                                   OrderMode intra_mode, std::uint64_t seed = 0);

/// Column order for a single row under the full pattern-aware policy or a
/// baseline policy; used to stream long rows without materializing all of
/// them.
[[nodiscard]] attention::RowOrder row_traversal(const BroadcastSchedule& schedule, const WorkloadSpec& workload,
                                                std::uint32_t row, OrderMode mode, std::uint64_t seed = 0);

void dump_schedule(std::ostream& os, const BroadcastSchedule& schedule);

[[nodiscard]] std::string to_string(OrderMode mode);
[[nodiscard]] OrderMode order_mode_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// System plan: how (query head, q tile) work items land on engines.

struct WorkItem {
    std::uint32_t q_head{0};
    std::uint32_t kv_head{0};
    std::uint32_t q_tile{0};
    std::uint32_t job{0};
    /// KV tiles streamed for this item, in order.
    std::vector<std::uint32_t> kv_sequence;
};

/// A group of engines running one staggered wave of one query head.
struct Job {
    std::uint32_t q_head{0};
    std::uint32_t kv_head{0};
    std::uint32_t wave{0};
    std::uint32_t lane{0};
    std::uint32_t steps{0};
    /// Broadcast reads issued for this job, one per step and tile.
    std::vector<std::uint32_t> broadcast_tiles;
};

struct SystemPlan {
    std::uint32_t n_hes{0};
    std::uint32_t group_width{0};  // engines per job
    std::uint32_t lanes{0};        // jobs running side by side
    std::vector<Job> jobs;
    std::vector<std::vector<WorkItem>> per_he;
    /// Broadcast steps each engine waits before its first tile arrives.
    std::vector<std::uint32_t> start_offset_steps;
    /// Distinct kv heads resident at once across lanes.
    std::uint32_t concurrent_kv_heads{0};

    [[nodiscard]] std::vector<std::uint64_t> he_tile_totals() const;
};

/// Head-major job list over all query heads. Each head's q tiles are split
/// into waves of `group_width = min(q_tiles, n_hes)` engines; floor(n_hes /
/// group_width) lanes run jobs side by side and jobs are dealt to lanes
/// round-robin. Within a lane, a job's q tiles go largest first to the
/// engine with the fewest tiles so far, which keeps per-engine totals even
/// when the last wave of a head is partial.
[[nodiscard]] SystemPlan build_system_plan(const WorkloadSpec& workload, std::uint32_t n_hes);

}  // namespace fusioncim::sched
