#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "fusioncim/config.hpp"
#include "fusioncim/cost_models.hpp"
#include "fusioncim/counters.hpp"
#include "fusioncim/scheduler.hpp"
#include "fusioncim/workload.hpp"

namespace fusioncim::pipeline {

/// QK (IP-CIM), softmax (SFU), PV (OP-CIM).
inline constexpr std::uint32_t kStages = 3;

struct EngineParams {
    std::uint64_t stage_cycles{8};
    std::uint64_t q_write_cycles_per_row{2};
    std::uint32_t head_dim{128};
    cost::BaselineSpec spec{};
    cost::Ablation ablation{};

    [[nodiscard]] static EngineParams from(const config::ArchConfig& arch, std::uint32_t head_dim);
};

/// One Q tile resident in an engine while a run of KV tiles streams past.
struct EngineItem {
    std::uint32_t q_tile{0};
    std::uint32_t q_rows{0};
    /// Valid vectors per streamed KV tile.
    std::vector<std::uint32_t> kv_lengths;
    /// Vectors per KV tile as seen by the pipeline (partial tiles padded).
    std::uint32_t timed_tile_len{kTileSize};
};

struct EngineWork {
    std::uint64_t start_offset_cycles{0};
    std::vector<EngineItem> items;
};

struct EngineResult {
    std::uint64_t cycles{0};
    std::uint64_t vectors{0};
    EventCounters counters;
};

/// Event-driven run of one engine. If `occupancy` is set, one CSV line
/// `cycle,stage,tile,vector` is written per busy stage per cycle.
[[nodiscard]] EngineResult simulate_engine(const EngineWork& work, const EngineParams& params,
                                           std::ostream* occupancy = nullptr);

[[nodiscard]] std::uint64_t closed_form_engine_cycles(const EngineWork& work, const EngineParams& params);

/// Per-engine work for one layer of the fused design.
[[nodiscard]] std::vector<EngineWork> engine_work(const WorkloadSpec& workload, const sched::SystemPlan& plan,
                                                  const EngineParams& params);

struct SystemOptions {
    Design design{Design::fusioncim};
    cost::BaselineSpec spec{};
    cost::Ablation ablation{};
    /// Rescale events over the whole model (fused design and baseline2).
    std::uint64_t rescale_events{0};
    /// Occupancy trace for engine 0 of the first layer.
    std::ostream* occupancy{nullptr};
};

/// Full system over all layers. Baselines route to the analytic models.
[[nodiscard]] SimResult simulate_system(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                        const sched::SystemPlan& plan, const SystemOptions& options = {});

/// Same total cycle count computed without simulating events.
[[nodiscard]] std::uint64_t closed_form_cycles(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                               const sched::SystemPlan& plan, Design design,
                                               const cost::BaselineSpec& spec = {});

}  // namespace fusioncim::pipeline
