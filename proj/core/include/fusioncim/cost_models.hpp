#pragma once

#include <cstdint>
#include <string>

#include "fusioncim/config.hpp"
#include "fusioncim/counters.hpp"
#include "fusioncim/scheduler.hpp"
#include "fusioncim/workload.hpp"

namespace fusioncim::cost {

/// SFU ops charged per exponential evaluation (LUT lookup plus the
/// polynomial evaluation).
inline constexpr std::uint64_t kSfuOpsPerExp = 16;

/// Cycles to drain the pipeline once per work item.
inline constexpr std::uint64_t kPipelineFillCycles = 16;

struct BaselineSpec {
    std::uint32_t score_storage_bits{16};  // S as written off-chip
    std::uint32_t prob_storage_bits{8};    // P as written off-chip
    std::uint32_t psum_bytes{4};           // partial O accumulator width
    /// Bytes moved per K byte by an explicit transpose (buffer write + read).
    std::uint32_t transpose_factor{2};
};

/// Re-enables one overhead that the fused dataflow removes.
struct Ablation {
    bool kv_stream{false};  // KV-stationary: unicast reads written into CIM
    bool transpose{false};  // explicit K transpose
    bool psum{false};       // spill partial sums between kv tiles

    [[nodiscard]] bool any() const { return kv_stream || transpose || psum; }
    [[nodiscard]] std::string label() const;
    friend bool operator==(const Ablation&, const Ablation&) = default;
};

[[nodiscard]] Ablation ablation_from_string(const std::string& s);

/// True when every kv head that is resident at once fits in the global
/// buffer, so K and V are fetched from DRAM once per kv head.
[[nodiscard]] bool kv_fits_in_buffer(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                     const sched::SystemPlan& plan);

[[nodiscard]] std::uint64_t dram_cycles(std::uint64_t bytes, double bytes_per_cycle);
/// Extra cycles when off-chip transfer cannot hide under compute.
[[nodiscard]] std::uint64_t dram_stall_cycles(std::uint64_t compute_cycles, std::uint64_t offchip_bytes,
                                              double bytes_per_cycle);

/// Analytic event counts for the fused design over all layers.
/// `rescale_events` is the total over the whole model.
[[nodiscard]] EventCounters model_fusioncim_access(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                                   const sched::SystemPlan& plan, const BaselineSpec& spec = {},
                                                   const Ablation& ablation = {}, std::uint64_t rescale_events = 0);

/// Compute cycles of each engine for one layer of a baseline design.
[[nodiscard]] std::vector<std::uint64_t> baseline_engine_cycles(Design design, const WorkloadSpec& workload,
                                                                const config::ArchConfig& arch,
                                                                const sched::SystemPlan& plan);

[[nodiscard]] SimResult model_baseline1(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                        const sched::SystemPlan& plan, const BaselineSpec& spec = {});
/// `rescale_events` counts the online-softmax rescales of the tile-by-tile
/// forward walk.
[[nodiscard]] SimResult model_baseline2(const WorkloadSpec& workload, const config::ArchConfig& arch,
                                        const sched::SystemPlan& plan, const BaselineSpec& spec = {},
                                        std::uint64_t rescale_events = 0);

[[nodiscard]] EnergyBreakdown energy_from_counters(const EventCounters& counters, const config::EnergyTable& table);

struct PeakEfficiency {
    double tops{0};
    double tops_per_mm2{0};
    double tops_per_w{0};
};

/// Aggregate peak throughput of all engines (IP + OP + SFU) and the
/// resulting area and power efficiency.
[[nodiscard]] PeakEfficiency peak_efficiency(const config::ArchConfig& arch);

}  // namespace fusioncim::cost
