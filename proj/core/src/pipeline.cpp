#include "fusioncim/pipeline.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "fusioncim/attention.hpp"

namespace fusioncim::pipeline {

namespace {

using u64 = std::uint64_t;

enum class EventKind { q_loaded, stage_done };

struct Event {
    u64 time;
    EventKind kind;
    std::uint32_t stage;
    std::size_t item;
    u64 vector;

    bool operator>(const Event& o) const {
        return std::tie(time, kind, stage, item, vector) > std::tie(o.time, o.kind, o.stage, o.item, o.vector);
    }
};

struct Token {
    std::size_t item;
    u64 vector;
};

struct OccupancyRecord {
    u64 start;
    u64 length;
    std::uint32_t stage;
    std::uint32_t tile;
    u64 vector;
};

const char* stage_name(std::uint32_t s) {
    switch (s) {
        case 0: return "qk";
        case 1: return "softmax";
        case 2: return "pv";
        default: return "qload";
    }
}

u64 item_vectors(const EngineItem& item) { return item.kv_lengths.size() * static_cast<u64>(item.timed_tile_len); }

// Valid length of the kv tile that timed vector `v` belongs to, or 0 when
// `v` is padding or not the first vector of its tile.
u64 tile_start_len(const EngineItem& item, u64 v) {
    if (v % item.timed_tile_len != 0) return 0;
    return item.kv_lengths[v / item.timed_tile_len];
}

}  // namespace

EngineParams EngineParams::from(const config::ArchConfig& arch, std::uint32_t head_dim) {
    EngineParams p;
    p.stage_cycles = arch.bit_serial_width;
    p.q_write_cycles_per_row = arch.cim_write_cycles_per_row;
    p.head_dim = head_dim;
    return p;
}

EngineResult simulate_engine(const EngineWork& work, const EngineParams& params, std::ostream* occupancy) {
    EngineResult result;
    if (work.items.empty()) return result;
    for (const auto& item : work.items) {
        if (item.timed_tile_len == 0 || item.kv_lengths.empty()) {
            throw std::invalid_argument("simulate_engine: work item without KV vectors");
        }
    }

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
    std::array<bool, kStages> busy{};
    std::array<std::deque<Token>, kStages> waiting;
    std::vector<OccupancyRecord> records;
    const u64 d = params.head_dim;

    // One K (or V) tile arriving at the engine.
    auto deliver = [&](u64 len) {
        auto& on = result.counters.onchip;
        if (params.ablation.kv_stream) {
            on.gb_read += len * d;
            on.kv_cim_write += len * d;
        } else {
            on.kv_stream += len * d;
        }
    };
    auto start = [&](std::uint32_t s, u64 now) {
        if (busy[s] || waiting[s].empty()) return;
        const Token tok = waiting[s].front();
        waiting[s].pop_front();
        busy[s] = true;
        events.push({now + params.stage_cycles, EventKind::stage_done, s, tok.item, tok.vector});
        if (occupancy) {
            records.push_back({now, params.stage_cycles, s, work.items[tok.item].q_tile, tok.vector});
        }
    };
    auto load_q = [&](std::size_t i, u64 now) {
        const u64 len = static_cast<u64>(work.items[i].q_rows) * params.q_write_cycles_per_row;
        if (occupancy && len > 0) records.push_back({now, len, kStages, work.items[i].q_tile, 0});
        events.push({now + len, EventKind::q_loaded, 0, i, 0});
    };

    load_q(0, work.start_offset_cycles);
    u64 now = 0;
    while (!events.empty()) {
        const Event ev = events.top();
        events.pop();
        now = ev.time;
        const auto& item = work.items[ev.item];
        const u64 rows = item.q_rows;
        if (ev.kind == EventKind::q_loaded) {
            result.counters.onchip.q_cim_write += rows * d;
            waiting[0].push_back({ev.item, 0});
            start(0, now);
            continue;
        }

        busy[ev.stage] = false;
        const u64 len = tile_start_len(item, ev.vector);
        const bool real = (ev.vector % item.timed_tile_len) < item.kv_lengths[ev.vector / item.timed_tile_len];
        switch (ev.stage) {
            case 0:
                if (len > 0) {
                    deliver(len);
                    if (params.ablation.transpose) {
                        result.counters.onchip.transpose_rw += len * d * params.spec.transpose_factor;
                    }
                }
                if (real) result.counters.ops.mac_ip += rows * d;
                if (ev.vector + 1 < item_vectors(item)) {
                    waiting[0].push_back({ev.item, ev.vector + 1});
                } else if (ev.item + 1 < work.items.size()) {
                    load_q(ev.item + 1, now);
                }
                break;
            case 1:
                if (real) result.counters.ops.sfu += rows * attention::kExpPerStep * cost::kSfuOpsPerExp;
                break;
            default:
                if (len > 0) {
                    deliver(len);
                    if (params.ablation.psum) result.counters.onchip.psum_move += rows * d * params.spec.psum_bytes;
                }
                if (real) result.counters.ops.mac_op += rows * d;
                ++result.vectors;
                if (ev.vector + 1 == item_vectors(item)) result.counters.onchip.cim_read += rows * d;
                break;
        }
        if (ev.stage + 1 < kStages) {
            waiting[ev.stage + 1].push_back({ev.item, ev.vector});
            start(ev.stage + 1, now);
        }
        start(ev.stage, now);
    }
    result.cycles = now;

    if (occupancy) {
        std::vector<std::tuple<u64, std::uint32_t, std::uint32_t, u64>> lines;
        for (const auto& r : records) {
            for (u64 c = 0; c < r.length; ++c) lines.emplace_back(r.start + c, r.stage, r.tile, r.vector);
        }
        std::sort(lines.begin(), lines.end());
        *occupancy << "cycle,stage,tile,vector\n";
        for (const auto& [c, s, t, v] : lines) *occupancy << c << ',' << stage_name(s) << ',' << t << ',' << v << '\n';
    }
    return result;
}

u64 closed_form_engine_cycles(const EngineWork& work, const EngineParams& params) {
    if (work.items.empty()) return 0;
    u64 cycles = work.start_offset_cycles;
    for (const auto& item : work.items) {
        cycles += static_cast<u64>(item.q_rows) * params.q_write_cycles_per_row;
        cycles += params.stage_cycles * item_vectors(item);
    }
    return cycles + (kStages - 1) * params.stage_cycles;
}

std::vector<EngineWork> engine_work(const WorkloadSpec& workload, const sched::SystemPlan& plan,
                                    const EngineParams& params) {
    std::vector<EngineWork> out(plan.per_he.size());
    const u64 step_cycles = params.stage_cycles * workload.tile;
    for (std::size_t he = 0; he < plan.per_he.size(); ++he) {
        out[he].start_offset_cycles = plan.start_offset_steps[he] * step_cycles;
        for (const auto& wi : plan.per_he[he]) {
            EngineItem item;
            item.q_tile = wi.q_tile;
            item.q_rows = workload.q_tile_len(wi.q_tile);
            item.timed_tile_len = workload.tile;
            for (auto t : wi.kv_sequence) item.kv_lengths.push_back(workload.kv_tile_len(t));
            out[he].items.push_back(std::move(item));
        }
    }
    return out;
}

SimResult simulate_system(const WorkloadSpec& workload, const config::ArchConfig& arch, const sched::SystemPlan& plan,
                          const SystemOptions& options) {
    if (!(arch.dram_bytes_per_cycle > 0)) throw std::invalid_argument("simulate_system: dram bandwidth must be positive");
    if (options.design == Design::baseline1) return cost::model_baseline1(workload, arch, plan, options.spec);
    if (options.design == Design::baseline2) {
        return cost::model_baseline2(workload, arch, plan, options.spec, options.rescale_events);
    }

    auto params = EngineParams::from(arch, workload.head_dim);
    params.spec = options.spec;
    params.ablation = options.ablation;
    const auto works = engine_work(workload, plan, params);

    EventCounters layer;
    u64 compute = 0;
    for (std::size_t he = 0; he < works.size(); ++he) {
        const auto r = simulate_engine(works[he], params, he == 0 ? options.occupancy : nullptr);
        compute = std::max(compute, r.cycles);
        layer += r.counters;
    }

    const u64 d = workload.head_dim;
    u64 broadcast_vectors = 0;
    for (const auto& job : plan.jobs) {
        for (auto t : job.broadcast_tiles) broadcast_vectors += workload.kv_tile_len(t);
    }
    if (!options.ablation.kv_stream) layer.onchip.gb_read = 2 * d * broadcast_vectors;
    layer.offchip.q_in = workload.heads.size() * workload.bytes_q;
    layer.offchip.o_out = workload.heads.size() * workload.bytes_o;
    if (cost::kv_fits_in_buffer(workload, arch, plan)) {
        layer.offchip.k_in = workload.num_kv_heads * workload.bytes_k;
        layer.offchip.v_in = workload.num_kv_heads * workload.bytes_v;
    } else {
        u64 vectors = broadcast_vectors;
        if (options.ablation.kv_stream) {
            vectors = 0;
            for (const auto& w : works) {
                for (const auto& item : w.items) {
                    for (auto len : item.kv_lengths) vectors += len;
                }
            }
        }
        layer.offchip.k_in = vectors * d;
        layer.offchip.v_in = vectors * d;
    }

    SimResult r;
    r.design = Design::fusioncim;
    const u64 stall = cost::dram_stall_cycles(compute, layer.offchip.total(), arch.dram_bytes_per_cycle);
    r.compute_cycles = compute * workload.num_layers;
    r.stall_cycles = stall * workload.num_layers;
    r.cycles = r.compute_cycles + r.stall_cycles;
    r.wall_time_s = static_cast<double>(r.cycles) / arch.freq_hz;
    layer.scale(workload.num_layers);
    layer.rescale_count = options.rescale_events;
    layer.ops.sfu += options.rescale_events * (d + 1);
    r.counters = layer;
    r.energy = cost::energy_from_counters(r.counters, config::derive_energy_table(arch));
    return r;
}

u64 closed_form_cycles(const WorkloadSpec& workload, const config::ArchConfig& arch, const sched::SystemPlan& plan,
                       Design design, const cost::BaselineSpec& spec) {
    if (design == Design::baseline1) return cost::model_baseline1(workload, arch, plan, spec).cycles;
    if (design == Design::baseline2) return cost::model_baseline2(workload, arch, plan, spec).cycles;

    const auto params = EngineParams::from(arch, workload.head_dim);
    u64 compute = 0;
    for (const auto& w : engine_work(workload, plan, params)) compute = std::max(compute, closed_form_engine_cycles(w, params));
    const auto counters = cost::model_fusioncim_access(workload, arch, plan, spec);
    const u64 offchip = counters.offchip.total() / workload.num_layers;
    return (compute + cost::dram_stall_cycles(compute, offchip, arch.dram_bytes_per_cycle)) * workload.num_layers;
}

}  // namespace fusioncim::pipeline
