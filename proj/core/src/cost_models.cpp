#include "fusioncim/cost_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusioncim/attention.hpp"

namespace fusioncim::cost {

namespace {

using u64 = std::uint64_t;

struct Walk {
    const WorkloadSpec& w;
    const sched::SystemPlan& plan;

    template <typename ItemFn, typename PairFn>
    void each(ItemFn&& on_item, PairFn&& on_pair) const {
        for (const auto& items : plan.per_he) {
            for (const auto& item : items) {
                const u64 rows = w.q_tile_len(item.q_tile);
                on_item(rows);
                for (auto t : item.kv_sequence) on_pair(rows, static_cast<u64>(w.kv_tile_len(t)));
            }
        }
    }
};

// K and V off-chip reads for one layer. Without room in the global buffer
// every delivery goes back to DRAM.
void kv_offchip(EventCounters& c, const WorkloadSpec& w, const config::ArchConfig& arch,
                const sched::SystemPlan& plan, bool multicast) {
    if (kv_fits_in_buffer(w, arch, plan)) {
        c.offchip.k_in = w.num_kv_heads * w.bytes_k;
        c.offchip.v_in = w.num_kv_heads * w.bytes_v;
        return;
    }
    u64 vectors = 0;
    if (multicast) {
        for (const auto& job : plan.jobs) {
            for (auto t : job.broadcast_tiles) vectors += w.kv_tile_len(t);
        }
    } else {
        Walk{w, plan}.each([](u64) {}, [&](u64, u64 len) { vectors += len; });
    }
    c.offchip.k_in = vectors * w.head_dim;
    c.offchip.v_in = vectors * w.head_dim;
}

void finish_layers(EventCounters& c, const WorkloadSpec& w, u64 rescale_events, u64 sfu_per_rescale) {
    c.scale(w.num_layers);
    c.rescale_count = rescale_events;
    c.ops.sfu += rescale_events * sfu_per_rescale;
}

SimResult finish_baseline(Design design, EventCounters counters, const WorkloadSpec& w,
                          const config::ArchConfig& arch, const sched::SystemPlan& plan) {
    SimResult r;
    r.design = design;
    const auto per_he = baseline_engine_cycles(design, w, arch, plan);
    const u64 compute = per_he.empty() ? 0 : *std::max_element(per_he.begin(), per_he.end());
    const u64 offchip_layer = counters.offchip.total() / w.num_layers;
    const u64 stall = dram_stall_cycles(compute, offchip_layer, arch.dram_bytes_per_cycle);
    r.compute_cycles = compute * w.num_layers;
    r.stall_cycles = stall * w.num_layers;
    r.cycles = r.compute_cycles + r.stall_cycles;
    r.wall_time_s = static_cast<double>(r.cycles) / arch.freq_hz;
    r.counters = counters;
    r.energy = energy_from_counters(counters, config::derive_energy_table(arch));
    return r;
}

EventCounters baseline_common(const WorkloadSpec& w, const config::ArchConfig& arch, const sched::SystemPlan& plan,
                              const BaselineSpec& spec, bool psum) {
    EventCounters c;
    const u64 d = w.head_dim;
    c.offchip.q_in = w.heads.size() * w.bytes_q;
    c.offchip.o_out = w.heads.size() * w.bytes_o;
    kv_offchip(c, w, arch, plan, false);
    Walk{w, plan}.each([&](u64 rows) { c.onchip.cim_read += rows * d; },
                       [&](u64 rows, u64 len) {
                           c.onchip.gb_read += 2 * len * d;
                           c.onchip.kv_cim_write += 2 * len * d;
                           c.onchip.transpose_rw += len * d * spec.transpose_factor;
                           if (psum) c.onchip.psum_move += rows * d * spec.psum_bytes;
                           c.ops.mac_ip += 2 * rows * len * d;
                       });
    return c;
}

}  // namespace

std::string Ablation::label() const {
    if (!any()) return "none";
    std::string s;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += '+';
        s += name;
    };
    add(kv_stream, "kv-stream");
    add(transpose, "transpose");
    add(psum, "psum");
    return s;
}

Ablation ablation_from_string(const std::string& s) {
    Ablation a;
    if (s.empty() || s == "none") return a;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto end = std::min(s.find('+', pos), s.size());
        const auto part = s.substr(pos, end - pos);
        if (part == "kv-stream") a.kv_stream = true;
        else if (part == "transpose") a.transpose = true;
        else if (part == "psum") a.psum = true;
        else throw std::invalid_argument("unknown ablation '" + part + "'");
        pos = end + 1;
    }
    return a;
}

bool kv_fits_in_buffer(const WorkloadSpec& workload, const config::ArchConfig& arch, const sched::SystemPlan& plan) {
    const u64 per_head = workload.bytes_k + workload.bytes_v;
    return static_cast<u64>(std::max(plan.concurrent_kv_heads, 1u)) * per_head <= arch.gb_bytes;
}

u64 dram_cycles(u64 bytes, double bytes_per_cycle) {
    if (!(bytes_per_cycle > 0)) throw std::invalid_argument("dram bandwidth must be positive");
    return static_cast<u64>(std::ceil(static_cast<double>(bytes) / bytes_per_cycle));
}

u64 dram_stall_cycles(u64 compute_cycles, u64 offchip_bytes, double bytes_per_cycle) {
    const u64 transfer = dram_cycles(offchip_bytes, bytes_per_cycle);
    return transfer > compute_cycles ? transfer - compute_cycles : 0;
}

EventCounters model_fusioncim_access(const WorkloadSpec& w, const config::ArchConfig& arch,
                                     const sched::SystemPlan& plan, const BaselineSpec& spec,
                                     const Ablation& ablation, u64 rescale_events) {
    EventCounters c;
    const u64 d = w.head_dim;
    c.offchip.q_in = w.heads.size() * w.bytes_q;
    c.offchip.o_out = w.heads.size() * w.bytes_o;
    kv_offchip(c, w, arch, plan, !ablation.kv_stream);
    if (!ablation.kv_stream) {
        for (const auto& job : plan.jobs) {
            for (auto t : job.broadcast_tiles) c.onchip.gb_read += 2 * d * w.kv_tile_len(t);
        }
    }
    Walk{w, plan}.each(
        [&](u64 rows) {
            c.onchip.q_cim_write += rows * d;
            c.onchip.cim_read += rows * d;
        },
        [&](u64 rows, u64 len) {
            if (ablation.kv_stream) {
                c.onchip.gb_read += 2 * len * d;
                c.onchip.kv_cim_write += 2 * len * d;
            } else {
                c.onchip.kv_stream += 2 * len * d;
            }
            if (ablation.transpose) c.onchip.transpose_rw += len * d * spec.transpose_factor;
            if (ablation.psum) c.onchip.psum_move += rows * d * spec.psum_bytes;
            c.ops.mac_ip += rows * len * d;
            c.ops.mac_op += rows * len * d;
            c.ops.sfu += rows * len * attention::kExpPerStep * kSfuOpsPerExp;
        });
    finish_layers(c, w, rescale_events, d + 1);
    return c;
}

std::vector<u64> baseline_engine_cycles(Design design, const WorkloadSpec& w, const config::ArchConfig& arch,
                                        const sched::SystemPlan& plan) {
    if (design == Design::fusioncim) throw std::invalid_argument("baseline_engine_cycles: not a baseline design");
    const u64 write = arch.cim_write_cycles_per_row;
    const u64 per_vector = arch.bit_serial_width;
    const u64 tile = w.tile;
    std::vector<u64> out;
    out.reserve(plan.per_he.size());
    for (const auto& items : plan.per_he) {
        u64 cycles = 0;
        for (const auto& item : items) {
            const u64 rows = w.q_tile_len(item.q_tile);
            const u64 pairs = item.kv_sequence.size();
            if (design == Design::baseline1) {
                // K and V each written, then Q and P streamed; the array is
                // twice a tile wide so each pass covers half the rows' work.
                const u64 pass = (rows * per_vector + 1) / 2;
                cycles += kPipelineFillCycles + pairs * (2 * tile * write + 2 * pass);
            } else {
                cycles += pairs * (2 * tile * write + rows * per_vector + kPipelineFillCycles);
            }
        }
        out.push_back(cycles);
    }
    return out;
}

SimResult model_baseline1(const WorkloadSpec& w, const config::ArchConfig& arch, const sched::SystemPlan& plan,
                          const BaselineSpec& spec) {
    EventCounters c = baseline_common(w, arch, plan, spec, false);
    const u64 entry_bytes = 2 * (spec.score_storage_bits / 8) + 2 * (spec.prob_storage_bits / 8);
    Walk{w, plan}.each([](u64) {},
                       [&](u64 rows, u64 len) {
                           c.offchip.score_rw += rows * len * entry_bytes;
                           c.ops.sfu += rows * len * kSfuOpsPerExp;
                       });
    finish_layers(c, w, 0, 0);
    return finish_baseline(Design::baseline1, c, w, arch, plan);
}

SimResult model_baseline2(const WorkloadSpec& w, const config::ArchConfig& arch, const sched::SystemPlan& plan,
                          const BaselineSpec& spec, u64 rescale_events) {
    EventCounters c = baseline_common(w, arch, plan, spec, true);
    Walk{w, plan}.each([](u64) {},
                       [&](u64 rows, u64 len) { c.ops.sfu += rows * len * attention::kExpPerStep * kSfuOpsPerExp; });
    finish_layers(c, w, rescale_events, w.head_dim + 1);
    return finish_baseline(Design::baseline2, c, w, arch, plan);
}

EnergyBreakdown energy_from_counters(const EventCounters& c, const config::EnergyTable& t) {
    for (double v : {t.mac_ip, t.mac_op, t.sfu_op, t.dram, t.gb, t.cim_read, t.cim_write}) {
        if (!std::isfinite(v) || v < 0) throw std::invalid_argument("energy table has a missing or invalid entry");
    }
    EnergyBreakdown e;
    const auto b = [](u64 v) { return static_cast<double>(v); };
    e.dram = b(c.offchip.total()) * t.dram;
    e.gb = b(c.onchip.gb_read + c.onchip.kv_stream + c.onchip.transpose_rw + c.onchip.psum_move) * t.gb;
    e.cim_read = b(c.onchip.cim_read) * t.cim_read;
    e.cim_write = b(c.onchip.kv_cim_write + c.onchip.q_cim_write) * t.cim_write;
    e.mac_ip = b(c.ops.mac_ip) * t.ip_per_mac();
    e.mac_op = b(c.ops.mac_op) * t.op_per_mac();
    e.sfu = b(c.ops.sfu) * t.sfu_op;
    e.total = e.dram + e.gb + e.cim_read + e.cim_write + e.mac_ip + e.mac_op + e.sfu;
    return e;
}

PeakEfficiency peak_efficiency(const config::ArchConfig& arch) {
    PeakEfficiency p;
    p.tops = arch.num_hes * (arch.ip_tops + arch.op_tops + arch.sfu_tops);
    p.tops_per_mm2 = p.tops / arch.system_area_mm2;
    p.tops_per_w = p.tops / (arch.system_mw / 1000.0);
    return p;
}

}  // namespace fusioncim::cost
