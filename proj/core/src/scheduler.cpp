#include "fusioncim/scheduler.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace fusioncim::sched {

namespace {

/// KV tile holding the diagonal of q tile `t`.
std::uint32_t diagonal_tile(const WorkloadSpec& w, std::uint32_t t) {
    const std::uint32_t last_row = t * w.tile + w.q_tile_len(t) - 1;
    return std::min(w.query_position(last_row) / w.tile, w.kv_tiles - 1);
}

std::vector<std::uint32_t> tile_sequence(const WorkloadSpec& w, std::uint32_t t) {
    const std::uint32_t diag = diagonal_tile(w, t);
    std::vector<std::uint32_t> seq;
    for (std::uint32_t k = diag + 1; k-- > 0;) seq.push_back(k);
    if (!w.causal) {
        for (std::uint32_t k = w.kv_tiles; k-- > diag + 1;) seq.push_back(k);
    }
    return seq;
}

struct WavePlan {
    std::vector<std::uint32_t> start_step;  // per tile in the wave
    std::uint32_t steps{0};
    // (step, kv tile) -> local indices of receiving tiles
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint32_t>> deliveries;
};

WavePlan plan_wave(const WorkloadSpec& w, const std::vector<std::uint32_t>& q_tiles) {
    WavePlan plan;
    std::uint32_t top = 0;
    for (auto t : q_tiles) top = std::max(top, diagonal_tile(w, t));
    for (std::size_t i = 0; i < q_tiles.size(); ++i) {
        const auto seq = tile_sequence(w, q_tiles[i]);
        // Causal waves are staggered so every engine meets its diagonal
        // tile on the shared descending broadcast stream.
        const std::uint32_t start = w.causal ? top - diagonal_tile(w, q_tiles[i]) : 0;
        plan.start_step.push_back(start);
        for (std::size_t k = 0; k < seq.size(); ++k) {
            const auto step = start + static_cast<std::uint32_t>(k);
            plan.deliveries[{step, seq[k]}].push_back(static_cast<std::uint32_t>(i));
            plan.steps = std::max(plan.steps, step + 1);
        }
    }
    return plan;
}

WorkloadSpec synthetic_prefill(std::uint32_t n_qtiles, bool causal) {
    config::ModelConfig m;
    m.num_q_heads = 1;
    m.num_kv_heads = 1;
    m.head_dim = 1;
    m.causal = causal;
    m.max_seq_len = n_qtiles * kTileSize;
    return derive_workload(m, Phase::prefill, n_qtiles * kTileSize);
}

}  // namespace

std::uint32_t BroadcastSchedule::num_waves() const {
    return qtile_wave.empty() ? 0 : *std::max_element(qtile_wave.begin(), qtile_wave.end()) + 1;
}

std::uint32_t BroadcastSchedule::wave_steps(std::uint32_t w) const {
    std::uint32_t steps = 0;
    for (const auto& b : broadcasts) {
        if (b.wave == w) steps = std::max(steps, b.step + 1);
    }
    return steps;
}

std::vector<std::uint32_t> BroadcastSchedule::he_tile_sequence(std::uint32_t he) const {
    std::vector<std::uint32_t> seq;
    for (const auto& b : broadcasts) {
        if (std::find(b.dest_hes.begin(), b.dest_hes.end(), he) != b.dest_hes.end()) seq.push_back(b.kv_tile);
    }
    return seq;
}

std::vector<std::uint64_t> BroadcastSchedule::he_tile_totals() const {
    std::vector<std::uint64_t> totals(n_hes, 0);
    for (const auto& b : broadcasts) {
        for (auto he : b.dest_hes) ++totals[he];
    }
    return totals;
}

std::uint64_t BroadcastSchedule::destination_count() const {
    std::uint64_t n = 0;
    for (const auto& b : broadcasts) n += b.dest_hes.size();
    return n;
}

BroadcastSchedule build_inter_tile_schedule(const WorkloadSpec& workload, std::uint32_t n_hes) {
    if (workload.q_tiles == 0 || n_hes == 0) throw ScheduleError("schedule needs at least one q tile and one engine");
    BroadcastSchedule s;
    s.n_qtiles = workload.q_tiles;
    s.n_kvtiles = workload.kv_tiles;
    s.n_hes = n_hes;
    s.causal = workload.causal;
    s.qtile_to_he.resize(s.n_qtiles);
    s.qtile_wave.resize(s.n_qtiles);
    s.qtile_start_step.resize(s.n_qtiles);
    for (std::uint32_t t = 0; t < s.n_qtiles; ++t) s.qtile_sequence.push_back(tile_sequence(workload, t));

    const std::uint32_t waves = (s.n_qtiles + n_hes - 1) / n_hes;
    for (std::uint32_t w = 0; w < waves; ++w) {
        std::vector<std::uint32_t> tiles;
        for (std::uint32_t t = w * n_hes; t < std::min(s.n_qtiles, (w + 1) * n_hes); ++t) tiles.push_back(t);
        const bool reversed = w % 2 == 1;
        std::vector<std::uint32_t> he_of(tiles.size());
        for (std::size_t i = 0; i < tiles.size(); ++i) {
            const auto local = static_cast<std::uint32_t>(i);
            he_of[i] = reversed ? n_hes - 1 - local : local;
            s.qtile_to_he[tiles[i]] = he_of[i];
            s.qtile_wave[tiles[i]] = w;
        }
        const auto plan = plan_wave(workload, tiles);
        for (std::size_t i = 0; i < tiles.size(); ++i) s.qtile_start_step[tiles[i]] = plan.start_step[i];
        for (const auto& [key, locals] : plan.deliveries) {
            Broadcast b{key.first, w, key.second, {}};
            for (auto i : locals) b.dest_hes.push_back(he_of[i]);
            std::sort(b.dest_hes.begin(), b.dest_hes.end());
            s.broadcasts.push_back(std::move(b));
        }
    }
    return s;
}

BroadcastSchedule build_inter_tile_schedule(std::uint32_t n_qtiles, std::uint32_t n_hes, bool causal) {
    if (n_qtiles == 0 || n_hes == 0) throw ScheduleError("schedule needs at least one q tile and one engine");
    return build_inter_tile_schedule(synthetic_prefill(n_qtiles, causal), n_hes);
}

std::vector<std::uint32_t> intra_tile_order(std::uint32_t tile_len, std::uint32_t valid_len, OrderMode mode,
                                            std::uint64_t seed) {
    if (valid_len > tile_len) throw ScheduleError("intra_tile_order: valid prefix longer than tile");
    std::vector<std::uint32_t> idx(valid_len);
    std::iota(idx.begin(), idx.end(), 0u);
    switch (mode) {
        case OrderMode::forward: break;
        case OrderMode::reverse_diagonal_first: std::reverse(idx.begin(), idx.end()); break;
        case OrderMode::random: {
            std::mt19937_64 rng(seed);
            std::shuffle(idx.begin(), idx.end(), rng);
            break;
        }
    }
    return idx;
}

namespace {

std::uint32_t valid_in_tile(const WorkloadSpec& w, std::uint32_t row, std::uint32_t kv_tile) {
    const std::uint32_t len = w.kv_tile_len(kv_tile);
    if (!w.causal) return len;
    const std::uint64_t visible = static_cast<std::uint64_t>(w.query_position(row)) + 1;
    const std::uint64_t begin = static_cast<std::uint64_t>(kv_tile) * w.tile;
    if (visible <= begin) return 0;
    return static_cast<std::uint32_t>(std::min<std::uint64_t>(len, visible - begin));
}

void check_consistent(const BroadcastSchedule& s, const WorkloadSpec& w) {
    if (s.n_qtiles != w.q_tiles || s.n_kvtiles != w.kv_tiles || s.causal != w.causal) {
        throw ScheduleError("schedule does not match workload tiling");
    }
    for (const auto& seq : s.qtile_sequence) {
        for (auto k : seq) {
            if (k >= w.kv_tiles) throw ScheduleError("schedule references kv tile beyond workload");
        }
    }
}

attention::RowOrder compose_row(const BroadcastSchedule& s, const WorkloadSpec& w, std::uint32_t row,
                                OrderMode intra, std::uint64_t seed) {
    attention::RowOrder order;
    const std::uint32_t t = row / w.tile;
    for (auto k : s.qtile_sequence[t]) {
        const auto local = intra_tile_order(w.kv_tile_len(k), valid_in_tile(w, row, k), intra,
                                            seed ^ (static_cast<std::uint64_t>(row) << 20) ^ k);
        for (auto j : local) order.push_back(k * w.tile + j);
    }
    return order;
}

}  // namespace

TraversalOrder schedule_to_traversal(const BroadcastSchedule& schedule, const WorkloadSpec& workload,
                                     OrderMode intra_mode, std::uint64_t seed) {
    check_consistent(schedule, workload);
    TraversalOrder out{intra_mode, seed, {}};
    out.rows.reserve(workload.q_rows);
    for (std::uint32_t r = 0; r < workload.q_rows; ++r) {
        out.rows.push_back(compose_row(schedule, workload, r, intra_mode, seed));
    }
    return out;
}

attention::RowOrder row_traversal(const BroadcastSchedule& schedule, const WorkloadSpec& workload, std::uint32_t row,
                                  OrderMode mode, std::uint64_t seed) {
    const std::uint32_t valid = workload.causal ? workload.query_position(row) + 1 : workload.seq_len;
    attention::RowOrder order(valid);
    switch (mode) {
        case OrderMode::forward:
            std::iota(order.begin(), order.end(), 0u);
            return order;
        case OrderMode::reverse_diagonal_first:
            return compose_row(schedule, workload, row, OrderMode::reverse_diagonal_first, seed);
        case OrderMode::random: {
            std::iota(order.begin(), order.end(), 0u);
            std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (row + 1)));
            std::shuffle(order.begin(), order.end(), rng);
            return order;
        }
    }
    return order;
}

void dump_schedule(std::ostream& os, const BroadcastSchedule& s) {
    os << "schedule:\n"
       << "  n_qtiles: " << s.n_qtiles << "\n"
       << "  n_kvtiles: " << s.n_kvtiles << "\n"
       << "  n_hes: " << s.n_hes << "\n"
       << "  causal: " << (s.causal ? "true" : "false") << "\n"
       << "  assignment:\n";
    for (std::uint32_t t = 0; t < s.n_qtiles; ++t) {
        os << "    - {q_tile: " << t << ", he: " << s.qtile_to_he[t] << ", wave: " << s.qtile_wave[t]
           << ", start_step: " << s.qtile_start_step[t] << "}\n";
    }
    os << "  broadcasts:\n";
    for (const auto& b : s.broadcasts) {
        os << "    - {wave: " << b.wave << ", step: " << b.step << ", kv_tile: " << b.kv_tile << ", dest: [";
        for (std::size_t i = 0; i < b.dest_hes.size(); ++i) os << (i ? ", " : "") << b.dest_hes[i];
        os << "]}\n";
    }
}

std::string to_string(OrderMode mode) {
    switch (mode) {
        case OrderMode::forward: return "forward";
        case OrderMode::reverse_diagonal_first: return "reverse";
        case OrderMode::random: return "random";
    }
    return "unknown";
}

OrderMode order_mode_from_string(const std::string& s) {
    if (s == "forward") return OrderMode::forward;
    if (s == "reverse" || s == "reverse_diagonal_first" || s == "diagonal") return OrderMode::reverse_diagonal_first;
    if (s == "random") return OrderMode::random;
    throw std::invalid_argument("unknown traversal order '" + s + "'");
}

// ---------------------------------------------------------------------------

std::vector<std::uint64_t> SystemPlan::he_tile_totals() const {
    std::vector<std::uint64_t> totals(n_hes, 0);
    for (std::uint32_t he = 0; he < n_hes; ++he) {
        for (const auto& item : per_he[he]) totals[he] += item.kv_sequence.size();
    }
    return totals;
}

SystemPlan build_system_plan(const WorkloadSpec& workload, std::uint32_t n_hes) {
    if (workload.q_tiles == 0 || n_hes == 0) throw ScheduleError("system plan needs q tiles and engines");
    SystemPlan plan;
    plan.n_hes = n_hes;
    plan.group_width = std::min(workload.q_tiles, n_hes);
    plan.lanes = n_hes / plan.group_width;
    plan.per_he.resize(n_hes);
    plan.start_offset_steps.assign(n_hes, 0);

    const std::uint32_t g = plan.group_width;
    const std::uint32_t waves = (workload.q_tiles + g - 1) / g;
    std::vector<bool> started(n_hes, false);
    std::vector<std::uint64_t> load(n_hes, 0);
    std::uint32_t job_id = 0;
    for (const auto& head : workload.heads) {
        for (std::uint32_t w = 0; w < waves; ++w, ++job_id) {
            Job job;
            job.q_head = head.q_head;
            job.kv_head = head.kv_head;
            job.wave = w;
            job.lane = job_id % plan.lanes;

            std::vector<std::uint32_t> tiles;
            for (std::uint32_t t = w * g; t < std::min(workload.q_tiles, (w + 1) * g); ++t) tiles.push_back(t);
            const auto wave = plan_wave(workload, tiles);
            job.steps = wave.steps;
            for (const auto& [key, _] : wave.deliveries) job.broadcast_tiles.push_back(key.second);

            // Largest q tile first onto the least loaded engine of the lane;
            // ties go to the highest engine index.
            std::vector<std::size_t> by_size(tiles.size());
            std::iota(by_size.begin(), by_size.end(), std::size_t{0});
            std::stable_sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
                return workload.kv_tiles_for_q_tile(tiles[a]) > workload.kv_tiles_for_q_tile(tiles[b]);
            });
            std::vector<bool> taken(g, false);
            for (auto i : by_size) {
                std::uint32_t pick = g;
                for (std::uint32_t k = g; k-- > 0;) {
                    if (taken[k]) continue;
                    if (pick == g || load[job.lane * g + k] < load[job.lane * g + pick]) pick = k;
                }
                taken[pick] = true;
                const std::uint32_t he = job.lane * g + pick;
                load[he] += workload.kv_tiles_for_q_tile(tiles[i]);
                if (!started[he]) {
                    plan.start_offset_steps[he] = wave.start_step[i];
                    started[he] = true;
                }
                plan.per_he[he].push_back({head.q_head, head.kv_head, tiles[i], job_id, tile_sequence(workload, tiles[i])});
            }
            plan.jobs.push_back(std::move(job));
        }
    }

    for (std::size_t first = 0; first < plan.jobs.size(); first += plan.lanes) {
        std::set<std::uint32_t> kv;
        for (std::size_t j = first; j < std::min(plan.jobs.size(), first + plan.lanes); ++j) kv.insert(plan.jobs[j].kv_head);
        plan.concurrent_kv_heads = std::max(plan.concurrent_kv_heads, static_cast<std::uint32_t>(kv.size()));
    }
    return plan;
}

}  // namespace fusioncim::sched
