#include "fusioncim/report.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "fusioncim/pipeline.hpp"

namespace fusioncim::report {

namespace {

using u64 = std::uint64_t;

std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

template <typename T>
T parse_number(const std::string& s, const std::string& column) {
    T v{};
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) throw ReportError("bad value '" + s + "' in column " + column);
    return v;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// thrown (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

attention::GeneratorSpec plan_generator(const ExperimentPlan& plan) {
    auto g = plan.generator;
    g.seed = plan.seed;
    if (plan.generator_fixed) return g;
    switch (plan.profile.model.positional_mode) {
        case config::PositionalMode::rope_like: g.mode = attention::GeneratorMode::rope_like; break;
        case config::PositionalMode::alibi_like: g.mode = attention::GeneratorMode::alibi_like; break;
        case config::PositionalMode::uniform: g.mode = attention::GeneratorMode::uniform; break;
        case config::PositionalMode::trace:
            throw std::invalid_argument("positional_mode 'trace' needs an explicit score generator for sweeps");
    }
    return g;
}

struct Point {
    std::uint32_t seq_len;
    Design design;
    sched::OrderMode order;
    cost::Ablation ablation;
};

std::string describe(const Point& p) {
    return "design=" + to_string(p.design) + " seq_len=" + std::to_string(p.seq_len) + " order=" +
           sched::to_string(p.order) + " ablation=" + p.ablation.label();
}

ReportRow make_row(const Point& p, const SimResult& r) {
    ReportRow row;
    row.design = to_string(p.design);
    row.seq_len = p.seq_len;
    row.order = sched::to_string(p.order);
    row.ablation = p.ablation.label();
    row.cycles = r.cycles;
    row.wall_ms = r.wall_time_s * 1e3;
    row.total_energy_j = r.energy.total;
    row.offchip_bytes = r.counters.offchip.total();
    const auto& on = r.counters.onchip;
    row.onchip_kv_stream = on.kv_stream;
    row.onchip_kv_cim_write = on.kv_cim_write;
    row.onchip_gb_read = on.gb_read;
    row.onchip_transpose_rw = on.transpose_rw;
    row.onchip_psum_move = on.psum_move;
    row.onchip_total = on.total();
    row.rescale_count = r.counters.rescale_count;
    return row;
}

}  // namespace

void ExperimentPlan::validate() const {
    if (designs.empty()) throw std::invalid_argument("experiment plan: no designs");
    if (seq_lens.empty()) throw std::invalid_argument("experiment plan: no sequence lengths");
    if (orders.empty()) throw std::invalid_argument("experiment plan: no traversal orders");
    if (ablations.empty()) throw std::invalid_argument("experiment plan: no ablation settings");
    if (normalize && std::find(designs.begin(), designs.end(), Design::baseline1) == designs.end()) {
        throw std::invalid_argument("experiment plan: normalization requires baseline1");
    }
    const auto report = config::validate_config(profile.model, profile.arch);
    if (!report.ok()) {
        throw std::invalid_argument("experiment plan: invalid config: " + report.violations.front().field + ": " +
                                    report.violations.front().message);
    }
    for (auto n : seq_lens) {
        if (n == 0 || n > profile.model.max_seq_len) {
            throw std::invalid_argument("experiment plan: seq_len " + std::to_string(n) + " out of range");
        }
    }
    (void)plan_generator(*this);
}

u64 head_rescale_count(const WorkloadSpec& workload, const attention::GeneratorSpec& generator, std::uint32_t n_hes,
                       sched::OrderMode mode, u64 seed) {
    const auto schedule = sched::build_inter_tile_schedule(workload, n_hes);
    std::vector<double> scores(workload.seq_len);
    u64 total = 0;
    for (std::uint32_t r = 0; r < workload.q_rows; ++r) {
        attention::generate_score_row(generator, r, workload.query_position(r), workload.seq_len, workload.causal,
                                      scores);
        attention::MaxTracker tracker;
        for (auto c : sched::row_traversal(schedule, workload, r, mode, seed)) tracker.push(scores[c]);
        total += tracker.rescale_count;
    }
    return total;
}

std::vector<ReportRow> run_experiment(const ExperimentPlan& plan) {
    plan.validate();
    const auto generator = plan_generator(plan);
    const auto& model = plan.profile.model;
    const auto& arch = plan.profile.arch;
    const u64 heads_x_layers = static_cast<u64>(model.num_q_heads) * model.num_layers;

    std::vector<Point> points;
    for (auto n : plan.seq_lens) {
        for (auto d : plan.designs) {
            for (auto o : plan.orders) {
                if (d == Design::fusioncim) {
                    for (const auto& a : plan.ablations) points.push_back({n, d, o, a});
                } else {
                    points.push_back({n, d, o, {}});
                }
            }
        }
    }

    // One representative head per (seq_len, order); forward is always needed
    // as the reduction reference and for baseline2.
    std::vector<std::pair<std::uint32_t, sched::OrderMode>> rescale_keys;
    for (auto n : plan.seq_lens) {
        rescale_keys.emplace_back(n, sched::OrderMode::forward);
        for (auto o : plan.orders) {
            if (o != sched::OrderMode::forward) rescale_keys.emplace_back(n, o);
        }
    }
    std::sort(rescale_keys.begin(), rescale_keys.end());
    rescale_keys.erase(std::unique(rescale_keys.begin(), rescale_keys.end()), rescale_keys.end());
    std::vector<u64> rescale_values(rescale_keys.size());
    parallel_for(rescale_keys.size(), plan.jobs, [&](std::size_t i) {
        const auto [n, o] = rescale_keys[i];
        try {
            const auto w = derive_workload(model, plan.phase, n, plan.decode_parallel);
            rescale_values[i] = head_rescale_count(w, generator, arch.num_hes, o, plan.seed);
        } catch (const std::exception& e) {
            throw ExperimentError("rescale count seq_len=" + std::to_string(n) + " order=" + sched::to_string(o) +
                                  ": " + e.what());
        }
    });
    auto head_rescales = [&](std::uint32_t n, sched::OrderMode o) {
        const auto it = std::lower_bound(rescale_keys.begin(), rescale_keys.end(), std::make_pair(n, o));
        return rescale_values[static_cast<std::size_t>(it - rescale_keys.begin())];
    };

    std::vector<ReportRow> rows(points.size());
    parallel_for(points.size(), plan.jobs, [&](std::size_t i) {
        const auto& p = points[i];
        try {
            const auto w = derive_workload(model, plan.phase, p.seq_len, plan.decode_parallel);
            const auto sys = sched::build_system_plan(w, arch.num_hes);
            pipeline::SystemOptions opt;
            opt.design = p.design;
            opt.spec = plan.baseline;
            opt.ablation = p.ablation;
            const u64 forward = head_rescales(p.seq_len, sched::OrderMode::forward);
            u64 per_head = 0;
            if (p.design == Design::fusioncim) per_head = head_rescales(p.seq_len, p.order);
            if (p.design == Design::baseline2) per_head = forward;
            opt.rescale_events = per_head * heads_x_layers;
            rows[i] = make_row(p, pipeline::simulate_system(w, arch, sys, opt));
            if (p.design == Design::fusioncim && forward > 0) {
                const double ratio = 1.0 - static_cast<double>(per_head) / static_cast<double>(forward);
                rows[i].rescale_reduction_vs_forward = std::clamp(ratio, 0.0, 1.0);
            }
        } catch (const std::exception& e) {
            throw ExperimentError("simulation failed at " + describe(p) + ": " + e.what());
        }
    });

    if (plan.normalize) {
        std::map<std::uint32_t, const ReportRow*> reference;
        for (const auto& r : rows) {
            if (r.design == "baseline1") reference.emplace(r.seq_len, &r);
        }
        for (auto& r : rows) {
            const auto* ref = reference.at(r.seq_len);
            r.normalized_latency = static_cast<double>(r.cycles) / static_cast<double>(ref->cycles);
            r.normalized_energy = r.total_energy_j / ref->total_energy_j;
        }
    }

    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.seq_len, a.design, a.order, a.ablation) < std::tie(b.seq_len, b.design, b.order, b.ablation);
    });
    return rows;
}

Format format_from_string(const std::string& s) {
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw std::invalid_argument("unknown report format '" + s + "'");
}

const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> header{
        "design",         "seq_len",          "order",
        "ablation",       "cycles",           "wall_ms",
        "normalized_latency", "total_energy_j", "normalized_energy",
        "offchip_bytes",  "onchip_kv_stream", "onchip_kv_cim_write",
        "onchip_gb_read", "onchip_transpose_rw", "onchip_psum_move",
        "onchip_total",   "rescale_count",    "rescale_reduction_vs_forward"};
    return header;
}

namespace {

std::vector<std::string> row_fields(const ReportRow& r) {
    return {r.design,
            std::to_string(r.seq_len),
            r.order,
            r.ablation,
            std::to_string(r.cycles),
            fmt_double(r.wall_ms),
            fmt_double(r.normalized_latency),
            fmt_double(r.total_energy_j),
            fmt_double(r.normalized_energy),
            std::to_string(r.offchip_bytes),
            std::to_string(r.onchip_kv_stream),
            std::to_string(r.onchip_kv_cim_write),
            std::to_string(r.onchip_gb_read),
            std::to_string(r.onchip_transpose_rw),
            std::to_string(r.onchip_psum_move),
            std::to_string(r.onchip_total),
            std::to_string(r.rescale_count),
            fmt_double(r.rescale_reduction_vs_forward)};
}

ReportRow row_from_fields(const std::vector<std::string>& f) {
    const auto& h = csv_header();
    auto u = [&](std::size_t i) { return parse_number<u64>(f[i], h[i]); };
    auto d = [&](std::size_t i) { return parse_number<double>(f[i], h[i]); };
    ReportRow r;
    r.design = f[0];
    r.seq_len = parse_number<std::uint32_t>(f[1], h[1]);
    r.order = f[2];
    r.ablation = f[3];
    r.cycles = u(4);
    r.wall_ms = d(5);
    r.normalized_latency = d(6);
    r.total_energy_j = d(7);
    r.normalized_energy = d(8);
    r.offchip_bytes = u(9);
    r.onchip_kv_stream = u(10);
    r.onchip_kv_cim_write = u(11);
    r.onchip_gb_read = u(12);
    r.onchip_transpose_rw = u(13);
    r.onchip_psum_move = u(14);
    r.onchip_total = u(15);
    r.rescale_count = u(16);
    r.rescale_reduction_vs_forward = d(17);
    return r;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

std::string to_csv(const std::vector<ReportRow>& rows) {
    std::string out;
    auto append = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    append(csv_header());
    for (const auto& r : rows) append(row_fields(r));
    return out;
}

std::vector<ReportRow> parse_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || split_line(line) != csv_header()) throw ReportError("CSV header mismatch");
    std::vector<ReportRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (f.size() != csv_header().size()) {
            throw ReportError("CSV line " + std::to_string(lineno) + ": expected " +
                              std::to_string(csv_header().size()) + " fields");
        }
        rows.push_back(row_from_fields(f));
    }
    return rows;
}

std::string to_json(const std::vector<ReportRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        o["design"] = r.design;
        o["seq_len"] = r.seq_len;
        o["order"] = r.order;
        o["ablation"] = r.ablation;
        o["cycles"] = r.cycles;
        o["wall_ms"] = r.wall_ms;
        o["normalized_latency"] = r.normalized_latency;
        o["total_energy_j"] = r.total_energy_j;
        o["normalized_energy"] = r.normalized_energy;
        o["offchip_bytes"] = r.offchip_bytes;
        o["onchip_kv_stream"] = r.onchip_kv_stream;
        o["onchip_kv_cim_write"] = r.onchip_kv_cim_write;
        o["onchip_gb_read"] = r.onchip_gb_read;
        o["onchip_transpose_rw"] = r.onchip_transpose_rw;
        o["onchip_psum_move"] = r.onchip_psum_move;
        o["onchip_total"] = r.onchip_total;
        o["rescale_count"] = r.rescale_count;
        o["rescale_reduction_vs_forward"] = r.rescale_reduction_vs_forward;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

std::vector<ReportRow> parse_json(const std::string& text) {
    std::vector<ReportRow> rows;
    try {
        const auto arr = nlohmann::json::parse(text);
        if (!arr.is_array()) throw ReportError("JSON report must be an array");
        for (const auto& o : arr) {
            ReportRow r;
            r.design = o.at("design").get<std::string>();
            r.seq_len = o.at("seq_len").get<std::uint32_t>();
            r.order = o.at("order").get<std::string>();
            r.ablation = o.at("ablation").get<std::string>();
            r.cycles = o.at("cycles").get<u64>();
            r.wall_ms = o.at("wall_ms").get<double>();
            r.normalized_latency = o.at("normalized_latency").get<double>();
            r.total_energy_j = o.at("total_energy_j").get<double>();
            r.normalized_energy = o.at("normalized_energy").get<double>();
            r.offchip_bytes = o.at("offchip_bytes").get<u64>();
            r.onchip_kv_stream = o.at("onchip_kv_stream").get<u64>();
            r.onchip_kv_cim_write = o.at("onchip_kv_cim_write").get<u64>();
            r.onchip_gb_read = o.at("onchip_gb_read").get<u64>();
            r.onchip_transpose_rw = o.at("onchip_transpose_rw").get<u64>();
            r.onchip_psum_move = o.at("onchip_psum_move").get<u64>();
            r.onchip_total = o.at("onchip_total").get<u64>();
            r.rescale_count = o.at("rescale_count").get<u64>();
            r.rescale_reduction_vs_forward = o.at("rescale_reduction_vs_forward").get<double>();
            rows.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ReportError(std::string("JSON report: ") + e.what());
    }
    return rows;
}

void emit_report(const std::vector<ReportRow>& rows, Format format, const std::filesystem::path& path) {
    if (rows.empty()) throw ReportError("emit_report: no rows");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ReportError("cannot write report to " + path.string());
    os << (format == Format::csv ? to_csv(rows) : to_json(rows));
    if (!os) throw ReportError("write failed for " + path.string());
}

}  // namespace fusioncim::report
