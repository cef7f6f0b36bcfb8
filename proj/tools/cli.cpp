#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "fusioncim/attention.hpp"
#include "fusioncim/config.hpp"
#include "fusioncim/cost_models.hpp"
#include "fusioncim/pipeline.hpp"
#include "fusioncim/report.hpp"
#include "fusioncim/scheduler.hpp"
#include "fusioncim/workload.hpp"

namespace fusioncim::cli {

namespace {

struct Options {
    std::string config{"default"};
    std::string out;
    std::string format{"csv"};
    std::string design{"fusioncim"};
    std::uint32_t seq_len{4096};
    std::vector<std::uint32_t> seq_lens;
    std::vector<std::string> designs;
    std::vector<std::string> orders;
    std::string order{"reverse"};
    std::uint64_t seed{42};
    std::vector<std::string> ablate;
    unsigned jobs{1};
    std::string phase{"prefill"};
    std::uint32_t decode_parallel{1};
    std::string generator;
    std::string trace;
    std::string occupancy;

    std::string gen_mode{"rope_like"};
    std::uint32_t rows{128};
    std::uint32_t cols{128};
    bool causal{true};
    std::uint32_t q_tiles{0};
    std::uint32_t hes{0};
};

std::vector<cost::Ablation> parse_ablations(const std::vector<std::string>& names) {
    std::vector<cost::Ablation> out;
    if (names.empty()) return {cost::Ablation{}};
    for (const auto& n : names) {
        if (n == "all") {
            out.push_back({});
            out.push_back({true, false, false});
            out.push_back({false, true, false});
            out.push_back({false, false, true});
        } else {
            out.push_back(cost::ablation_from_string(n));
        }
    }
    std::vector<cost::Ablation> unique;
    for (const auto& a : out) {
        if (std::find(unique.begin(), unique.end(), a) == unique.end()) unique.push_back(a);
    }
    return unique;
}

report::ExperimentPlan base_plan(const Options& o) {
    report::ExperimentPlan plan;
    plan.profile = config::resolve_profile(o.config);
    plan.seed = o.seed;
    plan.jobs = std::max(1u, o.jobs);
    plan.phase = o.phase == "decode" ? Phase::decode : Phase::prefill;
    if (o.phase != "decode" && o.phase != "prefill") throw std::invalid_argument("unknown phase '" + o.phase + "'");
    plan.decode_parallel = o.decode_parallel;
    if (!o.generator.empty()) {
        plan.generator.mode = attention::generator_mode_from_string(o.generator);
        plan.generator_fixed = true;
    }
    return plan;
}

void write_or_print(const std::vector<report::ReportRow>& rows, const Options& o, std::ostream& out) {
    const auto fmt = report::format_from_string(o.format);
    if (o.out.empty()) {
        out << (fmt == report::Format::csv ? report::to_csv(rows) : report::to_json(rows));
    } else {
        report::emit_report(rows, fmt, o.out);
        out << "wrote " << rows.size() << " rows to " << o.out << "\n";
    }
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
    const auto profile = config::resolve_profile(o.config);
    const auto rep = config::validate_config(profile.model, profile.arch);
    if (rep.ok()) {
        out << "config ok\n";
        return 0;
    }
    for (const auto& v : rep.violations) err << "invalid " << v.field << ": " << v.message << "\n";
    return 1;
}

// Rescale counts of an ingested score trace under forward and `mode` order.
void trace_rescales(const Options& o, const config::Profile& profile, sched::OrderMode mode, std::ostream& out) {
    const auto trace = attention::read_trace(o.trace);
    const auto rows = static_cast<std::uint32_t>(trace.scores.rows);
    const auto cols = static_cast<std::uint32_t>(trace.scores.cols);
    auto model = profile.model;
    model.causal = trace.causal;
    model.max_seq_len = std::max(model.max_seq_len, cols);
    const auto w = rows == cols ? derive_workload(model, Phase::prefill, cols)
                                : derive_workload(model, Phase::decode, cols, rows);
    const auto schedule = sched::build_inter_tile_schedule(w, profile.arch.num_hes);
    std::vector<attention::RowOrder> fwd, ord;
    for (std::uint32_t r = 0; r < rows; ++r) {
        fwd.push_back(sched::row_traversal(schedule, w, r, sched::OrderMode::forward));
        ord.push_back(sched::row_traversal(schedule, w, r, mode, o.seed));
    }
    const auto a = attention::count_rescales(trace.scores, trace.causal, fwd).total;
    const auto b = attention::count_rescales(trace.scores, trace.causal, ord).total;
    out << "trace_rows: " << rows << "\ntrace_cols: " << cols << "\ntrace_rescale_forward: " << a
        << "\ntrace_rescale_" << sched::to_string(mode) << ": " << b << "\ntrace_rescale_reduction: "
        << (a == 0 ? 0.0 : 1.0 - static_cast<double>(b) / static_cast<double>(a)) << "\n";
}

int cmd_run(const Options& o, std::ostream& out) {
    auto plan = base_plan(o);
    const auto design = design_from_string(o.design);
    const auto mode = sched::order_mode_from_string(o.order);
    plan.seq_lens = {o.seq_len};
    plan.designs = {Design::baseline1};
    if (design != Design::baseline1) plan.designs.push_back(design);
    plan.orders = {mode};
    plan.ablations = parse_ablations(o.ablate);
    const auto rows = report::run_experiment(plan);

    if (!o.occupancy.empty() && design == Design::fusioncim) {
        std::ofstream os(o.occupancy);
        if (!os) throw std::runtime_error("cannot write occupancy trace to " + o.occupancy);
        const auto w = derive_workload(plan.profile.model, plan.phase, o.seq_len, plan.decode_parallel);
        const auto sys = sched::build_system_plan(w, plan.profile.arch.num_hes);
        const auto params = pipeline::EngineParams::from(plan.profile.arch, w.head_dim);
        (void)pipeline::simulate_engine(pipeline::engine_work(w, sys, params).front(), params, &os);
    }

    std::vector<report::ReportRow> selected;
    for (const auto& r : rows) {
        if (r.design == to_string(design)) selected.push_back(r);
    }
    if (!o.out.empty()) {
        write_or_print(selected, o, out);
    }
    const auto& h = report::csv_header();
    const auto csv = report::to_csv(selected);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string field;
        for (std::size_t i = 0; std::getline(ls, field, ','); ++i) out << h[i] << ": " << field << "\n";
    }
    if (!o.trace.empty()) trace_rescales(o, plan.profile, mode, out);
    return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    auto plan = base_plan(o);
    if (!o.seq_lens.empty()) plan.seq_lens = o.seq_lens;
    if (!o.designs.empty()) {
        plan.designs.clear();
        for (const auto& d : o.designs) plan.designs.push_back(design_from_string(d));
    }
    if (!o.orders.empty()) {
        plan.orders.clear();
        for (const auto& s : o.orders) plan.orders.push_back(sched::order_mode_from_string(s));
    }
    plan.ablations = parse_ablations(o.ablate);
    write_or_print(report::run_experiment(plan), o, out);
    return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
    auto plan = base_plan(o);
    plan.seq_lens = o.seq_lens.empty() ? std::vector<std::uint32_t>{o.seq_len} : o.seq_lens;
    plan.orders = {sched::order_mode_from_string(o.order)};
    const auto rows = report::run_experiment(plan);
    if (!o.out.empty()) write_or_print(rows, o, out);
    out << std::left << std::setw(10) << "design" << std::setw(9) << "seq_len" << std::setw(14) << "cycles"
        << std::setw(10) << "speedup" << std::setw(12) << "energy_x" << std::setw(16) << "offchip_bytes"
        << "onchip_bytes\n";
    for (const auto& r : rows) {
        char speed[32], energy[32];
        std::snprintf(speed, sizeof speed, "%.3f", 1.0 / r.normalized_latency);
        std::snprintf(energy, sizeof energy, "%.3f", 1.0 / r.normalized_energy);
        out << std::setw(10) << r.design << std::setw(9) << r.seq_len << std::setw(14) << r.cycles << std::setw(10)
            << speed << std::setw(12) << energy << std::setw(16) << r.offchip_bytes << r.onchip_total << "\n";
    }
    return 0;
}

int cmd_trace_gen(const Options& o, std::ostream& out) {
    if (o.out.empty()) throw std::invalid_argument("trace-gen needs --out");
    if (o.causal && o.rows > o.cols) throw std::invalid_argument("causal trace needs rows <= cols");
    attention::GeneratorSpec spec;
    spec.mode = attention::generator_mode_from_string(o.gen_mode);
    spec.seed = o.seed;
    const auto scores = attention::generate_scores(spec, o.rows, o.cols, o.causal);
    attention::write_trace(o.out, scores, o.causal);
    char sum[32];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(attention::trace_checksum(scores)));
    out << "wrote " << o.rows << "x" << o.cols << " trace to " << o.out << " checksum " << sum << "\n";
    return 0;
}

int cmd_schedule_dump(const Options& o, std::ostream& out) {
    const auto profile = config::resolve_profile(o.config);
    const std::uint32_t hes = o.hes ? o.hes : profile.arch.num_hes;
    if (o.q_tiles) {
        sched::dump_schedule(out, sched::build_inter_tile_schedule(o.q_tiles, hes, o.causal));
    } else {
        auto model = profile.model;
        model.causal = o.causal;
        const auto w = derive_workload(model, o.phase == "decode" ? Phase::decode : Phase::prefill, o.seq_len,
                                       o.decode_parallel);
        sched::dump_schedule(out, sched::build_inter_tile_schedule(w, hes));
    }
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"FusionCIM attention accelerator simulator", "fusioncim"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* sc) {
        sc->add_option("--config", o.config, "profile file or 'default' (searched in FUSIONCIM_CONFIG_DIR)");
    };
    auto add_sim = [&](CLI::App* sc) {
        add_config(sc);
        sc->add_option("--out", o.out, "output report path");
        sc->add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "json"}));
        sc->add_option("--seed", o.seed, "score generator seed");
        sc->add_option("--jobs", o.jobs, "concurrent sweep points")->check(CLI::PositiveNumber);
        sc->add_option("--phase", o.phase, "prefill or decode")->check(CLI::IsMember({"prefill", "decode"}));
        sc->add_option("--decode-parallel", o.decode_parallel, "query rows per decode step");
        sc->add_option("--generator", o.generator, "score generator overriding the profile")
            ->check(CLI::IsMember({"rope_like", "alibi_like", "uniform"}));
        sc->add_option("--ablate", o.ablate, "kv-stream, transpose, psum or all")
            ->check(CLI::IsMember({"none", "kv-stream", "transpose", "psum", "all"}));
    };
    const auto order_check = CLI::IsMember({"forward", "reverse", "random"});

    auto* validate = app.add_subcommand("validate", "check a profile");
    add_config(validate);

    auto* run = app.add_subcommand("run", "simulate one design at one sequence length");
    add_sim(run);
    run->add_option("--design", o.design, "design")->check(CLI::IsMember({"fusioncim", "baseline1", "baseline2"}));
    run->add_option("--seq-len", o.seq_len, "sequence length");
    run->add_option("--order", o.order, "traversal order")->check(order_check);
    run->add_option("--trace", o.trace, "score trace for rescale counting");
    run->add_option("--occupancy", o.occupancy, "write engine 0 stage occupancy CSV");

    auto* sweep = app.add_subcommand("sweep", "sweep sequence lengths and designs");
    add_sim(sweep);
    sweep->add_option("--seq-len", o.seq_lens, "sequence lengths");
    sweep->add_option("--design", o.designs, "designs")
        ->check(CLI::IsMember({"fusioncim", "baseline1", "baseline2"}));
    sweep->add_option("--order", o.orders, "traversal orders")->check(order_check);

    auto* compare = app.add_subcommand("compare", "all designs side by side");
    add_sim(compare);
    compare->add_option("--seq-len", o.seq_lens, "sequence lengths");
    compare->add_option("--order", o.order, "traversal order")->check(order_check);

    auto* trace_gen = app.add_subcommand("trace-gen", "write a synthetic score trace");
    trace_gen->add_option("--out", o.out, "trace path")->required();
    trace_gen->add_option("--mode", o.gen_mode, "generator")
        ->check(CLI::IsMember({"rope_like", "alibi_like", "uniform"}));
    trace_gen->add_option("--rows", o.rows, "query rows");
    trace_gen->add_option("--cols", o.cols, "keys");
    trace_gen->add_option("--causal", o.causal, "apply causal mask");
    trace_gen->add_option("--seed", o.seed, "seed");

    auto* dump = app.add_subcommand("schedule-dump", "print the broadcast schedule");
    add_config(dump);
    dump->add_option("--seq-len", o.seq_len, "sequence length");
    dump->add_option("--q-tiles", o.q_tiles, "q tiles (overrides --seq-len)");
    dump->add_option("--hes", o.hes, "engines (default from profile)");
    dump->add_option("--causal", o.causal, "causal masking");
    dump->add_option("--phase", o.phase, "prefill or decode")->check(CLI::IsMember({"prefill", "decode"}));
    dump->add_option("--decode-parallel", o.decode_parallel, "query rows per decode step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(o, out, err);
        if (run->parsed()) return cmd_run(o, out);
        if (sweep->parsed()) return cmd_sweep(o, out);
        if (compare->parsed()) return cmd_compare(o, out);
        if (trace_gen->parsed()) return cmd_trace_gen(o, out);
        if (dump->parsed()) return cmd_schedule_dump(o, out);
    } catch (const std::exception& e) {
        err << "fusioncim: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace fusioncim::cli
