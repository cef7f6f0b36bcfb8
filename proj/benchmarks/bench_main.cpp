#include <benchmark/benchmark.h>

#include "fusioncim/pipeline.hpp"
#include "fusioncim/report.hpp"

using namespace fusioncim;

namespace {

struct Setup {
    config::Profile profile{config::default_profile()};
    WorkloadSpec workload;
    sched::SystemPlan plan;

    explicit Setup(std::uint32_t n)
        : workload(derive_workload(profile.model, Phase::prefill, n)),
          plan(sched::build_system_plan(workload, profile.arch.num_hes)) {}
};

void bm_engine_sim(benchmark::State& state) {
    const Setup s(static_cast<std::uint32_t>(state.range(0)));
    const auto params = pipeline::EngineParams::from(s.profile.arch, s.workload.head_dim);
    const auto work = pipeline::engine_work(s.workload, s.plan, params);
    std::uint64_t vectors = 0;
    for (auto _ : state) {
        const auto r = pipeline::simulate_engine(work.front(), params);
        vectors += r.vectors;
        benchmark::DoNotOptimize(r.cycles);
    }
    state.counters["vectors/s"] = benchmark::Counter(static_cast<double>(vectors), benchmark::Counter::kIsRate);
}
BENCHMARK(bm_engine_sim)->Arg(1024)->Arg(4096);

void bm_closed_form(benchmark::State& state) {
    const Setup s(static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(pipeline::closed_form_cycles(s.workload, s.profile.arch, s.plan, Design::fusioncim));
    }
}
BENCHMARK(bm_closed_form)->Arg(1024)->Arg(8192);

void bm_system_sim(benchmark::State& state) {
    const Setup s(static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(pipeline::simulate_system(s.workload, s.profile.arch, s.plan).cycles);
}
BENCHMARK(bm_system_sim)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void bm_rescale_count(benchmark::State& state) {
    const Setup s(static_cast<std::uint32_t>(state.range(0)));
    const attention::GeneratorSpec g;
    for (auto _ : state) {
        benchmark::DoNotOptimize(report::head_rescale_count(s.workload, g, s.profile.arch.num_hes,
                                                            sched::OrderMode::reverse_diagonal_first, 0));
    }
}
BENCHMARK(bm_rescale_count)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void bm_schedule(benchmark::State& state) {
    const Setup s(static_cast<std::uint32_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(sched::build_system_plan(s.workload, s.profile.arch.num_hes).jobs.size());
}
BENCHMARK(bm_schedule)->Arg(4096)->Arg(8192);

}  // namespace

BENCHMARK_MAIN();
