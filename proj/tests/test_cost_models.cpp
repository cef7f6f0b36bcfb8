#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "fusioncim/cost_models.hpp"
#include "fusioncim/pipeline.hpp"

using namespace fusioncim;
using namespace fusioncim::cost;
using Catch::Matchers::WithinRel;

namespace {

using u64 = std::uint64_t;

config::Profile one_head(bool causal = true) {
    auto p = config::default_profile();
    p.model.num_q_heads = 1;
    p.model.num_kv_heads = 1;
    p.model.num_layers = 1;
    p.model.causal = causal;
    return p;
}

struct Case {
    WorkloadSpec w;
    sched::SystemPlan plan;
};

Case make(const config::Profile& p, std::uint32_t n, Phase phase = Phase::prefill) {
    auto w = derive_workload(p.model, phase, n);
    auto plan = sched::build_system_plan(w, p.arch.num_hes);
    return {std::move(w), std::move(plan)};
}

double onchip_reduction(const config::Profile& p, std::uint32_t n, const Ablation& a = {}) {
    const auto c = make(p, n);
    const auto f = model_fusioncim_access(c.w, p.arch, c.plan, {}, a);
    const auto b = model_baseline2(c.w, p.arch, c.plan);
    return 1.0 - static_cast<double>(f.onchip.total()) / static_cast<double>(b.counters.onchip.total());
}

}  // namespace

TEST_CASE("fused off-chip traffic for one head") {
    const auto p = one_head();
    const auto c = make(p, 256);
    const auto f = model_fusioncim_access(c.w, p.arch, c.plan);
    CHECK(f.offchip.total() == 4u * 256 * 128);
    CHECK(f.offchip.total() == 131072);
    CHECK(f.offchip.score_rw == 0);
    CHECK(f.onchip.transpose_rw == 0);
    CHECK(f.onchip.psum_move == 0);
    CHECK(f.onchip.kv_cim_write == 0);
}

TEST_CASE("decode traffic is dominated by K and V") {
    const auto p = one_head();
    const auto c = make(p, 4096, Phase::decode);
    const auto f = model_fusioncim_access(c.w, p.arch, c.plan);
    CHECK(f.offchip.total() == 2u * 4096 * 128 + 2u * 128);
    CHECK(f.offchip.k_in + f.offchip.v_in == 2u * 4096 * 128);
}

TEST_CASE("baseline1 materializes scores off-chip") {
    const auto p = one_head(false);
    const auto c256 = make(p, 256);
    const auto b256 = model_baseline1(c256.w, p.arch, c256.plan);
    CHECK(b256.counters.offchip.score_rw == 2u * 256 * 256 * 2 + 2u * 256 * 256 * 1);
    CHECK(b256.counters.offchip.score_rw == 393216);

    const auto c512 = make(p, 512);
    const auto b512 = model_baseline1(c512.w, p.arch, c512.plan);
    const auto base = [](const SimResult& r) { return r.counters.offchip.total() - r.counters.offchip.score_rw; };
    CHECK(b512.counters.offchip.score_rw == 4 * b256.counters.offchip.score_rw);
    CHECK(base(b512) == 2 * base(b256));
    CHECK(b256.counters.onchip.transpose_rw > 0);
}

TEST_CASE("baseline2 writes every KV tile pair into CIM") {
    const auto p = one_head(false);
    const auto c = make(p, 256);
    REQUIRE(c.w.q_tiles == 2);
    REQUIRE(c.w.kv_tiles == 2);
    const auto b = model_baseline2(c.w, p.arch, c.plan);
    CHECK(b.counters.onchip.kv_cim_write == 2u * 2 * 2 * 128 * 128);
    CHECK(b.counters.onchip.transpose_rw == 2u * 2 * 128 * 128 * BaselineSpec{}.transpose_factor);
    CHECK(b.counters.onchip.psum_move == 2u * 2 * 128 * 128 * BaselineSpec{}.psum_bytes);
    CHECK(b.counters.offchip.score_rw == 0);
    const auto f = model_fusioncim_access(c.w, p.arch, c.plan);
    CHECK(f.onchip.kv_cim_write == 0);
}

TEST_CASE("baseline2 KV loads follow the causal triangle") {
    const auto p = one_head(true);
    for (std::uint32_t n : {512u, 1024u, 4096u}) {
        const auto c = make(p, n);
        const u64 pairs = c.w.tile_pairs_per_head();
        CHECK(pairs == u64{c.w.q_tiles} * (c.w.q_tiles + 1) / 2);
        CHECK(model_baseline2(c.w, p.arch, c.plan).counters.onchip.kv_cim_write == pairs * 2 * 128 * 128);
    }
}

TEST_CASE("baseline2 is slower than the fused design at two write cycles per row") {
    auto p = config::default_profile();
    p.arch.cim_write_cycles_per_row = 2;
    for (std::uint32_t n : {256u, 512u, 1024u, 2048u, 4096u}) {
        const auto c = make(p, n);
        const auto b2 = model_baseline2(c.w, p.arch, c.plan).cycles;
        const auto f = pipeline::closed_form_cycles(c.w, p.arch, c.plan, Design::fusioncim);
        INFO("n=" << n);
        CHECK(b2 > f);
    }
}

TEST_CASE("energy of simple counter sets") {
    const auto table = config::derive_energy_table(config::default_profile().arch);
    const auto zero = energy_from_counters(EventCounters{}, table);
    CHECK(zero.total == 0.0);

    EventCounters c;
    c.offchip.q_in = 100;
    const auto e = energy_from_counters(c, table);
    CHECK_THAT(e.total, WithinRel(4e-9, 1e-12));
    CHECK(e.total == e.dram);
}

TEST_CASE("energy breakdown is an exact sum and scales linearly") {
    const auto p = config::default_profile();
    const auto c = make(p, 1024);
    SimResult r = pipeline::simulate_system(c.w, p.arch, c.plan);
    const auto& e = r.energy;
    CHECK(e.total == e.dram + e.gb + e.cim_read + e.cim_write + e.mac_ip + e.mac_op + e.sfu);
    CHECK(e.total > 0);

    const auto table = config::derive_energy_table(p.arch);
    auto doubled = r.counters;
    doubled.scale(2);
    CHECK(energy_from_counters(doubled, table).total == 2 * e.total);
    auto tripled = r.counters;
    tripled.scale(3);
    CHECK_THAT(energy_from_counters(tripled, table).total, WithinRel(3 * e.total, 1e-14));
}

TEST_CASE("energy table entries must be usable") {
    auto table = config::derive_energy_table(config::default_profile().arch);
    table.dram = -1;
    CHECK_THROWS(energy_from_counters(EventCounters{}, table));
    table.dram = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(energy_from_counters(EventCounters{}, table));
}

TEST_CASE("peak efficiency against the reported chip figures") {
    const auto pe = peak_efficiency(config::default_profile().arch);
    CHECK(std::fabs(pe.tops_per_mm2 / 2.03 - 1.0) <= 0.15);
    CHECK(std::fabs(pe.tops_per_w / 29.4 - 1.0) <= 0.15);
}

TEST_CASE("off-chip reduction against baseline1 grows with length") {
    const auto p = config::default_profile();
    double prev = -1;
    for (std::uint32_t n : {256u, 512u, 1024u, 2048u, 4096u}) {
        const auto c = make(p, n);
        const auto f = model_fusioncim_access(c.w, p.arch, c.plan);
        const auto b = model_baseline1(c.w, p.arch, c.plan);
        const double red =
            1.0 - static_cast<double>(f.offchip.total()) / static_cast<double>(b.counters.offchip.total());
        CHECK(red > prev);
        prev = red;
    }
}

TEST_CASE("on-chip savings decompose into three categories") {
    const auto p = config::default_profile();
    for (std::uint32_t n : {256u, 1024u, 4096u}) {
        const auto c = make(p, n);
        const auto f = model_fusioncim_access(c.w, p.arch, c.plan).onchip;
        const auto b = model_baseline2(c.w, p.arch, c.plan).counters.onchip;
        const u64 kv_saving = b.kv_loading() - f.kv_loading();
        const u64 tr_saving = b.transpose_rw - f.transpose_rw;
        const u64 ps_saving = b.psum_move - f.psum_move;
        CHECK(b.total() - f.total() == kv_saving + tr_saving + ps_saving);

        const auto kv = model_fusioncim_access(c.w, p.arch, c.plan, {}, {true, false, false}).onchip;
        CHECK(kv.kv_loading() == b.kv_loading());
        CHECK(kv.transpose_rw == f.transpose_rw);
        CHECK(kv.psum_move == f.psum_move);

        const auto tr = model_fusioncim_access(c.w, p.arch, c.plan, {}, {false, true, false}).onchip;
        CHECK(tr.transpose_rw == b.transpose_rw);
        CHECK(tr.kv_loading() == f.kv_loading());
        CHECK(tr.psum_move == f.psum_move);

        const auto ps = model_fusioncim_access(c.w, p.arch, c.plan, {}, {false, false, true}).onchip;
        CHECK(ps.psum_move == b.psum_move);
        CHECK(ps.kv_loading() == f.kv_loading());
        CHECK(ps.transpose_rw == f.transpose_rw);

        const auto all = model_fusioncim_access(c.w, p.arch, c.plan, {}, {true, true, true}).onchip;
        CHECK(all.total() == b.total());

        const double none = onchip_reduction(p, n);
        for (const auto& a : {Ablation{true, false, false}, Ablation{false, true, false}, Ablation{false, false, true}}) {
            CHECK(onchip_reduction(p, n, a) < none);
        }
    }
}

TEST_CASE("KV spills to DRAM when the buffer is too small") {
    auto p = config::default_profile();
    const auto fits = make(p, 4096);
    CHECK(kv_fits_in_buffer(fits.w, p.arch, fits.plan));
    p.arch.gb_bytes = 256 * 1024;
    CHECK_FALSE(kv_fits_in_buffer(fits.w, p.arch, fits.plan));
    const auto f = model_fusioncim_access(fits.w, p.arch, fits.plan);
    u64 broadcast_vectors = 0;
    for (const auto& job : fits.plan.jobs) {
        for (auto t : job.broadcast_tiles) broadcast_vectors += fits.w.kv_tile_len(t);
    }
    CHECK(f.offchip.k_in == broadcast_vectors * 128 * p.model.num_layers);
    CHECK(f.offchip.k_in > u64{p.model.num_kv_heads} * fits.w.bytes_k * p.model.num_layers);
}

TEST_CASE("DRAM helpers") {
    CHECK(dram_cycles(0, 10) == 0);
    CHECK(dram_cycles(100, 10) == 10);
    CHECK(dram_cycles(101, 10) == 11);
    CHECK_THROWS(dram_cycles(1, 0));
    CHECK_THROWS(dram_cycles(1, -5));
    CHECK(dram_stall_cycles(100, 500, 10) == 0);
    CHECK(dram_stall_cycles(10, 500, 10) == 40);
}

TEST_CASE("ablation labels") {
    CHECK(Ablation{}.label() == "none");
    CHECK(Ablation{true, false, true}.label() == "kv-stream+psum");
    CHECK(ablation_from_string("transpose") == Ablation{false, true, false});
    CHECK(ablation_from_string("none") == Ablation{});
    CHECK_THROWS(ablation_from_string("everything"));
}
