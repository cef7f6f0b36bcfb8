#pragma once

#include <cstdint>
#include <string>

namespace fusioncim {

enum class Design { fusioncim, baseline1, baseline2 };

[[nodiscard]] std::string to_string(Design d);
[[nodiscard]] Design design_from_string(const std::string& s);

struct OffchipBytes {
    std::uint64_t q_in{0};
    std::uint64_t k_in{0};
    std::uint64_t v_in{0};
    std::uint64_t o_out{0};
    std::uint64_t score_rw{0};

    [[nodiscard]] std::uint64_t total() const { return q_in + k_in + v_in + o_out + score_rw; }
};

/// On-chip traffic. `total()` is the KV / transpose / partial-sum access
/// volume used for design comparison; Q loads into CIM and the final
/// output readout are tracked separately and only enter energy.
struct OnchipBytes {
    std::uint64_t kv_stream{0};     // KV delivered into engine-local stream buffers
    std::uint64_t kv_cim_write{0};  // KV written into CIM arrays as stationary operands
    std::uint64_t gb_read{0};       // global-buffer reads (a multicast counts once)
    std::uint64_t transpose_rw{0};
    std::uint64_t psum_move{0};     // intermediate partial-sum movement
    std::uint64_t q_cim_write{0};
    std::uint64_t cim_read{0};      // final output readout

    [[nodiscard]] std::uint64_t kv_loading() const { return kv_stream + kv_cim_write + gb_read; }
    [[nodiscard]] std::uint64_t total() const { return kv_loading() + transpose_rw + psum_move; }
};

struct OpCounts {
    std::uint64_t mac_ip{0};
    std::uint64_t mac_op{0};
    std::uint64_t sfu{0};
};

struct EventCounters {
    OffchipBytes offchip;
    OnchipBytes onchip;
    OpCounts ops;
    std::uint64_t rescale_count{0};

    EventCounters& operator+=(const EventCounters& o);
    /// Multiplies every counter by `c`.
    EventCounters& scale(std::uint64_t c);
    friend bool operator==(const EventCounters&, const EventCounters&) = default;
};

struct EnergyBreakdown {
    double dram{0};
    double gb{0};
    double cim_read{0};
    double cim_write{0};
    double mac_ip{0};
    double mac_op{0};
    double sfu{0};
    double total{0};
};

struct SimResult {
    Design design{Design::fusioncim};
    std::uint64_t cycles{0};
    std::uint64_t compute_cycles{0};
    std::uint64_t stall_cycles{0};
    double wall_time_s{0};
    EventCounters counters;
    EnergyBreakdown energy;
};

inline bool operator==(const OffchipBytes& a, const OffchipBytes& b) {
    return a.q_in == b.q_in && a.k_in == b.k_in && a.v_in == b.v_in && a.o_out == b.o_out && a.score_rw == b.score_rw;
}
inline bool operator==(const OnchipBytes& a, const OnchipBytes& b) {
    return a.kv_stream == b.kv_stream && a.kv_cim_write == b.kv_cim_write && a.gb_read == b.gb_read &&
           a.transpose_rw == b.transpose_rw && a.psum_move == b.psum_move && a.q_cim_write == b.q_cim_write &&
           a.cim_read == b.cim_read;
}
inline bool operator==(const OpCounts& a, const OpCounts& b) {
    return a.mac_ip == b.mac_ip && a.mac_op == b.mac_op && a.sfu == b.sfu;
}

}  // namespace fusioncim
