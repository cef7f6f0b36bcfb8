#include "fusioncim/counters.hpp"

#include <stdexcept>

namespace fusioncim {

std::string to_string(Design d) {
    switch (d) {
        case Design::fusioncim: return "fusioncim";
        case Design::baseline1: return "baseline1";
        case Design::baseline2: return "baseline2";
    }
    return "unknown";
}

Design design_from_string(const std::string& s) {
    if (s == "fusioncim") return Design::fusioncim;
    if (s == "baseline1") return Design::baseline1;
    if (s == "baseline2") return Design::baseline2;
    throw std::invalid_argument("unknown design '" + s + "'");
}

EventCounters& EventCounters::operator+=(const EventCounters& o) {
    offchip.q_in += o.offchip.q_in;
    offchip.k_in += o.offchip.k_in;
    offchip.v_in += o.offchip.v_in;
    offchip.o_out += o.offchip.o_out;
    offchip.score_rw += o.offchip.score_rw;
    onchip.kv_stream += o.onchip.kv_stream;
    onchip.kv_cim_write += o.onchip.kv_cim_write;
    onchip.gb_read += o.onchip.gb_read;
    onchip.transpose_rw += o.onchip.transpose_rw;
    onchip.psum_move += o.onchip.psum_move;
    onchip.q_cim_write += o.onchip.q_cim_write;
    onchip.cim_read += o.onchip.cim_read;
    ops.mac_ip += o.ops.mac_ip;
    ops.mac_op += o.ops.mac_op;
    ops.sfu += o.ops.sfu;
    rescale_count += o.rescale_count;
    return *this;
}

EventCounters& EventCounters::scale(std::uint64_t c) {
    for (auto* f : {&offchip.q_in, &offchip.k_in, &offchip.v_in, &offchip.o_out, &offchip.score_rw,
                    &onchip.kv_stream, &onchip.kv_cim_write, &onchip.gb_read, &onchip.transpose_rw,
                    &onchip.psum_move, &onchip.q_cim_write, &onchip.cim_read, &ops.mac_ip, &ops.mac_op, &ops.sfu,
                    &rescale_count}) {
        *f *= c;
    }
    return *this;
}

}  // namespace fusioncim
