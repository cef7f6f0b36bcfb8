#include "fusioncim/attention.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace fusioncim::attention {

ExpLut::ExpLut(int range) : range_(range), table_(static_cast<std::size_t>(range) + 1) {
    if (range < 0) throw std::invalid_argument("ExpLut: range must be non-negative");
    for (int k = 0; k <= range; ++k) table_[static_cast<std::size_t>(k)] = std::exp(-static_cast<double>(k));
}

TaylorResult taylor_exp(double x, const ExpLut& lut) {
    if (x > 0.0) throw std::domain_error("taylor_exp: argument must be <= 0");
    if (!(x >= -static_cast<double>(lut.range()))) return {0.0, true};
    const double k = std::ceil(x);
    const double f = x - k;  // (-1, 0]
    double p = 1.0;
    for (int n = kTaylorSteps; n >= 1; --n) p = 1.0 + p * f / n;
    return {lut.at(static_cast<int>(k)) * p, false};
}

double quantize_psum(std::span<double> row, QuantState& state, const PsumQuantizer& q) {
    if (!q.enabled) return 0.0;
    double row_max = 0.0;
    for (double x : row) row_max = std::max(row_max, std::abs(x));
    state.max_abs = std::max(state.max_abs, row_max);
    if (state.max_abs == 0.0) return 0.0;
    const double step = state.step(q.bits);
    for (double& x : row) x = std::nearbyint(x / step) * step;  // FE_TONEAREST: ties to even
    return step;
}

void online_step(OnlineSoftmaxState& state, double score, std::span<const double> v, const ExpUnit& exp_unit) {
    const double m_new = std::max(state.m, score);
    if (m_new > state.m && state.steps > 0) ++state.rescale_count;
    const double alpha = exp_unit(state.m - m_new);
    const double w = exp_unit(score - m_new);
    state.l = state.l * alpha + w;
    for (std::size_t c = 0; c < state.o.size(); ++c) state.o[c] = state.o[c] * alpha + w * v[c];
    state.m = m_new;
    ++state.steps;
}

Matrix compute_scores(const Matrix& q, const Matrix& k, bool causal, std::optional<double> scale) {
    if (q.cols != k.cols) throw DimensionError("compute_scores: Q and K head dims differ");
    if (causal && q.rows > k.rows) throw DimensionError("compute_scores: causal block has more queries than keys");
    const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(q.cols)));
    Matrix out(q.rows, k.rows, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < q.rows; ++i) {
        const std::size_t valid = valid_columns(i, q.rows, k.rows, causal);
        for (std::size_t j = 0; j < valid; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < q.cols; ++c) dot += q.at(i, c) * k.at(j, c);
            out.at(i, j) = s * dot;
        }
    }
    return out;
}

Matrix exact_attention_scores(const Matrix& scores, const Matrix& v, bool causal) {
    if (scores.cols != v.rows) throw DimensionError("exact_attention: score columns must equal V rows");
    if (causal && scores.rows > scores.cols) throw DimensionError("exact_attention: too many causal queries");
    Matrix out(scores.rows, v.cols);
    std::vector<double> p(scores.cols);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        const std::size_t valid = valid_columns(i, scores.rows, scores.cols, causal);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < valid; ++j) m = std::max(m, scores.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < valid; ++j) sum += p[j] = std::exp(scores.at(i, j) - m);
        for (std::size_t j = 0; j < valid; ++j) {
            const double w = p[j] / sum;
            for (std::size_t c = 0; c < v.cols; ++c) out.at(i, c) += w * v.at(j, c);
        }
    }
    return out;
}

Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool causal, std::optional<double> scale) {
    if (k.rows != v.rows) throw DimensionError("exact_attention: K and V row counts differ");
    return exact_attention_scores(compute_scores(q, k, causal, scale), v, causal);
}

void check_order(const RowOrder& order, std::size_t valid) {
    if (order.size() != valid) {
        throw OrderError("traversal order has " + std::to_string(order.size()) + " entries, expected " +
                         std::to_string(valid));
    }
    std::vector<bool> seen(valid, false);
    for (auto j : order) {
        if (j >= valid || seen[j]) throw OrderError("traversal order is not a permutation of the valid columns");
        seen[j] = true;
    }
}

namespace {

void check_orders(std::span<const RowOrder> orders, std::size_t rows, std::size_t cols, bool causal) {
    if (orders.size() != rows) throw OrderError("one traversal order per row is required");
    for (std::size_t i = 0; i < rows; ++i) check_order(orders[i], valid_columns(i, rows, cols, causal));
}

}  // namespace

StreamResult streamed_attention(const Matrix& scores, const Matrix& v, bool causal, std::span<const RowOrder> orders,
                                const ExpUnit& exp_unit, const PsumQuantizer& quantizer) {
    if (scores.cols != v.rows) throw DimensionError("streamed_attention: score columns must equal V rows");
    if (causal && scores.rows > scores.cols) throw DimensionError("streamed_attention: too many causal queries");
    check_orders(orders, scores.rows, scores.cols, causal);

    StreamResult result{Matrix(scores.rows, v.cols), {}};
    result.stats.per_row.resize(scores.rows);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        OnlineSoftmaxState st(v.cols);
        QuantState qs;
        for (auto j : orders[i]) {
            online_step(st, scores.at(i, j), v.row(j), exp_unit);
            quantize_psum(st.o, qs, quantizer);
        }
        auto out = result.output.row(i);
        for (std::size_t c = 0; c < v.cols; ++c) out[c] = st.o[c] / st.l;
        result.stats.per_row[i] = st.rescale_count;
        result.stats.total += st.rescale_count;
        result.stats.exp_ops += st.steps * kExpPerStep;
    }
    return result;
}

StreamResult streamed_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool causal,
                                std::span<const RowOrder> orders, const ExpUnit& exp_unit,
                                const PsumQuantizer& quantizer) {
    if (k.rows != v.rows) throw DimensionError("streamed_attention: K and V row counts differ");
    return streamed_attention(compute_scores(q, k, causal), v, causal, orders, exp_unit, quantizer);
}

RescaleStats count_rescales(const Matrix& scores, bool causal, std::span<const RowOrder> orders) {
    check_orders(orders, scores.rows, scores.cols, causal);
    RescaleStats stats;
    stats.per_row.resize(scores.rows);
    for (std::size_t i = 0; i < scores.rows; ++i) {
        MaxTracker t;
        for (auto j : orders[i]) t.push(scores.at(i, j));
        stats.per_row[i] = t.rescale_count;
        stats.total += t.rescale_count;
        stats.exp_ops += t.steps * kExpPerStep;
    }
    return stats;
}

std::vector<RowOrder> forward_orders(std::size_t rows, std::size_t cols, bool causal) {
    std::vector<RowOrder> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        out[i].resize(valid_columns(i, rows, cols, causal));
        std::iota(out[i].begin(), out[i].end(), 0u);
    }
    return out;
}

std::vector<RowOrder> reverse_orders(std::size_t rows, std::size_t cols, bool causal) {
    auto out = forward_orders(rows, cols, causal);
    for (auto& o : out) std::reverse(o.begin(), o.end());
    return out;
}

std::vector<RowOrder> random_orders(std::size_t rows, std::size_t cols, bool causal, std::uint64_t seed) {
    auto out = forward_orders(rows, cols, causal);
    std::mt19937_64 rng(seed);
    for (auto& o : out) std::shuffle(o.begin(), o.end(), rng);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

void generate_score_row(const GeneratorSpec& spec, std::size_t row, std::size_t position, std::size_t cols,
                        bool causal, std::span<double> out) {
    std::mt19937_64 rng(splitmix64(spec.seed ^ splitmix64(row)));
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t valid = causal ? position + 1 : cols;
    for (std::size_t j = 0; j < cols; ++j) {
        if (j >= valid) {
            out[j] = -std::numeric_limits<double>::infinity();
            continue;
        }
        const double g = spec.noise_std * noise(rng);
        const double dist = std::abs(static_cast<double>(position) - static_cast<double>(j));
        switch (spec.mode) {
            case GeneratorMode::alibi_like: out[j] = g - spec.alibi_slope * dist; break;
            case GeneratorMode::rope_like: out[j] = g + spec.locality_scale * std::exp(-dist / spec.locality_tau); break;
            case GeneratorMode::uniform: out[j] = g; break;
        }
    }
}

Matrix generate_scores(const GeneratorSpec& spec, std::size_t rows, std::size_t cols, bool causal) {
    if (causal && rows > cols) throw DimensionError("generate_scores: too many causal queries");
    Matrix s(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) generate_score_row(spec, i, cols - rows + i, cols, causal, s.row(i));
    return s;
}

GeneratorMode generator_mode_from_string(const std::string& s) {
    if (s == "rope_like" || s == "rope") return GeneratorMode::rope_like;
    if (s == "alibi_like" || s == "alibi") return GeneratorMode::alibi_like;
    if (s == "uniform") return GeneratorMode::uniform;
    throw std::invalid_argument("unknown score generator mode '" + s + "'");
}

std::string to_string(GeneratorMode mode) {
    switch (mode) {
        case GeneratorMode::rope_like: return "rope_like";
        case GeneratorMode::alibi_like: return "alibi_like";
        case GeneratorMode::uniform: return "uniform";
    }
    return "unknown";
}

}  // namespace fusioncim::attention
