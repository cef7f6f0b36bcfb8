#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusioncim::attention {

/// Dense row-major matrix of 64-bit reals.
struct Matrix {
    std::size_t rows{0};
    std::size_t cols{0};
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    [[nodiscard]] double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    [[nodiscard]] std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class OrderError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Number of key columns visible to query row `row` of a `rows`-row block
/// attending over `cols` keys. Causal masking is bottom-right aligned.
[[nodiscard]] inline std::size_t valid_columns(std::size_t row, std::size_t rows, std::size_t cols, bool causal) {
    return causal ? cols - rows + row + 1 : cols;
}

// ---------------------------------------------------------------------------
// Exponential unit

struct TaylorResult {
    double value{0};
    bool underflow{false};
};

inline constexpr int kDefaultLutRange = 16;
inline constexpr int kTaylorSteps = 8;

/// Integer-exponent table e^k for k = 0, -1, ..., -range.
class ExpLut {
public:
    explicit ExpLut(int range = kDefaultLutRange);
    [[nodiscard]] int range() const { return range_; }
    /// e^k for -range <= k <= 0.
    [[nodiscard]] double at(int k) const { return table_[static_cast<std::size_t>(-k)]; }
    [[nodiscard]] std::size_t size() const { return table_.size(); }

private:
    int range_;
    std::vector<double> table_;
};

/// e^x for x <= 0 as lut[ceil(x)] times an 8-step Horner evaluation of the
/// Taylor series of the fractional remainder f in (-1, 0]. Inputs below
/// -range saturate to 0 and raise the underflow flag.
[[nodiscard]] TaylorResult taylor_exp(double x, const ExpLut& lut);

enum class ExpMode { exact, taylor8 };

struct ExpUnit {
    ExpMode mode{ExpMode::exact};
    ExpLut lut{};

    [[nodiscard]] double operator()(double x) const {
        if (mode == ExpMode::exact) return std::exp(x);
        return taylor_exp(x, lut).value;
    }
};

// ---------------------------------------------------------------------------
// Partial-sum quantization

struct PsumQuantizer {
    bool enabled{false};
    std::uint32_t bits{8};
};

/// Per-row quantizer state: the running maximum magnitude seen so far.
struct QuantState {
    double max_abs{0.0};

    [[nodiscard]] double step(std::uint32_t bits) const {
        return max_abs / static_cast<double>((1u << (bits - 1)) - 1);
    }
};

/// Symmetric round-to-nearest-even quantization of `row` in place using the
/// running-max scale, which is updated first. Returns the step size used
/// (0 for a row that has only ever been zero).
double quantize_psum(std::span<double> row, QuantState& state, const PsumQuantizer& q);

// ---------------------------------------------------------------------------
// Online softmax

/// Exponential evaluations issued per online step: the rescale factor
/// e^(m - m') and the new weight e^(s - m').
inline constexpr std::uint64_t kExpPerStep = 2;

struct OnlineSoftmaxState {
    double m{-std::numeric_limits<double>::infinity()};
    double l{0.0};
    std::vector<double> o;
    std::uint64_t rescale_count{0};
    std::uint64_t steps{0};

    explicit OnlineSoftmaxState(std::size_t d = 0) : o(d, 0.0) {}
};

/// Folds one score and its value row into the running state. A rescale is
/// counted when the running max strictly increases after at least one
/// accumulation.
void online_step(OnlineSoftmaxState& state, double score, std::span<const double> v, const ExpUnit& exp_unit);

/// Max-only variant used for rescale accounting without value rows.
struct MaxTracker {
    double m{-std::numeric_limits<double>::infinity()};
    std::uint64_t steps{0};
    std::uint64_t rescale_count{0};

    void push(double s) {
        if (s > m) {
            if (steps > 0) ++rescale_count;
            m = s;
        }
        ++steps;
    }
};

using RowOrder = std::vector<std::uint32_t>;

struct RescaleStats {
    std::vector<std::uint64_t> per_row;
    std::uint64_t total{0};
    std::uint64_t exp_ops{0};
};

struct StreamResult {
    Matrix output;
    RescaleStats stats;
};

/// Reference attention: softmax(mask(scale * Q K^T)) V with a two-pass
/// safe softmax. `scale` defaults to 1/sqrt(d).
[[nodiscard]] Matrix exact_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool causal,
                                     std::optional<double> scale = std::nullopt);

/// Reference attention over precomputed (already scaled) scores.
[[nodiscard]] Matrix exact_attention_scores(const Matrix& scores, const Matrix& v, bool causal);

/// scale * Q K^T with masked entries set to -inf.
[[nodiscard]] Matrix compute_scores(const Matrix& q, const Matrix& k, bool causal,
                                    std::optional<double> scale = std::nullopt);

/// Streams each row's valid scores in `orders[row]` through online_step.
/// Throws OrderError if an order is not a permutation of the row's valid
/// columns.
[[nodiscard]] StreamResult streamed_attention(const Matrix& scores, const Matrix& v, bool causal,
                                              std::span<const RowOrder> orders, const ExpUnit& exp_unit = {},
                                              const PsumQuantizer& quantizer = {});

[[nodiscard]] StreamResult streamed_attention(const Matrix& q, const Matrix& k, const Matrix& v, bool causal,
                                              std::span<const RowOrder> orders, const ExpUnit& exp_unit = {},
                                              const PsumQuantizer& quantizer = {});

/// Rescale events only (no value rows), same accounting as streamed_attention.
[[nodiscard]] RescaleStats count_rescales(const Matrix& scores, bool causal, std::span<const RowOrder> orders);

void check_order(const RowOrder& order, std::size_t valid);

// Built-in per-row orders over valid columns.
[[nodiscard]] std::vector<RowOrder> forward_orders(std::size_t rows, std::size_t cols, bool causal);
[[nodiscard]] std::vector<RowOrder> reverse_orders(std::size_t rows, std::size_t cols, bool causal);
[[nodiscard]] std::vector<RowOrder> random_orders(std::size_t rows, std::size_t cols, bool causal,
                                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Score sources

enum class GeneratorMode { rope_like, alibi_like, uniform };

struct GeneratorSpec {
    GeneratorMode mode{GeneratorMode::rope_like};
    std::uint64_t seed{42};
    double noise_std{1.0};
    double alibi_slope{4.0};
    double locality_scale{2.5};
    double locality_tau{16.0};
};

/// Writes the scores of query `row` (absolute position `position`) against
/// `cols` keys into `out`; masked entries get -inf. Rows are independent:
/// each row has its own seeded stream, so generating one row or the whole
/// matrix yields identical values.
void generate_score_row(const GeneratorSpec& spec, std::size_t row, std::size_t position, std::size_t cols,
                        bool causal, std::span<double> out);

[[nodiscard]] Matrix generate_scores(const GeneratorSpec& spec, std::size_t rows, std::size_t cols, bool causal);

[[nodiscard]] GeneratorMode generator_mode_from_string(const std::string& s);
[[nodiscard]] std::string to_string(GeneratorMode mode);

// ---------------------------------------------------------------------------
// Trace files: one JSON header line, then rows*cols little-endian f32.

class TraceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ScoreTrace {
    Matrix scores;
    bool causal{false};
};

void write_trace(const std::string& path, const Matrix& scores, bool causal);
[[nodiscard]] ScoreTrace read_trace(const std::string& path);
/// FNV-1a 64 over the f32 payload bytes.
[[nodiscard]] std::uint64_t trace_checksum(const Matrix& scores);

}  // namespace fusioncim::attention
