#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusioncim/attention.hpp"
#include "fusioncim/config.hpp"
#include "fusioncim/cost_models.hpp"
#include "fusioncim/counters.hpp"
#include "fusioncim/scheduler.hpp"
#include "fusioncim/workload.hpp"

namespace fusioncim::report {

/// Bumped whenever the CSV column set or order changes.
inline constexpr int kCsvSchemaVersion = 1;

struct ExperimentPlan {
    config::Profile profile{config::default_profile()};
    std::vector<std::uint32_t> seq_lens{256, 512, 1024, 2048, 4096};
    std::vector<Design> designs{Design::baseline1, Design::baseline2, Design::fusioncim};
    std::vector<sched::OrderMode> orders{sched::OrderMode::reverse_diagonal_first};
    /// Applied to fusioncim rows only; baselines always run unablated.
    std::vector<cost::Ablation> ablations{cost::Ablation{}};
    std::uint64_t seed{42};
    /// Score source for rescale accounting. Its mode follows the profile's
    /// positional mode unless `generator_fixed` is set.
    attention::GeneratorSpec generator{};
    bool generator_fixed{false};
    Phase phase{Phase::prefill};
    std::uint32_t decode_parallel{1};
    cost::BaselineSpec baseline{};
    bool normalize{true};
    unsigned jobs{1};

    /// Throws std::invalid_argument when the plan cannot run.
    void validate() const;
};

struct ReportRow {
    std::string design;
    std::uint32_t seq_len{0};
    std::string order;
    std::string ablation{"none"};
    std::uint64_t cycles{0};
    double wall_ms{0};
    double normalized_latency{0};
    double total_energy_j{0};
    double normalized_energy{0};
    std::uint64_t offchip_bytes{0};
    std::uint64_t onchip_kv_stream{0};
    std::uint64_t onchip_kv_cim_write{0};
    std::uint64_t onchip_gb_read{0};
    std::uint64_t onchip_transpose_rw{0};
    std::uint64_t onchip_psum_move{0};
    std::uint64_t onchip_total{0};
    std::uint64_t rescale_count{0};
    double rescale_reduction_vs_forward{0};

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

class ExperimentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rescale events for one query head of `workload` streamed in `mode`,
/// with scores drawn row by row from `generator`.
[[nodiscard]] std::uint64_t head_rescale_count(const WorkloadSpec& workload, const attention::GeneratorSpec& generator,
                                               std::uint32_t n_hes, sched::OrderMode mode, std::uint64_t seed);

/// Rows sorted by (seq_len, design, order, ablation).
[[nodiscard]] std::vector<ReportRow> run_experiment(const ExperimentPlan& plan);

enum class Format { csv, json };
[[nodiscard]] Format format_from_string(const std::string& s);

[[nodiscard]] const std::vector<std::string>& csv_header();
[[nodiscard]] std::string to_csv(const std::vector<ReportRow>& rows);
[[nodiscard]] std::string to_json(const std::vector<ReportRow>& rows);
[[nodiscard]] std::vector<ReportRow> parse_csv(const std::string& text);
[[nodiscard]] std::vector<ReportRow> parse_json(const std::string& text);

void emit_report(const std::vector<ReportRow>& rows, Format format, const std::filesystem::path& path);

}  // namespace fusioncim::report
