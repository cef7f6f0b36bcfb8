#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fusioncim::config {

enum class PositionalMode { rope_like, alibi_like, uniform, trace };

struct ModelConfig {
    std::uint32_t num_layers{32};
    std::uint32_t num_q_heads{32};
    std::uint32_t num_kv_heads{8};
    std::uint32_t head_dim{128};
    std::uint32_t max_seq_len{8192};
    PositionalMode positional_mode{PositionalMode::rope_like};
    bool causal{true};
};

/// Hardware parameters of the hybrid-engine system. Defaults are the
/// 16-engine, 400 MHz, INT8 profile.
struct ArchConfig {
    std::uint32_t num_hes{16};
    std::uint64_t gb_bytes{1u << 20};
    std::uint32_t ip_rows{128};
    std::uint32_t ip_cols{128};
    std::uint32_t op_rows{128};
    std::uint32_t op_cols{128};
    std::uint32_t sfu_units{128};
    double freq_hz{400e6};
    std::uint32_t bit_serial_width{8};
    std::uint32_t cim_write_cycles_per_row{4};
    double cim_write_energy_mult{3.0};

    double ip_tops{1.64};
    double op_tops{1.64};
    double sfu_tops{0.2};
    double ip_mw{42.0};
    double op_mw{53.6};
    double sfu_mw{13.4};
    double system_mw{2100.0};
    double system_area_mm2{26.2};

    double dram_pj_per_byte{40.0};
    double gb_pj_per_byte{1.0};
    double cimsram_pj_per_byte{0.5};

    /// Sustained off-chip bandwidth seen by the memory controller.
    double dram_bytes_per_cycle{768.0};
};

/// Per-event energies. MAC energies are joules per op (one MAC = two ops),
/// byte energies are joules per byte.
struct EnergyTable {
    double mac_ip{0};
    double mac_op{0};
    double sfu_op{0};
    double dram{0};
    double gb{0};
    double cim_read{0};
    double cim_write{0};

    [[nodiscard]] double ip_per_mac() const { return 2.0 * mac_ip; }
    [[nodiscard]] double op_per_mac() const { return 2.0 * mac_op; }
};

struct Violation {
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
    [[nodiscard]] bool mentions(std::string_view needle) const;
};

enum class ErrorKind { unreadable_file, schema_mismatch, invalid_value };

class ConfigError : public std::runtime_error {
public:
    ConfigError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct Profile {
    ModelConfig model;
    ArchConfig arch;
};

/// The built-in profile: LLaMA3-8B-like attention shape on the default
/// 16-engine system.
[[nodiscard]] Profile default_profile();

[[nodiscard]] ValidationReport validate_config(const ModelConfig& model, const ArchConfig& arch);

[[nodiscard]] EnergyTable derive_energy_table(const ArchConfig& arch);

/// Parses a profile from JSON text with two tables, `model` and `arch`.
/// Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] Profile parse_profile(const std::string& text);
[[nodiscard]] Profile load_profile(const std::filesystem::path& path);
[[nodiscard]] std::string dump_profile(const Profile& profile);

/// Resolves `--config` arguments: "default" yields the built-in profile,
/// relative names are searched in FUSIONCIM_CONFIG_DIR before the cwd.
[[nodiscard]] Profile resolve_profile(const std::string& name_or_path);

[[nodiscard]] std::string to_string(PositionalMode mode);
[[nodiscard]] PositionalMode positional_mode_from_string(const std::string& s);

}  // namespace fusioncim::config
