#include "fusioncim/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <type_traits>

#include <json.hpp>

namespace fusioncim::config {

using nlohmann::json;

bool ValidationReport::mentions(std::string_view needle) const {
    for (const auto& v : violations) {
        if (v.message.find(needle) != std::string::npos) return true;
    }
    return false;
}

Profile default_profile() { return Profile{}; }

ValidationReport validate_config(const ModelConfig& model, const ArchConfig& arch) {
    ValidationReport report;
    auto flag = [&](std::string field, std::string msg) {
        report.violations.push_back({std::move(field), std::move(msg)});
    };

    if (model.num_layers == 0) flag("model.num_layers", "must be positive");
    if (model.num_kv_heads == 0) flag("model.num_kv_heads", "must be positive");
    if (model.num_q_heads == 0) {
        flag("model.num_q_heads", "must be positive");
    } else if (model.num_kv_heads != 0 && model.num_q_heads % model.num_kv_heads != 0) {
        flag("model.num_q_heads", "GQA grouping: num_q_heads must be a multiple of num_kv_heads");
    }
    if (model.head_dim == 0) {
        flag("model.head_dim", "must be positive");
    } else if (model.head_dim > arch.ip_rows) {
        flag("model.head_dim", "head_dim exceeds array depth");
    }
    if (model.max_seq_len == 0) flag("model.max_seq_len", "must be positive");

    auto positive_count = [&](std::uint64_t v, const char* name) {
        if (v == 0) flag(std::string("arch.") + name, "must be positive");
    };
    positive_count(arch.num_hes, "num_hes");
    positive_count(arch.gb_bytes, "gb_bytes");
    positive_count(arch.ip_rows, "ip_rows");
    positive_count(arch.ip_cols, "ip_cols");
    positive_count(arch.op_rows, "op_rows");
    positive_count(arch.op_cols, "op_cols");
    positive_count(arch.sfu_units, "sfu_units");
    positive_count(arch.cim_write_cycles_per_row, "cim_write_cycles_per_row");

    auto positive_real = [&](double v, const char* name) {
        if (!(v > 0.0)) flag(std::string("arch.") + name, "must be strictly positive");
    };
    positive_real(arch.freq_hz, "freq_hz");
    positive_real(arch.ip_tops, "ip_tops");
    positive_real(arch.op_tops, "op_tops");
    positive_real(arch.sfu_tops, "sfu_tops");
    positive_real(arch.ip_mw, "ip_mw");
    positive_real(arch.op_mw, "op_mw");
    positive_real(arch.sfu_mw, "sfu_mw");
    positive_real(arch.system_mw, "system_mw");
    positive_real(arch.system_area_mm2, "system_area_mm2");
    positive_real(arch.dram_pj_per_byte, "dram_pj_per_byte");
    positive_real(arch.gb_pj_per_byte, "gb_pj_per_byte");
    positive_real(arch.cimsram_pj_per_byte, "cimsram_pj_per_byte");
    positive_real(arch.dram_bytes_per_cycle, "dram_bytes_per_cycle");

    if (arch.bit_serial_width != 8) {
        flag("arch.bit_serial_width", "bit_serial_width must equal the INT8 operand width (8)");
    }
    if (!(arch.cim_write_energy_mult > 1.0)) {
        flag("arch.cim_write_energy_mult", "CIM writes must cost more than reads (multiplier > 1)");
    }
    return report;
}

EnergyTable derive_energy_table(const ArchConfig& arch) {
    if (!(arch.ip_tops > 0) || !(arch.op_tops > 0) || !(arch.sfu_tops > 0)) {
        throw ConfigError(ErrorKind::invalid_value, "derive_energy_table: throughput must be nonzero");
    }
    // mW / TOPS -> J/op: (P * 1e-3) / (T * 1e12)
    auto per_op = [](double mw, double tops) { return (mw * 1e-3) / (tops * 1e12); };
    EnergyTable t;
    t.mac_ip = per_op(arch.ip_mw, arch.ip_tops);
    t.mac_op = per_op(arch.op_mw, arch.op_tops);
    t.sfu_op = per_op(arch.sfu_mw, arch.sfu_tops);
    t.dram = arch.dram_pj_per_byte * 1e-12;
    t.gb = arch.gb_pj_per_byte * 1e-12;
    t.cim_read = arch.cimsram_pj_per_byte * 1e-12;
    t.cim_write = t.cim_read * arch.cim_write_energy_mult;
    return t;
}

std::string to_string(PositionalMode mode) {
    switch (mode) {
        case PositionalMode::rope_like: return "rope_like";
        case PositionalMode::alibi_like: return "alibi_like";
        case PositionalMode::uniform: return "uniform";
        case PositionalMode::trace: return "trace";
    }
    return "unknown";
}

PositionalMode positional_mode_from_string(const std::string& s) {
    if (s == "rope_like") return PositionalMode::rope_like;
    if (s == "alibi_like") return PositionalMode::alibi_like;
    if (s == "uniform") return PositionalMode::uniform;
    if (s == "trace") return PositionalMode::trace;
    throw ConfigError(ErrorKind::schema_mismatch, "unknown positional_mode '" + s + "'");
}

namespace {

// Field tables keep parse and dump in one place.
template <typename Visitor>
void visit_model(ModelConfig& m, Visitor&& v) {
    v("num_layers", m.num_layers);
    v("num_q_heads", m.num_q_heads);
    v("num_kv_heads", m.num_kv_heads);
    v("head_dim", m.head_dim);
    v("max_seq_len", m.max_seq_len);
    v("causal", m.causal);
}

template <typename Visitor>
void visit_arch(ArchConfig& a, Visitor&& v) {
    v("num_hes", a.num_hes);
    v("gb_bytes", a.gb_bytes);
    v("ip_rows", a.ip_rows);
    v("ip_cols", a.ip_cols);
    v("op_rows", a.op_rows);
    v("op_cols", a.op_cols);
    v("sfu_units", a.sfu_units);
    v("freq_hz", a.freq_hz);
    v("bit_serial_width", a.bit_serial_width);
    v("cim_write_cycles_per_row", a.cim_write_cycles_per_row);
    v("cim_write_energy_mult", a.cim_write_energy_mult);
    v("ip_tops", a.ip_tops);
    v("op_tops", a.op_tops);
    v("sfu_tops", a.sfu_tops);
    v("ip_mw", a.ip_mw);
    v("op_mw", a.op_mw);
    v("sfu_mw", a.sfu_mw);
    v("system_mw", a.system_mw);
    v("system_area_mm2", a.system_area_mm2);
    v("dram_pj_per_byte", a.dram_pj_per_byte);
    v("gb_pj_per_byte", a.gb_pj_per_byte);
    v("cimsram_pj_per_byte", a.cimsram_pj_per_byte);
    v("dram_bytes_per_cycle", a.dram_bytes_per_cycle);
}

template <typename T>
void read_field(const json& table, const std::string& section, const char* key, T& out) {
    auto it = table.find(key);
    if (it == table.end()) return;
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) throw ConfigError(ErrorKind::schema_mismatch, "");
            out = it->get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_unsigned()) throw ConfigError(ErrorKind::schema_mismatch, "");
            out = it->get<T>();
        } else {
            if (!it->is_number()) throw ConfigError(ErrorKind::schema_mismatch, "");
            out = it->get<T>();
        }
    } catch (const std::exception&) {
        throw ConfigError(ErrorKind::schema_mismatch,
                          "field " + section + "." + key + " has the wrong type: " + it->dump());
    }
}

void reject_unknown(const json& table, const std::string& section, const std::vector<std::string>& known) {
    for (const auto& [key, _] : table.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError(ErrorKind::schema_mismatch, "unknown key " + section + "." + key);
        }
    }
}

}  // namespace

Profile parse_profile(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(ErrorKind::schema_mismatch, std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError(ErrorKind::schema_mismatch, "config root must be an object");
    reject_unknown(doc, "<root>", {"model", "arch"});

    Profile p = default_profile();
    if (auto it = doc.find("model"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError(ErrorKind::schema_mismatch, "`model` must be a table");
        std::vector<std::string> known{"positional_mode"};
        visit_model(p.model, [&](const char* key, auto&) { known.emplace_back(key); });
        reject_unknown(*it, "model", known);
        visit_model(p.model, [&](const char* key, auto& field) { read_field(*it, "model", key, field); });
        if (auto pm = it->find("positional_mode"); pm != it->end()) {
            if (!pm->is_string()) throw ConfigError(ErrorKind::schema_mismatch, "model.positional_mode must be a string");
            p.model.positional_mode = positional_mode_from_string(pm->get<std::string>());
        }
    }
    if (auto it = doc.find("arch"); it != doc.end()) {
        if (!it->is_object()) throw ConfigError(ErrorKind::schema_mismatch, "`arch` must be a table");
        std::vector<std::string> known;
        visit_arch(p.arch, [&](const char* key, auto&) { known.emplace_back(key); });
        reject_unknown(*it, "arch", known);
        visit_arch(p.arch, [&](const char* key, auto& field) { read_field(*it, "arch", key, field); });
    }
    return p;
}

Profile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ErrorKind::unreadable_file, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_profile(ss.str());
}

std::string dump_profile(const Profile& profile) {
    Profile p = profile;
    json doc;
    visit_model(p.model, [&](const char* key, auto& field) { doc["model"][key] = field; });
    doc["model"]["positional_mode"] = to_string(p.model.positional_mode);
    visit_arch(p.arch, [&](const char* key, auto& field) { doc["arch"][key] = field; });
    return doc.dump(2);
}

Profile resolve_profile(const std::string& name_or_path) {
    if (name_or_path == "default") return default_profile();
    std::filesystem::path path(name_or_path);
    if (path.is_relative()) {
        if (const char* dir = std::getenv("FUSIONCIM_CONFIG_DIR"); dir != nullptr && *dir != '\0') {
            for (auto candidate : {std::filesystem::path(dir) / path,
                                   std::filesystem::path(dir) / (name_or_path + ".json")}) {
                if (std::filesystem::exists(candidate)) return load_profile(candidate);
            }
        }
    }
    return load_profile(path);
}

}  // namespace fusioncim::config
