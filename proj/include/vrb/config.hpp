#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "vrb/error.hpp"
#include "vrb/sim.hpp"

namespace vrb {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, raw));
    return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ConfigError(fmt::format("{}: '{}' is not an unsigned integer", key, raw));
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    if (s == "true") return true;
    if (s == "false") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, raw));
}

inline std::vector<double> parse_list(const std::string& key, const std::string& raw) {
    std::vector<double> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
    return out;
}

inline Matrix<3, 3> parse_diag3(const std::string& key, const std::string& raw) {
    const auto v = parse_list(key, raw);
    if (v.size() != 3) throw ConfigError(fmt::format("{}: expected 3 comma-separated diagonal entries", key));
    for (double d : v)
        if (d < 0.0) throw ConfigError(fmt::format("{}: weights must be >= 0", key));
    return Matrix<3, 3>::diagonal({v[0], v[1], v[2]});
}

/// "Q_s_7" -> 7 when the suffix is a vertex label 1..32.
inline int vertex_suffix(const std::string& key, const std::string& prefix) {
    if (key.rfind(prefix, 0) != 0) return 0;
    const std::string rest = key.substr(prefix.size());
    int j = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), j);
    if (rest.empty() || ec != std::errc{} || ptr != rest.data() + rest.size()) return 0;
    return (j >= 1 && j <= static_cast<int>(kNumVertices)) ? j : 0;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

}  // namespace detail

inline ScenarioConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }

    using detail::parse_bool, detail::parse_real;
    ScenarioConfig cfg;
    auto real = [](double& dst) { return [&dst](const std::string& k, const std::string& v) { dst = parse_real(k, v); }; };
    auto flag = [](bool& dst) { return [&dst](const std::string& k, const std::string& v) { dst = parse_bool(k, v); }; };

    PlantParams& p = cfg.plant;
    const std::map<std::string, detail::Setter> plant_keys{
        {"L_pe", real(p.L_pe)},         {"W_pe", real(p.W_pe)},   {"H_pe", real(p.H_pe)},
        {"k2_d", real(p.k2_d)},         {"k3_d", real(p.k3_d)},   {"k4_d", real(p.k4_d)},
        {"k5_d", real(p.k5_d)},         {"n_electrons", real(p.n_electrons)},
        {"F", real(p.F)},               {"c_bar", real(p.c_bar)}, {"c_min", real(p.c_min)},
        {"c_max", real(p.c_max)},       {"M_cells", real(p.M_cells)},
        {"E0_formal", real(p.E0_formal)}, {"R_gas", real(p.R_gas)}, {"V_t", real(p.V_t)},
        {"I_min", real(p.I_min)},       {"I_max", real(p.I_max)}, {"Q_min", real(p.Q_min)},
        {"Q_max", real(p.Q_max)},       {"T", real(p.T)},
    };
    const std::map<std::string, detail::Setter> pump_keys{
        {"m_p", real(cfg.pump.m_p)},
        {"b_p", real(cfg.pump.b_p)},
        {"Vp_min", real(cfg.pump.Vp_min)},
        {"Vp_max", real(cfg.pump.Vp_max)},
    };
    const std::map<std::string, detail::Setter> controller_keys{
        {"controller",
         [&](const std::string& k, const std::string& v) {
             const auto s = detail::trim(v);
             if (s == "convex") cfg.controller = ControllerKind::ConvexCombination;
             else if (s == "online_lqr") cfg.controller = ControllerKind::OnlineLqr;
             else throw ConfigError(fmt::format("{}: expected convex or online_lqr, got '{}'", k, v));
         }},
        {"Q_s", [&](const std::string& k, const std::string& v) { cfg.synthesis.Q = detail::parse_diag3(k, v); }},
        {"R_s", real(cfg.synthesis.R)},
        {"dare_tol", real(cfg.synthesis.dare.tol)},
        {"dare_max_iter",
         [&](const std::string& k, const std::string& v) {
             cfg.synthesis.dare.max_iter = static_cast<int>(detail::parse_u64(k, v));
         }},
        {"paper_literal_rho1", flag(cfg.paper_literal_rho1)},
        {"paper_literal_ustar", flag(cfg.paper_literal_ustar)},
        {"paper_literal_feedback", flag(cfg.paper_literal_feedback)},
    };
    const std::map<std::string, detail::Setter> scenario_keys{
        {"mode",
         [&](const std::string& k, const std::string& v) {
             const auto s = detail::trim(v);
             if (s == "charging") cfg.mode = Mode::Charging;
             else if (s == "discharging") cfg.mode = Mode::Discharging;
             else throw ConfigError(fmt::format("{}: expected charging or discharging, got '{}'", k, v));
         }},
        {"soc0", real(cfg.soc0)},
        {"soc_target", real(cfg.soc_target)},
        {"X_s", real(cfg.X_s)},
        {"I_s", real(cfg.I_s)},
        {"k_range", real(cfg.k_range)},
        {"dwell", real(cfg.dwell)},
        {"tau", real(cfg.tau)},
        {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = detail::parse_u64(k, v); }},
        {"measurement",
         [&](const std::string& k, const std::string& v) {
             const auto s = detail::trim(v);
             if (s == "ideal") cfg.measurement = Measurement::Ideal;
             else if (s == "balanced_ocv") cfg.measurement = Measurement::BalancedOcv;
             else throw ConfigError(fmt::format("{}: expected ideal or balanced_ocv, got '{}'", k, v));
         }},
        {"noise_sd", real(cfg.noise_sd)},
        {"max_duration", real(cfg.max_duration)},
        {"shutoff_hold", real(cfg.shutoff_hold)},
        {"max_substep", real(cfg.max_substep)},
        {"sweep_margin", real(cfg.sweep.margin)},
        {"sweep_transient", real(cfg.sweep.transient)},
    };

    RhoBox box;
    std::set<std::string> box_seen;
    std::map<std::string, detail::Setter> box_keys;
    for (std::size_t i = 0; i < kNumRho; ++i) {
        box_keys[fmt::format("rho{}_min", i + 1)] = real(box.min[i]);
        box_keys[fmt::format("rho{}_max", i + 1)] = real(box.max[i]);
    }

    const std::map<std::string, const std::map<std::string, detail::Setter>*> sections{
        {"plant", &plant_keys},
        {"pump", &pump_keys},
        {"controller", &controller_keys},
        {"scenario", &scenario_keys},
        {"rho_box", &box_keys},
    };

    std::set<std::string> seen_sections;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError(fmt::format("key '{}' outside any section", section));
        const auto it = sections.find(section);
        if (it == sections.end()) throw ConfigError(fmt::format("unknown section [{}]", section));
        seen_sections.insert(section);
        std::set<std::string> seen;
        for (const auto& [key, node] : body) {
            const std::string full = section + "." + key;
            if (!seen.insert(key).second) throw ConfigError(fmt::format("duplicate key {}", full));
            const std::string value = node.get_value<std::string>();
            if (section == "controller") {
                if (const int j = detail::vertex_suffix(key, "Q_s_"); j) {
                    cfg.synthesis.Q_override[j] = detail::parse_diag3(full, value);
                    continue;
                }
                if (const int j = detail::vertex_suffix(key, "R_s_"); j) {
                    cfg.synthesis.R_override[j] = parse_real(full, value);
                    if (!(cfg.synthesis.R_override[j] > 0.0)) throw ConfigError(full + " must be > 0");
                    continue;
                }
            }
            const auto setter = it->second->find(key);
            if (setter == it->second->end()) throw ConfigError(fmt::format("unknown key {}", full));
            setter->second(full, value);
            if (section == "rho_box") box_seen.insert(key);
        }
    }
    if (seen_sections.count("rho_box")) {
        if (box_seen.size() != 2 * kNumRho) throw ConfigError("[rho_box] needs all of rho1_min .. rho5_max");
        box.min.mode = box.max.mode = cfg.mode;
        cfg.rho_box = box;
    }
    validate(cfg);
    return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_config(in);
}

/// [rho_box] section text, exact round trip through parse_config.
inline std::string format_rho_box(const RhoBox& box) {
    std::string out = "[rho_box]\n";
    for (std::size_t i = 0; i < kNumRho; ++i) {
        out += fmt::format("rho{}_min = {:.17g}\n", i + 1, box.min[i]);
        out += fmt::format("rho{}_max = {:.17g}\n", i + 1, box.max[i]);
    }
    return out;
}

}  // namespace vrb
