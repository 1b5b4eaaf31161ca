#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dimdm/core/error.hpp"
#include "dimdm/core/types.hpp"

namespace dimdm {

/// Full training configuration. A plain aggregate so that files and flags can
/// describe invalid settings; validate_config() reports every violation and
/// the training entry points refuse configs that have any.
struct TrainConfig {
    int d = 2;
    NoiseSpec noise{NoiseKind::gaussian, 0.1};
    AugmentationSpec augmentation{AugmentationKind::additive_gaussian, 0.6};
    BoundKind bound = BoundKind::infonce;
    CriticSpec critic{CriticKind::joint_mlp, 256, 2};
    int batch_size = 1024;
    int epochs = 2000;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    /// Full-size MNIST hyperparameters (2000 epochs, joint critic 2x256).
    static TrainConfig paper_scale() { return TrainConfig{}; }

    /// Laptop-sized run: 50 epochs and a separable critic of width 64, whose
    /// cost is linear in the batch rather than quadratic (see README).
    static TrainConfig desk_scale() {
        TrainConfig cfg;
        cfg.epochs = 50;
        cfg.critic = {CriticKind::separable, 64, 2};
        return cfg;
    }

    static TrainConfig desk_scale(NoiseSpec noise) {
        TrainConfig cfg = desk_scale();
        cfg.noise = noise;
        return cfg;
    }

    HeadKind head() const { return noise.head(); }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Violation {
    std::string field;
    std::string message;
};

inline std::vector<Violation> validate_config(const TrainConfig& cfg) {
    std::vector<Violation> out;
    if (cfg.d < 1) out.push_back({"d", "d must be a positive integer"});
    for (auto& m : cfg.noise.violations()) out.push_back({"noise", m});
    for (auto& m : cfg.augmentation.violations()) out.push_back({"augmentation", m});
    for (auto& m : cfg.critic.violations()) out.push_back({"critic", m});
    if (cfg.critic.kind == CriticKind::closed_form_gaussian && cfg.noise.kind != NoiseKind::gaussian)
        out.push_back({"critic.kind", "closed_form_gaussian critic requires gaussian noise"});
    if (cfg.batch_size < 2) out.push_back({"batch_size", "batch_size must be >= 2"});
    if (cfg.epochs < 0) out.push_back({"epochs", "epochs must be non-negative"});
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
        out.push_back({"learning_rate", "learning_rate must be a positive finite number"});
    return out;
}

inline void ensure_valid(const TrainConfig& cfg) {
    auto v = validate_config(cfg);
    if (v.empty()) return;
    std::string msg = "invalid config:";
    for (auto& e : v) msg += " [" + e.field + "] " + e.message + ";";
    throw DomainError(msg);
}

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ParseError("config key '" + key + "': cannot parse '" + text + "' as a number");
    return value;
}

template <>
inline double parse_number<double>(const std::string& key, const std::string& text) {
    // from_chars for double is not available in every libstdc++ we target
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size())
        throw ParseError("config key '" + key + "': cannot parse '" + text + "' as a number");
    return v;
}

template <typename E>
E parse_enum(const std::string& key, const std::string& text, std::optional<E> parsed) {
    if (!parsed) throw ParseError("config key '" + key + "': unknown value '" + text + "'");
    return *parsed;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

/// Applies one `key = value` assignment to cfg. Unknown keys are a parse error.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_number;
    if (key == "d") cfg.d = parse_number<int>(key, value);
    else if (key == "noise.kind") cfg.noise.kind = detail::parse_enum(key, value, parse_noise_kind(value));
    else if (key == "noise.scale") cfg.noise.scale = parse_number<double>(key, value);
    else if (key == "augmentation.kind")
        cfg.augmentation.kind = detail::parse_enum(key, value, parse_augmentation_kind(value));
    else if (key == "augmentation.strength") cfg.augmentation.strength = parse_number<double>(key, value);
    else if (key == "bound") cfg.bound = detail::parse_enum(key, value, parse_bound_kind(value));
    else if (key == "critic.kind") cfg.critic.kind = detail::parse_enum(key, value, parse_critic_kind(value));
    else if (key == "critic.hidden_width") cfg.critic.hidden_width = parse_number<int>(key, value);
    else if (key == "critic.depth") cfg.critic.depth = parse_number<int>(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
    else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else throw ParseError("unknown config key '" + key + "'");
}

/// Parses the flat `key = value` format; '#' starts a comment. Keys absent
/// from the text keep the values of `base`.
inline TrainConfig parse_config(std::string_view text, TrainConfig base = TrainConfig::desk_scale()) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto stripped = detail::trim(line);
        if (stripped.empty()) continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        apply_config_entry(base, detail::trim(stripped.substr(0, eq)), detail::trim(stripped.substr(eq + 1)));
    }
    return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = TrainConfig::desk_scale()) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), base);
}

inline std::string format_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "d = " << cfg.d << '\n'
       << "noise.kind = " << to_string(cfg.noise.kind) << '\n'
       << "noise.scale = " << detail::format_double(cfg.noise.scale) << '\n'
       << "augmentation.kind = " << to_string(cfg.augmentation.kind) << '\n'
       << "augmentation.strength = " << detail::format_double(cfg.augmentation.strength) << '\n'
       << "bound = " << to_string(cfg.bound) << '\n'
       << "critic.kind = " << to_string(cfg.critic.kind) << '\n'
       << "critic.hidden_width = " << cfg.critic.hidden_width << '\n'
       << "critic.depth = " << cfg.critic.depth << '\n'
       << "batch_size = " << cfg.batch_size << '\n'
       << "epochs = " << cfg.epochs << '\n'
       << "learning_rate = " << detail::format_double(cfg.learning_rate) << '\n'
       << "seed = " << cfg.seed << '\n';
    return os.str();
}

} // namespace dimdm
