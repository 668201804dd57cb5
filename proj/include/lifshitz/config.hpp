#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lifshitz/disorder.hpp"
#include "lifshitz/error.hpp"

namespace lifshitz {

inline constexpr int config_schema_version = 1;

struct EnergyGridConfig {
    double e_min = 1e-3;
    double e_max = 1.0;
    int per_decade = 24;
    bool operator==(const EnergyGridConfig&) const = default;
};

struct FitConfig {
    std::string side = "upper";
    std::optional<std::pair<double, double>> window;
    bool operator==(const FitConfig&) const = default;
};

/// One experiment. Units: lengths in lattice spacings of Z^d, energies in the
/// same inverse-length-squared units as -Δ + V.
struct ExperimentConfig {
    int schema_version = config_schema_version;
    int dim = 1;
    /// One or more box side lengths L; grids for later entries keep the density n/L of the first.
    std::vector<double> side_lengths{16.0};
    std::size_t points_per_side = 128;
    CouplingLaw law = CouplingLaw::uniform(0.0, 1.0);
    EnvelopeProfile envelope = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    EnergyGridConfig energy_grid;
    std::size_t samples = 500;
    std::uint64_t base_seed = 1;
    /// 0 means machine parallelism.
    unsigned threads = 0;
    double truncation_rel = 1e-8;

    // subcommand knobs
    int M = 3;
    std::optional<double> b;
    std::optional<double> beta;
    double epsilon_scale = 1.0;
    double energy_box_coupling = 1.0;
    std::string functional = "energy";
    /// Samples used to measure the window and remainder constants.
    std::size_t path_samples = 6;
    /// Neumann factorization is checked at E = c L^-2 / 2.
    double factorization_c = 1.0;
    std::size_t lambda_points = 12;
    FitConfig fit;

    std::string out_dir = "out";
    bool plot = true;

    bool operator==(const ExperimentConfig&) const = default;

    std::size_t points_for(double side_length) const
    {
        const double density = static_cast<double>(points_per_side) / side_lengths.front();
        return static_cast<std::size_t>(std::llround(density * side_length));
    }
    GridSpec grid_for(double side_length) const { return GridSpec{dim, side_length, points_for(side_length)}; }
    GridSpec grid() const { return grid_for(side_lengths.front()); }
};

namespace detail {

using json = nlohmann::json;

class ConfigReader {
public:
    ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) fail("", "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        throw ConfigError(at(key) + ": " + what);
    }

    std::string at(const std::string& key) const { return key.empty() ? path_ : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    const json& raw(const std::string& key)
    {
        static const json null_value;
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : null_value;
    }

    double number(const std::string& key, double fallback)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) fail(key, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(key, "must be finite");
        return x;
    }

    std::optional<double> optional_number(const std::string& key)
    {
        if (!has(key)) {
            seen_.insert(key);
            return std::nullopt;
        }
        return number(key, 0.0);
    }

    template <typename Int>
    Int integer(const std::string& key, Int fallback, Int min_value)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        if (v.is_number_unsigned()) {
            const auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) fail(key, "out of range");
            return static_cast<Int>(u);
        }
        const auto s = v.get<std::int64_t>();
        if (s < static_cast<std::int64_t>(min_value)) fail(key, "must be >= " + std::to_string(min_value));
        if (static_cast<std::uint64_t>(s) > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) {
            fail(key, "out of range");
        }
        return static_cast<Int>(s);
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        if (!j_.at(key).is_string()) fail(key, "expected a string");
        return j_.at(key).get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback)
    {
        seen_.insert(key);
        if (!has(key)) return fallback;
        if (!j_.at(key).is_boolean()) fail(key, "expected true or false");
        return j_.at(key).get<bool>();
    }

    void reject_unknown() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(it.key(), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline CouplingLaw parse_law(const json& j, const std::string& path)
{
    ConfigReader r(j, path);
    const auto family = r.string("family", "uniform");
    CouplingLaw law;
    if (family == "uniform") {
        law = CouplingLaw::uniform(r.number("a", 0.0), r.number("b", 1.0));
    } else if (family == "two_point") {
        law = CouplingLaw::two_point(r.number("p", 0.5), r.number("Q", 1.0));
    } else if (family == "point_mass") {
        const double q = r.number("Q", 0.0);
        law = q == 0.0 ? CouplingLaw::two_point(1.0, 0.0) : CouplingLaw::two_point(0.0, q);
    } else if (family == "truncated_exponential") {
        law = CouplingLaw::truncated_exponential(r.number("rate", 1.0), r.number("Q", 1.0));
    } else {
        r.fail("family", "unknown law family '" + family +
                             "' (expected uniform, two_point, point_mass or truncated_exponential)");
    }
    r.reject_unknown();
    try {
        law.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return law;
}

inline json law_to_json(const CouplingLaw& law)
{
    switch (law.family) {
    case LawFamily::Uniform: return {{"family", "uniform"}, {"a", law.a}, {"b", law.b}};
    case LawFamily::TwoPoint: return {{"family", "two_point"}, {"p", law.p_zero}, {"Q", law.value}};
    case LawFamily::TruncatedExponential:
        return {{"family", "truncated_exponential"}, {"rate", law.rate}, {"Q", law.value}};
    }
    return {};
}

inline EnvelopeProfile parse_envelope(const json& j, const std::string& path)
{
    ConfigReader r(j, path);
    const auto kind = r.string("kind", "poly_decay");
    EnvelopeProfile f;
    if (kind == "poly_decay") {
        f = EnvelopeProfile::poly_decay(r.number("alpha", 3.0), r.number("c1", 1.0), r.number("c2", 1.0));
    } else if (kind == "compact_bump") {
        f = EnvelopeProfile::compact_bump(r.number("radius", 0.5), r.number("height", 1.0));
    } else {
        r.fail("kind", "unknown envelope kind '" + kind + "' (expected poly_decay or compact_bump)");
    }
    r.reject_unknown();
    return f;
}

inline json envelope_to_json(const EnvelopeProfile& f)
{
    if (f.kind == EnvelopeKind::PolyDecay) {
        return {{"kind", "poly_decay"}, {"alpha", f.alpha}, {"c1", f.c1}, {"c2", f.c2}};
    }
    return {{"kind", "compact_bump"}, {"radius", f.radius}, {"height", f.height}};
}

} // namespace detail

/// Parses and validates a config object. Errors name the offending field, e.g.
/// "config.envelope.alpha: must exceed dim = 2".
inline ExperimentConfig parse_config(const nlohmann::json& j)
{
    using detail::ConfigReader;
    ConfigReader r(j, "config");
    ExperimentConfig c;
    c.schema_version = r.integer<int>("schema_version", config_schema_version, 0);
    if (c.schema_version != config_schema_version) {
        r.fail("schema_version", "unsupported version " + std::to_string(c.schema_version) + " (expected " +
                                     std::to_string(config_schema_version) + ")");
    }
    c.dim = r.integer<int>("dim", 1, 1);
    if (c.dim > 3) r.fail("dim", "must be 1, 2 or 3");

    if (r.has("side_length")) {
        const auto& v = r.raw("side_length");
        c.side_lengths.clear();
        if (v.is_number()) {
            c.side_lengths.push_back(v.get<double>());
        } else if (v.is_array() && !v.empty()) {
            for (std::size_t k = 0; k < v.size(); ++k) {
                if (!v[k].is_number()) r.fail("side_length[" + std::to_string(k) + "]", "expected a number");
                c.side_lengths.push_back(v[k].get<double>());
            }
        } else {
            r.fail("side_length", "expected a number or a nonempty array of numbers");
        }
        for (double L : c.side_lengths) {
            if (!(L > 0.0) || !std::isfinite(L)) r.fail("side_length", "side lengths must be positive and finite");
        }
    } else {
        r.raw("side_length");
    }
    c.points_per_side = r.integer<std::size_t>("points_per_side", c.points_per_side, 2);

    if (r.has("law")) c.law = detail::parse_law(r.raw("law"), r.at("law"));
    else r.raw("law");
    if (r.has("envelope")) c.envelope = detail::parse_envelope(r.raw("envelope"), r.at("envelope"));
    else r.raw("envelope");
    try {
        c.envelope.validate(c.dim);
    } catch (const ConfigError& e) {
        throw ConfigError(r.at("envelope") + ": " + e.what());
    }
    if (c.envelope.kind == EnvelopeKind::PolyDecay && !(c.envelope.alpha > c.dim)) {
        throw ConfigError(r.at("envelope") + ".alpha: must exceed dim = " + std::to_string(c.dim));
    }

    if (r.has("energy_grid")) {
        ConfigReader g(r.raw("energy_grid"), r.at("energy_grid"));
        c.energy_grid.e_min = g.number("e_min", c.energy_grid.e_min);
        c.energy_grid.e_max = g.number("e_max", c.energy_grid.e_max);
        c.energy_grid.per_decade = g.integer<int>("per_decade", c.energy_grid.per_decade, 1);
        g.reject_unknown();
        if (!(c.energy_grid.e_min > 0.0)) g.fail("e_min", "must be positive");
        if (!(c.energy_grid.e_max >= c.energy_grid.e_min)) g.fail("e_max", "must be >= e_min");
    } else {
        r.raw("energy_grid");
    }

    c.samples = r.integer<std::size_t>("samples", c.samples, 1);
    if (c.samples < 1) r.fail("samples", "must be >= 1");
    c.base_seed = r.integer<std::uint64_t>("base_seed", c.base_seed, 0);
    c.threads = r.integer<unsigned>("threads", c.threads, 0);
    c.truncation_rel = r.number("truncation_rel", c.truncation_rel);
    if (!(c.truncation_rel > 0.0)) r.fail("truncation_rel", "must be positive");

    c.M = r.integer<int>("M", c.M, 0);
    if (c.M < 3) r.fail("M", "must be >= 3");
    c.b = r.optional_number("b");
    if (c.b && !(*c.b > 0.0)) r.fail("b", "must be positive");
    c.beta = r.optional_number("beta");
    if (c.beta && !(*c.beta >= 1.0)) r.fail("beta", "must be >= 1");
    c.epsilon_scale = r.number("epsilon_scale", c.epsilon_scale);
    if (!(c.epsilon_scale > 0.0)) r.fail("epsilon_scale", "must be positive");
    c.energy_box_coupling = r.number("energy_box_coupling", c.energy_box_coupling);
    if (!(c.energy_box_coupling > 0.0)) r.fail("energy_box_coupling", "must be positive");
    c.functional = r.string("functional", c.functional);
    if (c.functional != "energy" && c.functional != "linear_minorant") {
        r.fail("functional", "expected 'energy' or 'linear_minorant'");
    }
    c.path_samples = r.integer<std::size_t>("path_samples", c.path_samples, 1);
    if (c.path_samples < 1) r.fail("path_samples", "must be >= 1");
    c.factorization_c = r.number("factorization_c", c.factorization_c);
    if (!(c.factorization_c > 0.0)) r.fail("factorization_c", "must be positive");
    c.lambda_points = r.integer<std::size_t>("lambda_points", c.lambda_points, 2);
    if (c.lambda_points < 2) r.fail("lambda_points", "must be >= 2");

    if (r.has("fit")) {
        ConfigReader f(r.raw("fit"), r.at("fit"));
        c.fit.side = f.string("side", c.fit.side);
        if (c.fit.side != "upper" && c.fit.side != "lower") f.fail("side", "expected 'upper' or 'lower'");
        if (f.has("window")) {
            const auto& w = f.raw("window");
            if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
                f.fail("window", "expected [e_lo, e_hi]");
            }
            c.fit.window = std::pair{w[0].get<double>(), w[1].get<double>()};
            if (!(c.fit.window->first > 0.0) || !(c.fit.window->second > c.fit.window->first)) {
                f.fail("window", "need 0 < e_lo < e_hi");
            }
        } else {
            f.raw("window");
        }
        f.reject_unknown();
    } else {
        r.raw("fit");
    }

    if (r.has("output")) {
        ConfigReader o(r.raw("output"), r.at("output"));
        c.out_dir = o.string("dir", c.out_dir);
        c.plot = o.boolean("plot", c.plot);
        o.reject_unknown();
    } else {
        r.raw("output");
    }
    r.reject_unknown();

    for (double L : c.side_lengths) {
        if (c.points_for(L) < 2) r.fail("points_per_side", "grid for L = " + std::to_string(L) + " has fewer than 2 points");
    }
    return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["schema_version"] = c.schema_version;
    j["dim"] = c.dim;
    if (c.side_lengths.size() == 1) j["side_length"] = c.side_lengths.front();
    else j["side_length"] = c.side_lengths;
    j["points_per_side"] = c.points_per_side;
    j["law"] = detail::law_to_json(c.law);
    j["envelope"] = detail::envelope_to_json(c.envelope);
    j["energy_grid"] = {{"e_min", c.energy_grid.e_min}, {"e_max", c.energy_grid.e_max},
                        {"per_decade", c.energy_grid.per_decade}};
    j["samples"] = c.samples;
    j["base_seed"] = c.base_seed;
    j["threads"] = c.threads;
    j["truncation_rel"] = c.truncation_rel;
    j["M"] = c.M;
    j["b"] = c.b ? nlohmann::json(*c.b) : nlohmann::json(nullptr);
    j["beta"] = c.beta ? nlohmann::json(*c.beta) : nlohmann::json(nullptr);
    j["epsilon_scale"] = c.epsilon_scale;
    j["energy_box_coupling"] = c.energy_box_coupling;
    j["functional"] = c.functional;
    j["path_samples"] = c.path_samples;
    j["factorization_c"] = c.factorization_c;
    j["lambda_points"] = c.lambda_points;
    j["fit"] = {{"side", c.fit.side},
                {"window", c.fit.window ? nlohmann::json::array({c.fit.window->first, c.fit.window->second})
                                        : nlohmann::json(nullptr)}};
    j["output"] = {{"dir", c.out_dir}, {"plot", c.plot}};
    return j;
}

inline ExperimentConfig parse_config_text(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace lifshitz
