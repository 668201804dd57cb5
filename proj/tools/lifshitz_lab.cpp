// lifshitz_lab: command line front end for the experiment runner.
//
//   lifshitz_lab <subcommand> [--config PATH] [--out DIR] [--seed N] [--threads N]
//                [--plot | --no-plot] [overrides...]
//
// Exit codes: 0 success, 2 config error, 3 numeric failure, 4 IO failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lifshitz/lifshitz.hpp"

namespace {

using json = nlohmann::json;

struct Overrides {
    std::optional<int> dim;
    std::optional<double> alpha;
    std::vector<double> side_lengths;
    std::optional<std::size_t> points;
    std::optional<std::size_t> samples;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> law;
    std::optional<std::string> functional;
    std::optional<int> M;
    std::optional<double> b;
    std::optional<double> beta;
    std::optional<double> epsilon_scale;
    std::optional<double> energy_box_coupling;
    std::optional<double> e_min;
    std::optional<double> e_max;
    std::optional<int> per_decade;
    std::optional<std::string> out;
    std::optional<bool> plot;
};

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw lifshitz::ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw lifshitz::ConfigError("config: malformed JSON in '" + path + "': " + e.what());
    }
}

void apply_overrides(json& j, const Overrides& o)
{
    if (!j.is_object()) return;
    if (o.dim) j["dim"] = *o.dim;
    if (o.alpha) {
        auto env = j.value("envelope", json::object());
        if (!env.is_object() || env.value("kind", "poly_decay") != "poly_decay") env = json::object();
        env["kind"] = "poly_decay";
        env["alpha"] = *o.alpha;
        j["envelope"] = env;
    }
    if (!o.side_lengths.empty()) {
        if (o.side_lengths.size() == 1) j["side_length"] = o.side_lengths.front();
        else j["side_length"] = o.side_lengths;
    }
    if (o.points) j["points_per_side"] = *o.points;
    if (o.samples) j["samples"] = *o.samples;
    if (o.seed) j["base_seed"] = *o.seed;
    if (o.threads) j["threads"] = *o.threads;
    if (o.law) j["law"] = {{"family", *o.law}};
    if (o.functional) j["functional"] = *o.functional == "linear" ? "linear_minorant" : *o.functional;
    if (o.M) j["M"] = *o.M;
    if (o.b) j["b"] = *o.b;
    if (o.beta) j["beta"] = *o.beta;
    if (o.epsilon_scale) j["epsilon_scale"] = *o.epsilon_scale;
    if (o.energy_box_coupling) j["energy_box_coupling"] = *o.energy_box_coupling;
    if (o.e_min || o.e_max || o.per_decade) {
        auto g = j.value("energy_grid", json::object());
        if (o.e_min) g["e_min"] = *o.e_min;
        if (o.e_max) g["e_max"] = *o.e_max;
        if (o.per_decade) g["per_decade"] = *o.per_decade;
        j["energy_grid"] = g;
    }
    if (o.out || o.plot) {
        auto out = j.value("output", json::object());
        if (o.out) out["dir"] = *o.out;
        if (o.plot) out["plot"] = *o.plot;
        j["output"] = out;
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lifshitz tail experiments for random Schroedinger operators with squared alloy potentials"};
    std::string subcommand;
    std::string config_path;
    Overrides o;
    bool plot = false, no_plot = false;

    app.add_option("subcommand", subcommand, "One of: ids, exponent-fit, exponent-table, concentration, "
                                             "perturbation, lower-bound, convergence")
        ->required()
        ->check(CLI::IsMember(lifshitz::subcommands()));
    app.add_option("--config", config_path, "JSON experiment config");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--seed", o.seed, "Base seed");
    app.add_option("--threads", o.threads, "Worker threads (0 = machine parallelism)");
    app.add_flag("--plot", plot, "Write SVG plots");
    app.add_flag("--no-plot", no_plot, "Skip SVG plots");
    app.add_option("--d,--dim", o.dim, "Dimension");
    app.add_option("--alpha", o.alpha, "Decay exponent of a poly_decay envelope");
    app.add_option("--L,--side-length", o.side_lengths, "Box side length(s)");
    app.add_option("--n,--points-per-side", o.points, "Grid points per side for the first L");
    app.add_option("--samples", o.samples, "Disorder samples");
    app.add_option("--law", o.law, "Coupling law family (parameters default)");
    app.add_option("--functional", o.functional, "energy or linear_minorant");
    app.add_option("--M", o.M, "Case split constant M >= 3");
    app.add_option("--b", o.b, "Small-eigenvalue threshold b");
    app.add_option("--beta", o.beta, "R = L^beta");
    app.add_option("--epsilon-scale", o.epsilon_scale, "eps = scale * L^-2");
    app.add_option("--energy-box-coupling", o.energy_box_coupling, "L = coupling * E^-1/2");
    app.add_option("--e-min", o.e_min, "Lowest grid energy");
    app.add_option("--e-max", o.e_max, "Highest grid energy");
    app.add_option("--per-decade", o.per_decade, "Energy grid points per decade");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (plot && no_plot) {
        std::cerr << "error: --plot and --no-plot are mutually exclusive\n";
        return 2;
    }
    if (plot) o.plot = true;
    if (no_plot) o.plot = false;

    lifshitz::ExperimentConfig cfg;
    try {
        json j = config_path.empty() ? json::object() : read_json_file(config_path);
        apply_overrides(j, o);
        cfg = lifshitz::parse_config(j);
    } catch (const lifshitz::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    }

    const auto outcome = lifshitz::run_experiment(subcommand, cfg, std::cout);
    if (outcome.exit_code != 0) {
        std::cerr << "error: " << outcome.record.error << "\n";
        return outcome.exit_code;
    }
    for (const auto& [name, digest] : outcome.record.digests) {
        std::cout << "  " << name << "  sha256:" << digest << "\n";
    }
    return 0;
}
