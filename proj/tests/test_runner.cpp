#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lifshitz/lifshitz.hpp"

using namespace lifshitz;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("lifshitz_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string error_of(const std::string& text)
{
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

ExperimentConfig small_ids(const fs::path& out)
{
    ExperimentConfig c;
    c.side_lengths = {4.0};
    c.points_per_side = 16;
    c.samples = 8;
    c.energy_grid = {1e-2, 10.0, 4};
    c.out_dir = out.string();
    c.plot = false;
    c.threads = 1;
    return c;
}

} // namespace

TEST_CASE("config round-trips through JSON", "[runner]")
{
    ExperimentConfig c;
    c.dim = 2;
    c.side_lengths = {8.0, 16.0};
    c.points_per_side = 32;
    c.law = CouplingLaw::truncated_exponential(2.0, 1.5);
    c.envelope = EnvelopeProfile::poly_decay(2.5, 0.5, 2.0);
    c.energy_grid = {1e-2, 2.0, 12};
    c.samples = 77;
    c.base_seed = 99;
    c.b = 0.125;
    c.beta = 1.5;
    c.functional = "linear_minorant";
    c.fit.side = "lower";
    c.fit.window = std::make_pair(0.01, 0.1);
    c.out_dir = "somewhere";
    c.plot = false;

    const auto j = to_json(c);
    const auto back = parse_config(j);
    CHECK(back == c);
    CHECK(to_json(back) == j);
    CHECK(parse_config_text(j.dump()) == c);

    ExperimentConfig d;
    CHECK(parse_config(nlohmann::json::object()) == d);
    CHECK(parse_config(to_json(d)) == d);
}

TEST_CASE("config errors name the offending field", "[runner]")
{
    CHECK(error_of(R"({"law": {"family": "uniform", "a": 0, "b": 1, "c": 2}})").find("config.law.c") !=
          std::string::npos);
    CHECK(error_of(R"({"colour": 1})").find("config.colour") != std::string::npos);
    CHECK(error_of(R"({"samples": -3})").find("config.samples") != std::string::npos);
    CHECK(error_of(R"({"side_length": [8, "x"]})").find("config.side_length[1]") != std::string::npos);
    CHECK(error_of(R"({"schema_version": 7})").find("config.schema_version") != std::string::npos);
    CHECK(error_of(R"({"dim": 2, "envelope": {"kind": "poly_decay", "alpha": 1.5}})").find("config.envelope") !=
          std::string::npos);
    CHECK(error_of(R"({"energy_grid": {"e_min": 0}})").find("config.energy_grid.e_min") != std::string::npos);
    CHECK(error_of("{not json").find("malformed") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/cfg.json"), ConfigError);
}

TEST_CASE("csv formatting follows RFC 4180", "[runner]")
{
    CsvTable empty({"E", "N"});
    CHECK(empty.str() == "E,N\r\n");

    CsvTable t({"name", "value"});
    t.row(std::vector<std::string>{"a,b", "say \"hi\""});
    t.row(std::vector<double>{0.1, -2.5e-300});
    CHECK(t.str() == "name,value\r\n\"a,b\",\"say \"\"hi\"\"\"\r\n0.1,-2.5e-300\r\n");
    CHECK_THROWS_AS(t.row(std::vector<double>{1.0}), ContractError);

    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("sha256 matches published test vectors", "[runner]")
{
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("atomic writes leave no temporaries", "[runner]")
{
    const auto dir = scratch("atomic");
    write_atomic(dir / "sub" / "a.txt", "first");
    write_atomic(dir / "sub" / "a.txt", "second");
    CHECK(slurp(dir / "sub" / "a.txt") == "second");
    CHECK_FALSE(fs::exists(dir / "sub" / "a.txt.tmp"));

    std::ofstream(dir / "blocker") << "x";
    CHECK_THROWS_AS(write_atomic(dir / "blocker" / "b.txt", "y"), IoError);
    fs::remove_all(dir);
}

TEST_CASE("runs are reproducible and recorded", "[runner]")
{
    const auto dir_a = scratch("rep_a");
    const auto dir_b = scratch("rep_b");
    std::ostringstream log;
    auto a = run_experiment("ids", small_ids(dir_a), log);
    auto b = run_experiment("ids", small_ids(dir_b), log);
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    REQUIRE(a.record.digests.count("ids_L4.csv") == 1);
    CHECK(a.record.digests == b.record.digests);
    CHECK(sha256_hex(slurp(dir_a / "ids_L4.csv")) == a.record.digests.at("ids_L4.csv"));

    auto threaded = small_ids(dir_b);
    threaded.threads = 3;
    auto c = run_experiment("ids", threaded, log);
    REQUIRE(c.exit_code == 0);
    CHECK(c.record.digests == a.record.digests);

    std::ifstream runs(dir_b / "runs.jsonl");
    std::vector<nlohmann::json> lines;
    for (std::string line; std::getline(runs, line);) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 2);
    CHECK(lines[0]["schema_version"] == 1);
    CHECK(lines[0]["subcommand"] == "ids");
    CHECK(lines[0]["status"] == "ok");
    CHECK(lines[0]["digests"]["ids_L4.csv"] == a.record.digests.at("ids_L4.csv"));
    CHECK(parse_config(lines[1]["config"]) == threaded);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("point-mass law with one sample gives a fixed digest", "[runner]")
{
    const auto dir = scratch("pointmass");
    auto cfg = small_ids(dir);
    cfg.law = CouplingLaw::two_point(0.0, 1.0);
    cfg.samples = 1;
    std::ostringstream log;
    const auto first = run_experiment("ids", cfg, log);
    REQUIRE(first.exit_code == 0);
    cfg.base_seed = 12345;
    const auto second = run_experiment("ids", cfg, log);
    REQUIRE(second.exit_code == 0);
    // a deterministic potential does not depend on the seed
    CHECK(first.record.digests.at("ids_L4.csv") == second.record.digests.at("ids_L4.csv"));
    fs::remove_all(dir);
}

TEST_CASE("concurrent runs into distinct directories do not interfere", "[runner]")
{
    const auto root = scratch("concurrent");
    std::vector<RunOutcome> outcomes(3);
    std::vector<std::thread> workers;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        workers.emplace_back([&, k] {
            std::ostringstream log;
            outcomes[k] = run_experiment("ids", small_ids(root / std::to_string(k)), log);
        });
    }
    for (auto& w : workers) w.join();
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        REQUIRE(outcomes[k].exit_code == 0);
        CHECK(outcomes[k].record.digests == outcomes[0].record.digests);
        CHECK(fs::exists(root / std::to_string(k) / "runs.jsonl"));
    }
    fs::remove_all(root);
}

TEST_CASE("failures map to exit codes and leave no artifacts", "[runner]")
{
    const auto dir = scratch("fail");
    std::ostringstream log;

    auto cfg = small_ids(dir);
    auto bad = run_experiment("no-such-thing", cfg, log);
    CHECK(bad.exit_code == 2);
    CHECK(bad.record.status == "failed");

    // an energy grid that cannot be fitted: every estimate is saturated
    cfg.energy_grid = {50.0, 100.0, 4};
    auto fit = run_experiment("exponent-fit", cfg, log);
    CHECK(fit.exit_code == 3);
    CHECK(fit.record.digests.empty());
    CHECK_FALSE(fs::exists(dir / "ids_L4.csv"));
    CHECK(fs::exists(dir / "runs.jsonl"));

    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    auto io = small_ids(dir / "file" / "nested");
    CHECK(run_experiment("ids", io, log).exit_code == 4);

    CHECK(ConfigError("x").exit_code() == 2);
    CHECK(ContractError("x").exit_code() == 2);
    CHECK(ResourceError("x").exit_code() == 2);
    CHECK(NumericError("x").exit_code() == 3);
    CHECK(InsufficientDataError("x").exit_code() == 3);
    CHECK(IoError("x").exit_code() == 4);
    fs::remove_all(dir);
}

TEST_CASE("exponent table subcommand reports the closed form", "[runner]")
{
    const auto dir = scratch("table");
    ExperimentConfig cfg;
    cfg.out_dir = dir.string();
    cfg.envelope = EnvelopeProfile::poly_decay(3.0, 1.0, 1.0);
    std::ostringstream log;
    const auto out = run_experiment("exponent-table", cfg, log);
    REQUIRE(out.exit_code == 0);
    CHECK(log.str().find("gamma = 0.5") != std::string::npos);
    CHECK(out.record.constants["gamma"] == 0.5);
    fs::remove_all(dir);
}

TEST_CASE("svg plots are well formed", "[runner]")
{
    Plot p;
    p.title = "a < b & c";
    p.log_x = true;
    p.series.push_back({"s", {0.1, 1.0, 10.0, -1.0}, {1.0, 2.0, 3.0, 4.0}});
    const auto svg = p.render();
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
}
