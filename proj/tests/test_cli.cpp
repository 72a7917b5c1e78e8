#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qmpe/config.hpp"
#include "qmpe/report.hpp"
#include "qmpe/runner.hpp"

using namespace qmpe;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "qmpe_cli_suite";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path.string();
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json fixture_config(const std::string& command, const std::string& out) {
    json j;
    j["schema_version"] = 1;
    j["command"] = command;
    j["model"] = {{"kind", "spin"}, {"d", 2}, {"bloch", {0.8, 0.0, 0.0}}};
    j["seed"] = 1;
    j["out"] = out;
    return j;
}

int run_to(const json& j, std::string* captured = nullptr) {
    const ExperimentConfig cfg = parse_experiment_json(j.dump());
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_experiment(cfg, out, err);
    if (captured) *captured = out.str() + err.str();
    return code;
}

std::vector<std::string> csv_lines(const fs::path& path) {
    std::vector<std::string> lines;
    std::istringstream in(slurp(path));
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("minimal bounds config fills defaults") {
    const json j = fixture_config("bounds", (scratch_dir() / "defaults").string());
    const ExperimentConfig cfg = parse_experiment_json(j.dump());
    CHECK(cfg.command == "bounds");
    CHECK(cfg.seed == 1);
    CHECK(cfg.model_kind == "spin");
    CHECK(cfg.model_d == 2);
    CHECK(cfg.model_coords.size() == 3);
    CHECK(cfg.weight.rows() == 3);
    CHECK(cfg.weight.isIdentity(1e-12));
    CHECK(cfg.scheme.samples == 2000);
    CHECK(cfg.scheme.seed == cfg.seed);
    CHECK(cfg.hn.seed == cfg.seed);
    CHECK(cfg.sweep_axis.empty());
}

TEST_CASE("strict schema rejects malformed documents") {
    json base = fixture_config("bounds", (scratch_dir() / "reject").string());

    json j = base;
    j["banana"] = 1;
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["scheme"] = {{"M", 2}, {"giraffe", 3}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["model"]["extra"] = true;
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["schema_version"] = 2;
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j.erase("command");
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["command"] = "meditate";
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["model"]["coords"] = {0.1, 0.2, 0.3};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError); // bloch and coords

    j = base;
    j["model"]["bloch"] = {0.8, 0.0};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["weight"] = {{1.0, 0.2}, {0.1, 1.0}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError); // asymmetric

    j = base;
    j["weight"] = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError); // wrong size

    j = base;
    j["command"] = "protocol";
    j["protocol"] = {{"n", 1000}, {"n_grid", {10, 20}}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["command"] = "simulate-linear";
    j["sweep"] = {{"axis", "f"}, {"values", {0.1, 0.2}}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError); // f sweeps only the protocol

    j = base;
    j["command"] = "protocol";
    j["sweep"] = {{"axis", "M"}, {"values", {2.0, 4.0}}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["command"] = "simulate-linear";
    j["sweep"] = {{"axis", "volume"}, {"values", {1.0}}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);

    j = base;
    j["command"] = "simulate-linear";
    j["sweep"] = {{"axis", "M"}, {"values", json::array()}};
    CHECK_THROWS_AS(parse_experiment_json(j.dump()), ConfigError);
}

TEST_CASE("dotted overrides rewrite the document before validation") {
    const fs::path dir = scratch_dir() / "override";
    fs::create_directories(dir);
    const json j = fixture_config("bounds", (dir / "out").string());
    const std::string cfg_path = write_file(dir / "config.json", j.dump());

    const std::uint64_t seed = 99;
    const ExperimentConfig cfg = load_experiment_config(
        cfg_path, {"scheme.M=7", "model.bloch.0=0.7", "protocol.f=0.05"}, &seed);
    CHECK(cfg.scheme.M == 7);
    CHECK(cfg.model_coords(0) == doctest::Approx(0.7 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(cfg.protocol_f == doctest::Approx(0.05));
    CHECK(cfg.seed == 99);
    CHECK(cfg.scheme.seed == 99);

    CHECK_THROWS_AS(load_experiment_config(cfg_path, {"scheme.pelican=1"}), ConfigError);
    CHECK_THROWS_AS(load_experiment_config(cfg_path, {"model.bloch.7=0.1"}), ConfigError);
    CHECK_THROWS_AS(load_experiment_config(cfg_path, {"seed"}), ConfigError); // no '='
}

TEST_CASE("model can live in its own file and is inlined before hashing") {
    const fs::path dir = scratch_dir() / "model_file";
    fs::create_directories(dir);
    write_file(dir / "model_a.json",
               json{{"kind", "spin"}, {"d", 2}, {"bloch", {0.8, 0.0, 0.0}}}.dump());
    write_file(dir / "model_b.json",
               json{{"kind", "spin"}, {"d", 2}, {"bloch", {0.5, 0.1, 0.0}}}.dump());

    json j = fixture_config("bounds", (dir / "out").string());
    j["model"] = "model_a.json";
    const std::string cfg_path = write_file(dir / "config.json", j.dump());

    const ExperimentConfig a = load_experiment_config(cfg_path, {});
    CHECK(a.model_coords(0) == doctest::Approx(0.8 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(a.canonical_text.find("model_a.json") == std::string::npos); // content replaced the path

    const ExperimentConfig b = load_experiment_config(cfg_path, {"model=\"model_b.json\""});
    CHECK(config_hash(a.canonical_text) != config_hash(b.canonical_text));

    CHECK_THROWS_AS(load_experiment_config(cfg_path, {"model=\"missing.json\""}), ConfigError);
}

TEST_CASE("bounds command writes the fixture report") {
    const fs::path out = scratch_dir() / "bounds_run";
    std::string console;
    CHECK(run_to(fixture_config("bounds", out.string()), &console) == 0);
    CHECK(console.find("report.json") != std::string::npos);

    const json report = json::parse(slurp(out / "report.json"));
    CHECK(report["bounds"]["hel"].get<double>() == doctest::Approx(0.59).epsilon(1e-9));
    CHECK(report["bounds"]["hn"].get<double>() == doctest::Approx(0.99).epsilon(1e-7));
    CHECK(report["bounds"]["c_at_hel"].get<double>() == doctest::Approx(0.99).epsilon(1e-7));
    CHECK(report["provenance"]["config_hash"].get<std::string>().size() == 16);
    CHECK(report["provenance"]["artifact_version"] == kArtifactVersion);
    CHECK(report["provenance"]["schema_version"] == 1);
    CHECK(report["units"] == "shot-noise units, hbar = 1");
    CHECK(report["config"]["command"] == "bounds");
}

TEST_CASE("identical config and seed reproduce the report byte for byte") {
    const fs::path out = scratch_dir() / "repro";
    json j = fixture_config("simulate-linear", out.string());
    j["scheme"] = {{"samples", 500}, {"gamma1", 4.0}};

    REQUIRE(run_to(j) == 0);
    const std::string first = slurp(out / "report.json");
    REQUIRE(run_to(j) == 0);
    CHECK(first == slurp(out / "report.json"));

    j["seed"] = 2;
    REQUIRE(run_to(j) == 0);
    const json changed = json::parse(slurp(out / "report.json"));
    const json original = json::parse(first);
    CHECK(changed["provenance"]["config_hash"] != original["provenance"]["config_hash"]);
    CHECK(changed["run"]["scaled_error"] != original["run"]["scaled_error"]);
}

TEST_CASE("gdyne noise sweep lands its minimum at the analytic split") {
    const fs::path out = scratch_dir() / "noise_sweep";
    json j = fixture_config("simulate-linear", out.string());
    j["scheme"] = {{"samples", 400}};
    j["sweep"] = {{"axis", "gdyne_noise"}, {"values", {0.3, 0.5, 0.8}}};
    REQUIRE(run_to(j) == 0);

    const auto lines = csv_lines(out / "table.csv");
    REQUIRE(lines.size() == 5); // units comment, header, three rows
    CHECK(lines[0] == "# units: shot-noise units, hbar = 1");
    CHECK(lines[1] == "gdyne_noise,scaled_error,scaled_error_se,predicted_scaled_error");

    std::vector<double> predicted;
    for (int i = 2; i < 5; ++i) {
        std::istringstream row(lines[i]);
        std::string field;
        std::vector<double> vals;
        while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
        REQUIRE(vals.size() == 4);
        predicted.push_back(vals[3]);
    }
    CHECK(predicted[1] < predicted[0]); // v = 0.5 is the optimum for the fixture
    CHECK(predicted[1] < predicted[2]);

    const json report = json::parse(slurp(out / "report.json"));
    CHECK(report["sweep"]["axis"] == "gdyne_noise");
    CHECK(report["sweep"]["rows"].size() == 3);
}

TEST_CASE("engine mismatch surfaces as a config error bundle") {
    const fs::path out = scratch_dir() / "bad_engine";
    json j;
    j["schema_version"] = 1;
    j["command"] = "simulate-linear";
    j["model"] = {{"kind", "thermal"},
                  {"upsilon", {{0.5}}},
                  {"derivatives", {{{1.0}}}}};
    j["seed"] = 1;
    j["out"] = out.string();

    std::string console;
    CHECK(run_to(j, &console) == 2);
    CHECK(console.find("\"type\":\"config\"") != std::string::npos);

    const json error = json::parse(slurp(out / "error.json"));
    CHECK(error["error"]["type"] == "config");
    CHECK(error["error"]["command"] == "simulate-linear");
    CHECK(fs::exists(out / "report.json") == false);
}

TEST_CASE("validate command reports every fixture as passing") {
    const fs::path out = scratch_dir() / "validate_run";
    json j;
    j["schema_version"] = 1;
    j["command"] = "validate";
    j["seed"] = 1;
    j["out"] = out.string();

    std::string console;
    CHECK(run_to(j, &console) == 0);
    CHECK(console.find("PASS") != std::string::npos);
    CHECK(console.find("FAIL") == std::string::npos);

    const json report = json::parse(slurp(out / "report.json"));
    CHECK(report["validate"]["all_pass"] == true);
    CHECK(report["validate"]["checks"].size() >= 6);
}

TEST_CASE("installed binary round trip") {
    const fs::path dir = scratch_dir() / "binary";
    fs::create_directories(dir);
    const json j = fixture_config("bounds", (dir / "out").string());
    const std::string cfg_path = write_file(dir / "config.json", j.dump());

    const std::string ok = std::string(QMPE_BIN) + " --config " + cfg_path + " > " +
                           (dir / "stdout.txt").string() + " 2>&1";
    CHECK(std::system(ok.c_str()) == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));

    const std::string bad = std::string(QMPE_BIN) + " --config " + cfg_path +
                            " --override banana=1 > /dev/null 2>" +
                            (dir / "stderr.txt").string();
    CHECK(std::system(bad.c_str()) != 0);
    CHECK(slurp(dir / "stderr.txt").find("banana") != std::string::npos);
}

}
