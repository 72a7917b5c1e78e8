#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qmpe/config.hpp"
#include "qmpe/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"quantum multiparameter estimation bounds and ancilla-scheme simulator"};

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    int threads = 1;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    auto* seed_opt = app.add_option("--seed", seed, "replace the config seed");
    auto* out_opt = app.add_option("--out", out_dir, "replace the output directory");
    app.add_option("--override", overrides, "dotted-path config override, key=value")
        ->take_all();
    auto* threads_opt = app.add_option("--threads", threads, "worker thread budget")
                            ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        const qmpe::ExperimentConfig cfg = qmpe::load_experiment_config(
            config_path, overrides, seed_opt->count() ? &seed : nullptr,
            out_opt->count() ? &out_dir : nullptr, threads_opt->count() ? &threads : nullptr);
        return qmpe::run_experiment(cfg, std::cout, std::cerr);
    } catch (const qmpe::ConfigError& e) {
        std::cerr << "{\"error\":{\"type\":\"config\",\"message\":"
                  << nlohmann::json(std::string(e.what())).dump() << "}}\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":{\"type\":\"engine\",\"message\":"
                  << nlohmann::json(std::string(e.what())).dump() << "}}\n";
        return 1;
    }
}
