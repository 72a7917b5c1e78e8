#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qmpe/bounds.hpp"
#include "qmpe/scheme_sim.hpp"
#include "qmpe/types.hpp"

namespace qmpe {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fully resolved experiment description. Parsed from versioned JSON with a
// strict schema: unknown keys anywhere are rejected.
struct ExperimentConfig {
    std::string command;
    std::uint64_t seed = 1;
    std::string out_dir = "results";
    int threads = 1;

    // model
    std::string model_kind; // "spin" | "thermal"
    Index model_d = 2;
    RVec model_coords;        // spin family coordinates, length d^2 - 1
    RMat upsilon;             // thermal mode covariance, m x m
    std::vector<RMat> d_list; // thermal derivative quadratic forms

    RMat weight; // n x n, defaults to identity

    SchemeConfig scheme;
    HnOptions hn;

    std::vector<Index> protocol_n{100000};
    double protocol_f = 0.01;
    Index protocol_min_acquisition = 100;
    bool protocol_oracle = false;

    Index baseline_n = 30000;
    Index baseline_reps = 200;

    std::string sweep_axis; // empty when not sweeping
    std::vector<double> sweep_values;

    std::string canonical_text; // schema-validated input, sorted keys
};

// Parse and validate a config document given as JSON text.
ExperimentConfig parse_experiment_json(const std::string& text);

// Read a config file, apply dotted-path overrides ("scheme.M=4"), then
// optional seed/out replacements, and validate.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides,
                                        const std::uint64_t* seed_override = nullptr,
                                        const std::string* out_override = nullptr,
                                        const int* threads_override = nullptr);

} // namespace qmpe
