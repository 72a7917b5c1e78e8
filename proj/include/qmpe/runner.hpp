#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "qmpe/config.hpp"

namespace qmpe {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct CheckRow {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Quick invariant checks on built-in fixtures (the `validate` command).
std::vector<CheckRow> validate_fixtures();

// Execute the configured command and write the result bundle under
// cfg.out_dir. Returns the process exit code; failures also leave a
// machine-readable error.json and a line on `err`.
int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

} // namespace qmpe
