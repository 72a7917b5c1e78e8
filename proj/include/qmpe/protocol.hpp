#pragma once

#include <cstdint>

#include "qmpe/bounds.hpp"
#include "qmpe/models.hpp"
#include "qmpe/scheme_sim.hpp"
#include "qmpe/types.hpp"

namespace qmpe {

// Two-step estimation: a small acquisition batch pins down a preliminary
// estimate, the remaining copies run the collective ancilla scheme with the
// transform built at that estimate.

struct TwoStepOptions {
    Index min_acquisition = 100;
    bool oracle_acquisition = false; // skip sampling, build the transform at the truth
    double rank_floor = 1e-4;        // smallest eigenvalue kept in the reconstructed state
    HnOptions hn{};
};

struct TwoStepResult {
    RunResult run;            // step-2 linearized run, errors taken about beta_true
    MeasurementTarget target; // transform built at the acquisition estimate
    RVec beta_check;
    HermitianOperator rho_check;
    bool acquisition_projected = false;
    Index n_acquisition = 0;
    Index m_step2 = 0;
    double scaled_error = 0.0; // N tr(W V) over the full copy budget
    double scaled_error_se = 0.0;
};

// model carries the true state; n_total copies are split f / (1 - f) between
// acquisition and the collective step.
TwoStepResult two_step_protocol(const FiniteDimModel& model, Index n_total, double f,
                                const RMat& weight, const SchemeConfig& cfg,
                                const TwoStepOptions& opts = {});

// Batch-separable reference strategy: N/n copies per parameter, projective
// measurement of each X_j, W = I.
struct BaselineResult {
    double analytic = 0.0; // n * Hel
    double mc = 0.0;       // empirical N tr(V) over repetitions
    double mc_se = 0.0;
    Index batch = 0;       // copies per parameter
};

BaselineResult separable_baseline(const FiniteDimModel& model, Index n_total,
                                  Index repetitions, std::uint64_t seed);

} // namespace qmpe
