#ifndef QMPE_SCHEME_SIM_HPP
#define QMPE_SCHEME_SIM_HPP

#include <cstdint>
#include <vector>

#include "qmpe/bounds.hpp"
#include "qmpe/canonical.hpp"
#include "qmpe/models.hpp"
#include "qmpe/types.hpp"

namespace qmpe {

/// Gaussian ancilla input state. Minimum uncertainty unless p_var is widened;
/// variances in shot units (vacuum 1/2).
struct AncillaSpec {
    double q_mean = 0.0;
    double p_mean = 0.0;
    double q_var = 0.5;
    double p_var = 0.5;
    Index cutoff = 12;
};

/// Coupling, timing, readout and budget knobs for both simulation engines.
/// Effective rates are kappa = sqrt(M) kappa1, gamma = sqrt(M) gamma1; the
/// interaction time defaults to the quarter period kappa t = pi/2.
struct SchemeConfig {
    Index M = 4;
    double kappa1 = 1.0;
    double gamma1 = 1.0;
    double t = 0.0;             // <= 0: derived from kappa t = pi/2
    bool quarter_period = true; // when t is given, enforce kappa t = pi/2

    AncillaSpec pair_init{0.0, 0.0, 0.5, 0.5, 12}; // vacuum readout ancillas
    AncillaSpec x_init{0.0, 0.0, 0.05, 5.0, 40};   // squeezed q'' ancillas

    double gdyne_noise = 0.0; // projector q-variance; <= 0 selects the per-pair optimum
    Index samples = 2000;
    std::uint64_t seed = 1;

    Index gdyne_grid = 121;   // points per quadrature axis
    double gdyne_span = 6.0;  // shot units
    Index homodyne_bins = 241;
    double homodyne_span_factor = 6.0; // times gamma t max|x|

    double deficit_tol = 1e-3;
    Index exact_dim_budget = 65536;
    Index exact_m_cap = 6;
    Index dense_eig_dim = 256; // exact engine uses Chebyshev propagation above this
    Index checkpoints = 2;

    double kappa() const;
    double gamma() const;
    double time() const;
    void validate() const;
};

/// Measurement plan built at the working point: optimal influence from the
/// HN optimizer, canonical transform, X/Y observables and the general-dyne
/// noise split.
struct MeasurementTarget {
    FiniteDimModel model; // at theta-check
    RMat weight;
    BoundReport rep;
    CanonicalTransform ct;
    std::vector<HermitianOperator> x_ops;
    std::vector<HermitianOperator> y_ops;
    int n = 0;
    int r = 0;
    RVec gdyne_v; // per-pair projector variance
    double predicted_scaled_error = 0.0;
};

MeasurementTarget build_target(const FiniteDimModel& model_check, const RMat& weight,
                               const SchemeConfig& cfg, const HnOptions& hn_opts = {});

/// Minimizes a v + b/(4v) over v for pair `pair`, where a and b weigh the q
/// and p columns of L against the weight matrix; golden-section search.
double optimal_gdyne_noise(const RMat& weight, const RMat& l, Index pair);

struct RunResult {
    RMat outcomes; // samples x channels, raw readouts: pair (q, p)..., then q'' values
    RMat beta_hat; // samples x n
    RMat V;        // empirical error matrix about beta_true
    double scaled_error = 0.0;    // N tr(W V)
    double scaled_error_se = 0.0; // Monte Carlo standard error
    Index N_used = 0;

    RVec beta_true;
    RVec readout_mean; // empirical raw moments
    RMat readout_cov;
    RVec model_mean; // linearized predictions
    RMat model_cov;
    RVec grid_mean; // exact engine: moments of the discretized POVM
    RMat grid_cov;

    double truncation_deficit = 0.0;
    double grid_deficit = 0.0;
    double kappa_t = 0.0;
    double gamma_t = 0.0;

    RVec theta_check; // filled by the protocol layer
    bool acquisition_projected = false;
};

/// H^(M) = kappa sum_j (q_j^(M) p'_j - p_j^(M) q'_j) + gamma sum_j x_j^(M) p''_j
/// on object^(x M) (x) pair ancillas (x) x ancillas, dense form for small
/// dimensions; the exact engine assembles the same operator sparsely.
HermitianOperator build_hamiltonian(const MeasurementTarget& tgt, const SchemeConfig& cfg,
                                    Index max_dim = 4096);

/// Evolves rho_true^(x M) with the truncated ancillas under exp(-i H t) and
/// measures: general-dyne grid on pair ancillas, homodyne bins on q''.
RunResult exact_evolve_and_measure(const HermitianOperator& rho_true, const RVec& beta_true,
                                   const MeasurementTarget& tgt, const SchemeConfig& cfg);

/// QCLT limit: Y^(inf) Gaussian with mean sqrt(M) L^-1 beta(theta_true) and
/// covariance Re(Gamma_Y) at theta-check, exact linear input-output maps,
/// ancilla plus general-dyne noise.
RunResult linearized_simulate(const HermitianOperator& rho_true, const RVec& beta_true,
                              const MeasurementTarget& tgt, const SchemeConfig& cfg);

/// beta-hat = L y / sqrt(M): pair channels read y directly, x channels as
/// q''(t) / (gamma t).
RVec estimator(const RVec& raw_outcomes, const MeasurementTarget& tgt, const SchemeConfig& cfg);

} // namespace qmpe

#endif
