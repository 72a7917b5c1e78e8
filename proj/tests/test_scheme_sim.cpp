#include "doctest.h"

#include <cmath>

#include "qmpe/bounds.hpp"
#include "qmpe/fock.hpp"
#include "qmpe/models.hpp"
#include "qmpe/operator_core.hpp"
#include "qmpe/rng.hpp"
#include "qmpe/scheme_sim.hpp"

using namespace qmpe;

namespace {

SchemeConfig base_config() {
    SchemeConfig cfg;
    cfg.M = 2;
    cfg.x_init.cutoff = 32;
    cfg.samples = 256;
    cfg.seed = 11;
    return cfg;
}

MeasurementTarget fixture_target(const SchemeConfig& cfg) {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    return build_target(sm.model, RMat::Identity(3, 3), cfg);
}

} // namespace

TEST_SUITE("scheme_sim") {

TEST_CASE("config validation") {
    SchemeConfig cfg = base_config();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.kappa() == doctest::Approx(std::sqrt(2.0)));
    CHECK(cfg.kappa() * cfg.time() == doctest::Approx(M_PI / 2));

    SchemeConfig bad = cfg;
    bad.pair_init.q_var = 0.1;
    bad.pair_init.p_var = 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = cfg;
    bad.t = 1.0; // kappa t != pi/2
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.quarter_period = false;
    CHECK_NOTHROW(bad.validate());

    bad = cfg;
    bad.M = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("gdyne noise optimization matches the closed form") {
    const SchemeConfig cfg = base_config();
    const auto tgt = fixture_target(cfg);
    // W = I, symmetric pair columns: balanced split at vacuum variance
    CHECK(tgt.gdyne_v(0) == doctest::Approx(0.5).epsilon(1e-6));

    RngStream rng(5, 0);
    RMat a(3, 3);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) a(i, j) = rng.normal();
    const RMat w = a * a.transpose() + 0.5 * RMat::Identity(3, 3);
    const double v = optimal_gdyne_noise(w, tgt.ct.L, 0);
    const RVec lq = tgt.ct.L.col(0), lp = tgt.ct.L.col(1);
    const double closed = std::sqrt(lp.dot(w * lp) / (4.0 * lq.dot(w * lq)));
    CHECK(v == doctest::Approx(closed).epsilon(1e-6));
}

TEST_CASE("predicted error is C plus the finite-gamma-t homodyne penalty") {
    const SchemeConfig cfg = base_config();
    const auto tgt = fixture_target(cfg);
    const double gt = cfg.gamma() * cfg.time();
    CHECK(tgt.predicted_scaled_error ==
          doctest::Approx(0.99 + 0.05 / (gt * gt)).epsilon(1e-9));
}

TEST_CASE("hamiltonian matches the explicit tensor formula") {
    SchemeConfig cfg = base_config();
    cfg.M = 1;
    cfg.pair_init.cutoff = 10;
    cfg.x_init.cutoff = 10;
    const auto tgt = fixture_target(cfg);
    const auto h = build_hamiltonian(tgt, cfg);
    CHECK(h.mat().rows() == 200);

    const CMat i10 = CMat::Identity(10, 10);
    const CMat y0 = tgt.y_ops[0].mat(), y1 = tgt.y_ops[1].mat(), y2 = tgt.y_ops[2].mat();
    CMat ref = kron(kron(y0, quadrature_p(10)), i10) - kron(kron(y1, quadrature_q(10)), i10) +
               kron(kron(y2, i10), quadrature_p(10));
    ref *= cfg.kappa(); // kappa1 = gamma1 = 1, M = 1
    CHECK((h.mat() - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("no pairs and gamma = 0 gives H = 0") {
    // single commuting observable: ImGamma is 1x1, so r = 0
    const auto sm = make_spin_model(2, qubit_coords(0.0, 0.0, 0.6));
    CMat sz = sm.spin[2].mat();
    FiniteDimModel model = make_nonparametric_model(sm.model.rho, {HermitianOperator{sz}});
    SchemeConfig cfg = base_config();
    cfg.gamma1 = 0.0;
    const auto tgt = build_target(model, RMat::Identity(1, 1), cfg);
    CHECK(tgt.r == 0);
    const auto h = build_hamiltonian(tgt, cfg);
    CHECK(h.mat().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("budget and cap guards") {
    SchemeConfig cfg = base_config();
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const RVec beta = sm.model.beta;

    SchemeConfig big = cfg;
    big.M = 12;
    CHECK_THROWS_AS(exact_evolve_and_measure(sm.model.rho, beta, tgt, big), std::invalid_argument);
    big.M = 4;
    big.exact_dim_budget = 100;
    CHECK_THROWS_AS(exact_evolve_and_measure(sm.model.rho, beta, tgt, big), std::invalid_argument);
    CHECK_THROWS_AS(build_hamiltonian(tgt, cfg, 50), std::invalid_argument);
}

TEST_CASE("undersized x ancilla trips the truncation guard") {
    SchemeConfig cfg = base_config();
    cfg.M = 1;
    cfg.x_init.cutoff = 12; // squeezed to 0.05: deficit ~2e-3 at 12 levels
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    CHECK_THROWS_AS(exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, cfg),
                    std::runtime_error);
}

TEST_CASE("estimator identities") {
    const SchemeConfig cfg = base_config();
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.7, 0.15, 0.1));

    RVec mean_raw;
    RMat cov_raw;
    RunResult lin = linearized_simulate(sm.model.rho, sm.model.beta, tgt, cfg);
    // exact mean inputs reproduce beta(theta_true) exactly: the model is linear
    const RVec bh = estimator(lin.model_mean, tgt, cfg);
    CHECK((bh - sm.model.beta).cwiseAbs().maxCoeff() < 1e-12);

    RVec wrong(2);
    wrong << 0.0, 0.0;
    CHECK_THROWS_AS(estimator(wrong, tgt, cfg), std::invalid_argument);
    (void)mean_raw;
    (void)cov_raw;
}

TEST_CASE("linearized engine matches its own Gaussian law") {
    SchemeConfig cfg = base_config();
    cfg.samples = 40000;
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const RunResult res = linearized_simulate(sm.model.rho, sm.model.beta, tgt, cfg);

    const double s = static_cast<double>(cfg.samples);
    for (int c = 0; c < 3; ++c) {
        const double se = std::sqrt(res.model_cov(c, c) / s);
        CHECK(std::abs(res.readout_mean(c) - res.model_mean(c)) < 4.0 * se);
    }
    CHECK((res.readout_cov - res.model_cov).cwiseAbs().maxCoeff() < 0.03);

    // beta-hat unbiased around (0.4, 0, 0)
    const RVec bmean = res.beta_hat.colwise().mean().transpose();
    for (int j = 0; j < 3; ++j) {
        const double se = std::sqrt(res.V(j, j) / s);
        CHECK(std::abs(bmean(j) - sm.model.beta(j)) < 4.0 * se);
    }
    CHECK(res.scaled_error ==
          doctest::Approx(tgt.predicted_scaled_error).epsilon(0.05));
    CHECK(std::abs(res.scaled_error - tgt.predicted_scaled_error) < 4.0 * res.scaled_error_se);
}

TEST_CASE("error scales as 1/M in the linearized engine") {
    SchemeConfig cfg = base_config();
    cfg.samples = 5000;
    const auto tgt0 = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));

    SchemeConfig c1 = cfg;
    c1.M = 1000;
    SchemeConfig c2 = cfg;
    c2.M = 2000;
    const RunResult r1 = linearized_simulate(sm.model.rho, sm.model.beta, tgt0, c1);
    const RunResult r2 = linearized_simulate(sm.model.rho, sm.model.beta, tgt0, c2);
    // identical sample streams: the ratio is exact, not statistical
    CHECK(r1.V.trace() / r2.V.trace() == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(r1.scaled_error == doctest::Approx(r2.scaled_error).epsilon(1e-10));
}

TEST_CASE("homodyne excess variance follows var(q'')/(gamma t)^2") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const double re_xx = 0.09; // tr(rho (s1 - 0.4)^2)
    for (double g1 : {1.0, 3.0}) {
        SchemeConfig cfg = base_config();
        cfg.gamma1 = g1;
        cfg.samples = 400000;
        const auto tgt = fixture_target(cfg);
        const RunResult res = linearized_simulate(sm.model.rho, sm.model.beta, tgt, cfg);
        const double gt = res.gamma_t;
        const double var_xhat = res.readout_cov(2, 2) / (gt * gt);
        const double excess = var_xhat - re_xx;
        CHECK(excess == doctest::Approx(0.05 / (gt * gt)).epsilon(0.2));
    }
}

TEST_CASE("kappa = gamma = 0 leaves the ancilla statistics untouched") {
    SchemeConfig cfg = base_config();
    cfg.M = 1;
    cfg.kappa1 = 0.0;
    cfg.gamma1 = 0.0;
    cfg.t = 1.0;
    cfg.quarter_period = false;
    cfg.samples = 32;
    const SchemeConfig ref = base_config();
    const auto tgt = fixture_target(ref); // target built with live couplings
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const RunResult res = exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, cfg);

    CHECK(std::abs(res.grid_mean(0)) < 2e-3);
    CHECK(std::abs(res.grid_mean(1)) < 2e-3);
    CHECK(std::abs(res.grid_mean(2)) < 2e-3);
    CHECK(res.grid_cov(0, 0) == doctest::Approx(0.5 + tgt.gdyne_v(0)).epsilon(2e-3));
    CHECK(res.grid_cov(1, 1) == doctest::Approx(0.5 + 0.25 / tgt.gdyne_v(0)).epsilon(2e-3));
    CHECK(res.grid_cov(2, 2) == doctest::Approx(0.05).epsilon(2e-2));
    CHECK(res.grid_deficit < 1e-3);
}

TEST_CASE("dense and Chebyshev propagation agree") {
    SchemeConfig cfg = base_config();
    cfg.M = 1;
    cfg.pair_init.cutoff = 8;
    cfg.samples = 16;
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.7, 0.15, 0.1));

    SchemeConfig dense = cfg;
    dense.dense_eig_dim = 4096;
    SchemeConfig cheb = cfg;
    cheb.dense_eig_dim = 0;
    const RunResult rd = exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, dense);
    const RunResult rc = exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, cheb);
    CHECK((rd.grid_mean - rc.grid_mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((rd.grid_cov - rc.grid_cov).cwiseAbs().maxCoeff() < 1e-8);
    // same seed, same discretized distribution: identical samples
    CHECK((rd.outcomes - rc.outcomes).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("exact engine: sampler reproduces the grid moments") {
    SchemeConfig cfg = base_config();
    cfg.M = 2;
    cfg.samples = 4000;
    const auto tgt = fixture_target(cfg);
    const auto sm = make_spin_model(2, qubit_coords(0.7, 0.15, 0.1));
    const RunResult res = exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, cfg);

    const double s = static_cast<double>(cfg.samples);
    for (int c = 0; c < 3; ++c) {
        const double se = std::sqrt(res.grid_cov(c, c) / s);
        CHECK(std::abs(res.readout_mean(c) - res.grid_mean(c)) < 4.5 * se);
    }
    for (int c = 0; c < 3; ++c)
        CHECK(res.readout_cov(c, c) ==
              doctest::Approx(res.grid_cov(c, c)).epsilon(0.15));
    CHECK(res.truncation_deficit < 1e-3);
    CHECK(res.grid_deficit < 1e-3);
}

TEST_CASE("readout means scale as sqrt(M) and track the linearized engine") {
    const auto sm = make_spin_model(2, qubit_coords(0.7, 0.15, 0.1));
    RVec mean1, mean2;
    for (Index m : {Index(1), Index(2)}) {
        SchemeConfig cfg = base_config();
        cfg.M = m;
        cfg.samples = 16;
        const auto tgt = fixture_target(cfg);
        const RunResult res = exact_evolve_and_measure(sm.model.rho, sm.model.beta, tgt, cfg);
        const double rel_tol = 10.0 * (1.0 / std::sqrt(static_cast<double>(m)) +
                                       res.truncation_deficit);
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(res.grid_mean(c) - res.model_mean(c)) <=
                  rel_tol * std::max(1e-3, std::abs(res.model_mean(c))));
        (m == 1 ? mean1 : mean2) = res.grid_mean;
    }
    // gamma t is M-independent, so every channel mean should grow ~sqrt(2)
    CHECK(mean2(2) / mean1(2) == doctest::Approx(std::sqrt(2.0)).epsilon(0.1));
}

} // TEST_SUITE
