#include "doctest.h"

#include <cmath>

#include "qmpe/bounds.hpp"
#include "qmpe/models.hpp"
#include "qmpe/operator_core.hpp"
#include "qmpe/protocol.hpp"
#include "qmpe/scheme_sim.hpp"

using namespace qmpe;

namespace {

SchemeConfig step2_config() {
    SchemeConfig cfg;
    cfg.gamma1 = 8.0; // push the homodyne readout penalty below 1e-3
    cfg.samples = 4000;
    cfg.seed = 21;
    return cfg;
}

} // namespace

TEST_SUITE("protocol") {

TEST_CASE("separable baseline on the qubit fixture") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const BaselineResult res = separable_baseline(sm.model, 30000, 400, 3);
    CHECK(res.analytic == doctest::Approx(1.77).epsilon(1e-9));
    CHECK(res.batch == 10000);
    CHECK(std::abs(res.mc - res.analytic) < 4.0 * res.mc_se);

    const auto rep = hn_bound(sm.model, RMat::Identity(3, 3));
    CHECK(res.analytic > rep.hn); // 1.77 vs 0.99
}

TEST_CASE("scalar model: baseline equals Hel equals HN") {
    const auto sm = make_spin_model(2, qubit_coords(0.3, 0.2, 0.4));
    const FiniteDimModel model = make_nonparametric_model(sm.model.rho, {sm.spin[2]});
    const double hel = hel_bound(model, RMat::Identity(1, 1));
    const auto rep = hn_bound(model, RMat::Identity(1, 1));
    const BaselineResult res = separable_baseline(model, 5000, 50, 7);
    CHECK(res.analytic == doctest::Approx(hel).epsilon(1e-12));
    CHECK(rep.hn == doctest::Approx(hel).epsilon(1e-9));
    CHECK(std::abs(res.mc - res.analytic) < 4.0 * res.mc_se);
}

TEST_CASE("commuting model: baseline gap is (n - 1) Hel") {
    CMat rho = CMat::Zero(3, 3);
    rho.diagonal() << 0.5, 0.3, 0.2;
    CMat g1 = CMat::Zero(3, 3);
    g1.diagonal() << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0.0;
    CMat g2 = CMat::Zero(3, 3);
    g2.diagonal() << 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0), -2.0 / std::sqrt(6.0);
    const FiniteDimModel model = make_nonparametric_model(
        HermitianOperator::symmetrized(rho),
        {HermitianOperator::symmetrized(g1), HermitianOperator::symmetrized(g2)});

    const auto rep = hn_bound(model, RMat::Identity(2, 2));
    CHECK(rep.gamma_hel.im.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(rep.hn == doctest::Approx(rep.hel).epsilon(1e-7));

    const BaselineResult res = separable_baseline(model, 6000, 50, 9);
    CHECK(res.analytic == doctest::Approx(2.0 * rep.hel).epsilon(1e-12));
    CHECK(res.analytic - rep.hn == doctest::Approx(rep.hel).epsilon(1e-7));
}

TEST_CASE("oracle acquisition reduces to the plain linearized run") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    SchemeConfig cfg = step2_config();
    cfg.samples = 500;
    const Index n_total = 100000;
    const double f = 0.01;
    TwoStepOptions opts;
    opts.oracle_acquisition = true;
    const TwoStepResult ts =
        two_step_protocol(sm.model, n_total, f, RMat::Identity(3, 3), cfg, opts);

    const Index m2 = n_total - 1000;
    CHECK(ts.m_step2 == m2);
    SchemeConfig cfg2 = cfg;
    cfg2.M = m2;
    const FiniteDimModel check = make_nonparametric_model(sm.model.rho, sm.model.observables);
    const auto tgt = build_target(check, RMat::Identity(3, 3), cfg2);
    const RunResult direct = linearized_simulate(sm.model.rho, sm.model.beta, tgt, cfg2);
    CHECK((ts.run.outcomes - direct.outcomes).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ts.scaled_error ==
          doctest::Approx(direct.scaled_error * static_cast<double>(n_total) / m2).epsilon(1e-12));
}

TEST_CASE("end-to-end fixture run lands near HN") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    SchemeConfig cfg = step2_config();
    cfg.samples = 60000;
    const TwoStepResult ts =
        two_step_protocol(sm.model, 1000000, 0.01, RMat::Identity(3, 3), cfg);

    CHECK(ts.n_acquisition == 10000);
    CHECK((ts.beta_check - sm.model.beta).cwiseAbs().maxCoeff() < 0.05);
    CHECK(ts.scaled_error == doctest::Approx(0.99).epsilon(0.05));
    CHECK(!ts.acquisition_projected);
}

TEST_CASE("wasting half the copies inflates the error") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    SchemeConfig cfg = step2_config();
    cfg.samples = 5000;
    const RMat w = RMat::Identity(3, 3);
    const TwoStepResult lean = two_step_protocol(sm.model, 1000000, 0.01, w, cfg);
    const TwoStepResult fat = two_step_protocol(sm.model, 1000000, 0.5, w, cfg);
    CHECK(fat.scaled_error > lean.scaled_error);
    CHECK(fat.scaled_error > 1.5); // ~2 HN from the 1/(1 - f) inflation
    CHECK(lean.scaled_error > 0.9);
}

TEST_CASE("near-pure acquisition estimates get projected back") {
    const auto sm = make_spin_model(2, qubit_coords(1.0, 0.0, 0.0));
    SchemeConfig cfg = step2_config();
    cfg.samples = 200;
    const TwoStepResult ts =
        two_step_protocol(sm.model, 20000, 0.01, RMat::Identity(3, 3), cfg);
    CHECK(ts.acquisition_projected);
    const HermitianEig eig = hermitian_eig(ts.rho_check);
    CHECK(eig.eigenvalues.minCoeff() >= 0.0);
    CHECK(ts.rho_check.mat().trace().real() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("guards") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    const SchemeConfig cfg = step2_config();
    const RMat w = RMat::Identity(3, 3);
    CHECK_THROWS_AS(two_step_protocol(sm.model, 1000000, 0.0, w, cfg), std::invalid_argument);
    CHECK_THROWS_AS(two_step_protocol(sm.model, 1000000, 1.0, w, cfg), std::invalid_argument);
    CHECK_THROWS_AS(two_step_protocol(sm.model, 1000000, 1e-5, w, cfg), std::invalid_argument);

    // a single observable cannot pin down the qubit state
    const FiniteDimModel scalar = make_nonparametric_model(sm.model.rho, {sm.spin[2]});
    CHECK_THROWS_AS(two_step_protocol(scalar, 100000, 0.01, RMat::Identity(1, 1), cfg),
                    std::invalid_argument);

    CHECK_THROWS_AS(separable_baseline(sm.model, 2, 10, 1), std::invalid_argument);
}

TEST_CASE("same seed gives identical protocol results") {
    const auto sm = make_spin_model(2, qubit_coords(0.8, 0.0, 0.0));
    SchemeConfig cfg = step2_config();
    cfg.samples = 300;
    const RMat w = RMat::Identity(3, 3);
    const TwoStepResult a = two_step_protocol(sm.model, 100000, 0.01, w, cfg);
    const TwoStepResult b = two_step_protocol(sm.model, 100000, 0.01, w, cfg);
    CHECK(a.scaled_error == b.scaled_error);
    CHECK((a.beta_check - b.beta_check).cwiseAbs().maxCoeff() == 0.0);
}

} // TEST_SUITE
