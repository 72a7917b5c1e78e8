#include "qmpe/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "qmpe/operator_core.hpp"
#include "qmpe/rng.hpp"

namespace qmpe {

namespace {

// Euclidean projection onto the probability simplex.
RVec simplex_project(const RVec& y) {
    std::vector<double> u(y.data(), y.data() + y.size());
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0;
    double tau = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        const double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) tau = t;
    }
    return (y.array() - tau).cwiseMax(0.0);
}

struct ProjectiveChannel {
    RVec evals;
    RVec cum; // cumulative outcome probabilities under the true state
};

ProjectiveChannel make_channel(const CMat& obs, const CMat& rho) {
    const HermitianEig eig = hermitian_eig(HermitianOperator::symmetrized(obs));
    const Index d = obs.rows();
    ProjectiveChannel ch;
    ch.evals = eig.eigenvalues;
    RVec probs(d);
    for (Index k = 0; k < d; ++k) {
        const CVec v = eig.eigenvectors.col(k);
        probs(k) = std::max(0.0, (v.adjoint() * rho * v)(0).real());
    }
    probs /= probs.sum();
    ch.cum.resize(d);
    double acc = 0.0;
    for (Index k = 0; k < d; ++k) {
        acc += probs(k);
        ch.cum(k) = acc;
    }
    ch.cum(d - 1) = 1.0;
    return ch;
}

double sample_mean(const ProjectiveChannel& ch, Index draws, RngStream& rng) {
    double sum = 0.0;
    const Index d = ch.evals.size();
    for (Index s = 0; s < draws; ++s) {
        const double u = rng.uniform();
        Index k = 0;
        while (k < d - 1 && u > ch.cum(k)) ++k;
        sum += ch.evals(k);
    }
    return draws > 0 ? sum / static_cast<double>(draws) : 0.0;
}

} // namespace

TwoStepResult two_step_protocol(const FiniteDimModel& model, Index n_total, double f,
                                const RMat& weight, const SchemeConfig& cfg,
                                const TwoStepOptions& opts) {
    model.validate();
    if (!(f > 0.0 && f < 1.0))
        throw std::invalid_argument("two_step_protocol: acquisition fraction must lie in (0, 1)");
    const Index acq = static_cast<Index>(std::floor(f * static_cast<double>(n_total)));
    if (acq < opts.min_acquisition)
        throw std::invalid_argument("two_step_protocol: acquisition budget below minimum");
    const Index m2 = n_total - acq;
    if (m2 < 1) throw std::invalid_argument("two_step_protocol: no copies left for step 2");

    const Index d = model.d;
    TwoStepResult out;
    out.n_acquisition = acq;
    out.m_step2 = m2;

    if (opts.oracle_acquisition) {
        out.beta_check = model.beta;
        out.rho_check = model.rho;
    } else {
        if (model.n != d * d - 1)
            throw std::invalid_argument(
                "two_step_protocol: state reconstruction needs d^2 - 1 observables");
        out.beta_check.resize(model.n);
        for (int j = 0; j < model.n; ++j) {
            const Index draws =
                acq / model.n + (static_cast<Index>(j) < acq % model.n ? 1 : 0);
            RngStream rng(cfg.seed, 0x100000000ull + static_cast<std::uint64_t>(j));
            const ProjectiveChannel ch = make_channel(model.observables[j].mat(), model.rho.mat());
            out.beta_check(j) = sample_mean(ch, draws, rng);
        }

        const auto basis = gellmann_basis(d);
        const Index nb = static_cast<Index>(basis.size());
        RMat t(model.n, nb);
        RVec rhs(model.n);
        for (int j = 0; j < model.n; ++j) {
            const CMat& bj = model.observables[j].mat();
            rhs(j) = out.beta_check(j) - bj.trace().real() / static_cast<double>(d);
            for (Index c = 0; c < nb; ++c) t(j, c) = trace_product(basis[c], bj).real();
        }
        Eigen::ColPivHouseholderQR<RMat> qr(t);
        if (qr.rank() < nb)
            throw std::invalid_argument(
                "two_step_protocol: observables do not determine the state");
        const RVec x = qr.solve(rhs);
        CMat rc = CMat::Identity(d, d) / static_cast<double>(d);
        for (Index c = 0; c < nb; ++c) rc += Complex(x(c), 0.0) * basis[c];

        HermitianEig eig = hermitian_eig(HermitianOperator::symmetrized(rc));
        if (eig.eigenvalues.minCoeff() < opts.rank_floor) {
            out.acquisition_projected = true;
            RVec p = simplex_project(eig.eigenvalues);
            p = p.cwiseMax(opts.rank_floor);
            p /= p.sum();
            rc = eig.eigenvectors * p.asDiagonal() * eig.eigenvectors.adjoint();
        }
        out.rho_check = HermitianOperator::symmetrized(rc);
    }

    const FiniteDimModel check = make_nonparametric_model(out.rho_check, model.observables);
    SchemeConfig cfg2 = cfg;
    cfg2.M = m2;
    out.target = build_target(check, weight, cfg2, opts.hn);
    out.run = linearized_simulate(model.rho, model.beta, out.target, cfg2);
    out.run.theta_check = out.beta_check;
    out.run.acquisition_projected = out.acquisition_projected;

    const double scale = static_cast<double>(n_total) / static_cast<double>(m2);
    out.scaled_error = out.run.scaled_error * scale;
    out.scaled_error_se = out.run.scaled_error_se * scale;
    return out;
}

BaselineResult separable_baseline(const FiniteDimModel& model, Index n_total,
                                  Index repetitions, std::uint64_t seed) {
    model.validate();
    if (n_total < model.n)
        throw std::invalid_argument("separable_baseline: need at least one copy per parameter");
    if (repetitions < 1)
        throw std::invalid_argument("separable_baseline: need at least one repetition");

    const RMat w = RMat::Identity(model.n, model.n);
    const InfluenceVector iv = efficient_influence(model);

    BaselineResult res;
    res.analytic = static_cast<double>(model.n) * hel_bound(model, w);
    res.batch = n_total / model.n;

    std::vector<ProjectiveChannel> chans;
    chans.reserve(iv.delta.size());
    const CMat id = CMat::Identity(model.d, model.d);
    for (int j = 0; j < model.n; ++j)
        chans.push_back(
            make_channel(iv.delta[j].mat() + Complex(model.beta(j), 0.0) * id, model.rho.mat()));

    RVec losses(repetitions);
    for (Index r = 0; r < repetitions; ++r) {
        RngStream rng(seed, static_cast<std::uint64_t>(r));
        double loss = 0.0;
        for (int j = 0; j < model.n; ++j) {
            const double e = sample_mean(chans[j], res.batch, rng) - model.beta(j);
            loss += e * e;
        }
        losses(r) = static_cast<double>(n_total) * loss;
    }
    res.mc = losses.mean();
    const double var = (losses.array() - res.mc).square().sum() /
                       std::max<Index>(1, repetitions - 1);
    res.mc_se = std::sqrt(var / static_cast<double>(repetitions));
    return res;
}

} // namespace qmpe
