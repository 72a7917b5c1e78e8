#include "qmpe/scheme_sim.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "qmpe/fock.hpp"
#include "qmpe/operator_core.hpp"
#include "qmpe/rng.hpp"

namespace qmpe {

namespace {

constexpr double kPi = 3.14159265358979323846;

using SpMat = Eigen::SparseMatrix<Complex>;
using Triplet = Eigen::Triplet<Complex>;

SpMat to_sparse(const CMat& a, double tol = 1e-14) {
    std::vector<Triplet> trips;
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            if (std::abs(a(i, j)) > tol) trips.emplace_back(i, j, a(i, j));
    SpMat s(a.rows(), a.cols());
    s.setFromTriplets(trips.begin(), trips.end());
    return s;
}

SpMat sp_identity(Index n) {
    SpMat s(n, n);
    s.setIdentity();
    return s;
}

SpMat sp_kron(const SpMat& a, const SpMat& b) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(a.nonZeros()) * b.nonZeros());
    for (Index ka = 0; ka < a.outerSize(); ++ka)
        for (SpMat::InnerIterator ia(a, ka); ia; ++ia)
            for (Index kb = 0; kb < b.outerSize(); ++kb)
                for (SpMat::InnerIterator ib(b, kb); ib; ++ib)
                    trips.emplace_back(ia.row() * b.rows() + ib.row(),
                                       ia.col() * b.cols() + ib.col(), ia.value() * ib.value());
    SpMat s(a.rows() * b.rows(), a.cols() * b.cols());
    s.setFromTriplets(trips.begin(), trips.end());
    return s;
}

/// exp(-i H dt) by dense eigendecomposition below `dense_cap`, else by a
/// Chebyshev expansion on the Gershgorin interval of the sparse H.
struct Propagator {
    bool dense = false;
    CMat evecs;
    RVec evals;
    SpMat h;
    double center = 0.0;
    double half = 1.0;

    static Propagator make(const SpMat& ham, Index dense_cap) {
        Propagator p;
        if (ham.rows() <= dense_cap) {
            p.dense = true;
            const auto eig = hermitian_eig(HermitianOperator(CMat(ham)));
            p.evals = eig.eigenvalues;
            p.evecs = eig.eigenvectors;
            return p;
        }
        p.h = ham;
        RVec diag = RVec::Zero(ham.rows());
        RVec radius = RVec::Zero(ham.rows());
        for (Index k = 0; k < ham.outerSize(); ++k)
            for (SpMat::InnerIterator it(ham, k); it; ++it) {
                if (it.row() == it.col())
                    diag(it.row()) += it.value().real();
                else
                    radius(it.row()) += std::abs(it.value());
            }
        const double lo = (diag - radius).minCoeff();
        const double hi = (diag + radius).maxCoeff();
        p.center = 0.5 * (lo + hi);
        p.half = std::max(0.5 * (hi - lo), 1e-12);
        return p;
    }

    CVec apply(const CVec& psi, double dt) const {
        if (dense) {
            CVec phases(evals.size());
            for (Index i = 0; i < evals.size(); ++i)
                phases(i) = std::exp(Complex(0.0, -evals(i) * dt));
            return evecs * phases.asDiagonal() * (evecs.adjoint() * psi);
        }
        const double tau = half * dt;
        const Complex phase = std::exp(Complex(0.0, -center * dt));
        if (std::abs(tau) < 1e-14) return phase * psi;

        const auto scaled = [&](const CVec& v) -> CVec { return (h * v - center * v) / half; };
        CVec w0 = psi;
        CVec w1 = scaled(psi);
        CVec res = std::cyl_bessel_j(0, tau) * w0;
        Complex ik(0.0, -1.0); // (-i)^k
        res += 2.0 * ik * std::cyl_bessel_j(1, tau) * w1;
        const Index kmax = static_cast<Index>(tau + 40.0 * std::cbrt(tau + 1.0) + 200.0);
        for (Index k = 2; k <= kmax; ++k) {
            CVec w2 = 2.0 * scaled(w1) - w0;
            ik *= Complex(0.0, -1.0);
            const double jk = std::cyl_bessel_j(static_cast<double>(k), tau);
            res += 2.0 * ik * jk * w2;
            w0.swap(w1);
            w1.swap(w2);
            if (static_cast<double>(k) > tau && std::abs(jk) < 1e-16) break;
        }
        res *= phase;
        const double drift = std::abs(res.norm() - psi.norm());
        if (drift > 1e-9)
            throw std::runtime_error("scheme_sim: Chebyshev propagation lost unitarity");
        return res;
    }
};

struct Mode {
    bool pair = false;
    Index cutoff = 0;
    AncillaSpec init;
    double v = 0.5; // general-dyne projector variance (pair modes)

    CVec init_vec;        // renormalized truncation
    double init_deficit = 0.0;

    // measurement bank
    CMat proj;            // columns: projector amplitudes per outcome
    RVec val1, val2;      // pair: grid q, p values; x: bin centers in val1
    double cell = 0.0;    // phase-space cell / bin width factor
    CMat mass, o1, o2, o11, o22, o12;
};

Mode make_mode(bool pair, const AncillaSpec& init, double v) {
    Mode m;
    m.pair = pair;
    m.cutoff = init.cutoff;
    m.init = init;
    m.v = v;
    const CVec raw = gaussian_state_coeffs(init.cutoff, init.q_mean, init.p_mean, init.q_var);
    const double norm2 = raw.squaredNorm();
    m.init_deficit = 1.0 - norm2;
    m.init_vec = raw / std::sqrt(norm2);
    return m;
}

void check_mode_commutator(const Mode& m) {
    const CMat q = quadrature_q(m.cutoff);
    const CMat p = quadrature_p(m.cutoff);
    const CMat dev = (q * p - p * q) / Complex(0.0, 1.0) - CMat::Identity(m.cutoff, m.cutoff);
    const CMat adev = matrix_abs(dev).mat();
    const double occupied = (m.init_vec.adjoint() * adev * m.init_vec).value().real();
    if (occupied > 0.05)
        throw std::invalid_argument(
            "scheme_sim: ancilla cutoff too small, [q,p] deviates by " + std::to_string(occupied) +
            " on the occupied subspace");
}

void build_pair_bank(Mode& m, Index grid, double span) {
    const Index g2 = grid * grid;
    const double step = 2.0 * span / static_cast<double>(grid - 1);
    m.cell = step * step / (2.0 * kPi);
    m.proj.resize(m.cutoff, g2);
    m.val1.resize(g2);
    m.val2.resize(g2);
    for (Index iq = 0; iq < grid; ++iq) {
        const double q = -span + step * static_cast<double>(iq);
        for (Index ip = 0; ip < grid; ++ip) {
            const double p = -span + step * static_cast<double>(ip);
            const Index col = iq * grid + ip;
            m.proj.col(col) = gdyne_projector(m.cutoff, q, p, m.v);
            m.val1(col) = q;
            m.val2(col) = p;
        }
    }
}

void build_x_bank(Mode& m, Index bins, double span) {
    const double step = 2.0 * span / static_cast<double>(bins);
    m.cell = 1.0; // width folded into the amplitudes
    m.proj.resize(m.cutoff, bins);
    m.val1.resize(bins);
    m.val2.resize(0);
    for (Index b = 0; b < bins; ++b) {
        const double x = -span + step * (static_cast<double>(b) + 0.5);
        m.proj.col(b) = hermite_point(m.cutoff, x).cast<Complex>() * std::sqrt(step);
        m.val1(b) = x;
    }
}

void build_moment_ops(Mode& m) {
    const auto weighted = [&](const RVec& w) -> CMat {
        return m.cell * (m.proj * w.asDiagonal() * m.proj.adjoint());
    };
    const RVec ones = RVec::Ones(m.proj.cols());
    m.mass = weighted(ones);
    m.o1 = weighted(m.val1);
    m.o11 = weighted(m.val1.cwiseProduct(m.val1));
    if (m.pair) {
        m.o2 = weighted(m.val2);
        m.o22 = weighted(m.val2.cwiseProduct(m.val2));
        m.o12 = weighted(m.val1.cwiseProduct(m.val2));
    }
}

CMat kron_chain(const std::vector<const CMat*>& ops) {
    CMat out = *ops[0];
    for (std::size_t i = 1; i < ops.size(); ++i) out = kron(out, *ops[i]);
    return out;
}

/// Raw readout mean and covariance in the QCLT limit: pair channels carry the
/// swapped collective quadratures plus general-dyne noise, x channels carry
/// gamma t x^(inf) plus the initial q'' noise.
void linear_predictions(const HermitianOperator& rho_true, const MeasurementTarget& tgt,
                        const SchemeConfig& cfg, RVec& mean_raw, RMat& cov_raw) {
    const int n = tgt.n;
    const double gt = cfg.gamma() * cfg.time();
    const double root_m = std::sqrt(static_cast<double>(cfg.M));

    RVec xbar(n);
    for (int j = 0; j < n; ++j)
        xbar(j) = trace_product(rho_true.mat(), tgt.x_ops[j].mat()).real();
    const RVec ybar = tgt.ct.L_inv * xbar;

    RVec scale = RVec::Ones(n);
    for (int c = 2 * tgt.r; c < n; ++c) scale(c) = gt;

    mean_raw = root_m * scale.cwiseProduct(ybar);
    for (int c = 2 * tgt.r; c < n; ++c) mean_raw(c) += cfg.x_init.q_mean;

    const RMat re_y = tgt.ct.L_inv * tgt.rep.gamma_opt.re * tgt.ct.L_inv.transpose();
    cov_raw = scale.asDiagonal() * re_y * scale.asDiagonal();
    for (int j = 0; j < tgt.r; ++j) {
        cov_raw(2 * j, 2 * j) += tgt.gdyne_v(j);
        cov_raw(2 * j + 1, 2 * j + 1) += 0.25 / tgt.gdyne_v(j);
    }
    for (int c = 2 * tgt.r; c < n; ++c) cov_raw(c, c) += cfg.x_init.q_var;
}

void finalize_statistics(RunResult& res, const MeasurementTarget& tgt, Index n_used) {
    const Index s = res.outcomes.rows();
    const int n = tgt.n;
    res.readout_mean = res.outcomes.colwise().mean().transpose();
    RMat centered = res.outcomes.rowwise() - res.readout_mean.transpose();
    res.readout_cov = centered.transpose() * centered / static_cast<double>(s);

    res.V = RMat::Zero(n, n);
    RVec losses(s);
    for (Index i = 0; i < s; ++i) {
        const RVec e = res.beta_hat.row(i).transpose() - res.beta_true;
        res.V += e * e.transpose();
        losses(i) = static_cast<double>(n_used) * e.dot(tgt.weight * e);
    }
    res.V /= static_cast<double>(s);
    res.N_used = n_used;
    res.scaled_error = static_cast<double>(n_used) * (tgt.weight * res.V).trace();
    const double lmean = losses.mean();
    res.scaled_error_se =
        s > 1 ? std::sqrt((losses.array() - lmean).square().sum() / static_cast<double>(s - 1) /
                          static_cast<double>(s))
              : 0.0;
}

} // namespace

double SchemeConfig::kappa() const { return std::sqrt(static_cast<double>(M)) * kappa1; }
double SchemeConfig::gamma() const { return std::sqrt(static_cast<double>(M)) * gamma1; }

double SchemeConfig::time() const {
    if (t > 0.0) return t;
    if (kappa() <= 0.0) throw std::invalid_argument("SchemeConfig: kappa1 must be positive");
    return 0.5 * kPi / kappa();
}

void SchemeConfig::validate() const {
    if (M < 1) throw std::invalid_argument("SchemeConfig: M must be >= 1");
    if (kappa1 < 0.0 || gamma1 < 0.0)
        throw std::invalid_argument("SchemeConfig: coupling rates must be nonnegative");
    if (t <= 0.0 && kappa1 <= 0.0)
        throw std::invalid_argument("SchemeConfig: no interaction time derivable");
    if (quarter_period && t > 0.0 && std::abs(kappa() * t - 0.5 * kPi) > 1e-12)
        throw std::invalid_argument("SchemeConfig: kappa t != pi/2 with quarter_period set");
    for (const AncillaSpec* a : {&pair_init, &x_init}) {
        if (a->cutoff < 4) throw std::invalid_argument("SchemeConfig: ancilla cutoff too small");
        if (a->q_var <= 0.0 || a->p_var <= 0.0)
            throw std::invalid_argument("SchemeConfig: ancilla variances must be positive");
        if (a->q_var * a->p_var < 0.25 * (1.0 - 1e-12))
            throw std::invalid_argument("SchemeConfig: ancilla variances violate Heisenberg");
    }
    if (samples < 1) throw std::invalid_argument("SchemeConfig: samples must be >= 1");
    if (gdyne_grid < 3 || homodyne_bins < 3)
        throw std::invalid_argument("SchemeConfig: measurement grids too coarse");
    if (gdyne_span <= 0.0 || homodyne_span_factor <= 0.0)
        throw std::invalid_argument("SchemeConfig: measurement spans must be positive");
    if (deficit_tol <= 0.0) throw std::invalid_argument("SchemeConfig: deficit_tol must be positive");
    if (checkpoints < 1) throw std::invalid_argument("SchemeConfig: checkpoints must be >= 1");
}

double optimal_gdyne_noise(const RMat& weight, const RMat& l, Index pair) {
    const RVec lq = l.col(2 * pair);
    const RVec lp = l.col(2 * pair + 1);
    const double a = lq.dot(weight * lq);
    const double b = lp.dot(weight * lp);
    const auto cost = [&](double u) { return a * std::exp(u) + 0.25 * b * std::exp(-u); };
    double lo = std::log(1e-6), hi = std::log(1e6);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = cost(x1), f2 = cost(x2);
    for (int it = 0; it < 160; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = cost(x2);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

MeasurementTarget build_target(const FiniteDimModel& model_check, const RMat& weight,
                               const SchemeConfig& cfg, const HnOptions& hn_opts) {
    cfg.validate();
    model_check.validate();
    MeasurementTarget tgt;
    tgt.model = model_check;
    tgt.weight = weight;
    tgt.rep = hn_bound(model_check, weight, hn_opts);
    tgt.ct = canonical_transform(tgt.rep.gamma_opt.im);
    tgt.x_ops = x_observables(InfluenceVector{tgt.rep.delta_opt}, model_check.beta);
    tgt.y_ops = y_observables(tgt.x_ops, tgt.ct);
    tgt.n = model_check.n;
    tgt.r = tgt.ct.r;

    tgt.gdyne_v.resize(tgt.r);
    for (int j = 0; j < tgt.r; ++j)
        tgt.gdyne_v(j) =
            cfg.gdyne_noise > 0.0 ? cfg.gdyne_noise : optimal_gdyne_noise(weight, tgt.ct.L, j);

    double err = (weight * tgt.rep.gamma_opt.re).trace();
    const RMat gw = tgt.ct.L.transpose() * weight * tgt.ct.L;
    for (int j = 0; j < tgt.r; ++j)
        err += gw(2 * j, 2 * j) * tgt.gdyne_v(j) + 0.25 * gw(2 * j + 1, 2 * j + 1) / tgt.gdyne_v(j);
    const double gt = cfg.gamma() * cfg.time();
    if (gt > 0.0)
        for (int c = 2 * tgt.r; c < tgt.n; ++c) err += gw(c, c) * cfg.x_init.q_var / (gt * gt);
    tgt.predicted_scaled_error = err;
    return tgt;
}

RVec estimator(const RVec& raw_outcomes, const MeasurementTarget& tgt, const SchemeConfig& cfg) {
    if (raw_outcomes.size() != tgt.n)
        throw std::invalid_argument("estimator: readout vector has wrong channel count");
    const double gt = cfg.gamma() * cfg.time();
    RVec y = raw_outcomes;
    for (int c = 2 * tgt.r; c < tgt.n; ++c) y(c) = gt > 0.0 ? raw_outcomes(c) / gt : 0.0;
    return tgt.ct.L * y / std::sqrt(static_cast<double>(cfg.M));
}

HermitianOperator build_hamiltonian(const MeasurementTarget& tgt, const SchemeConfig& cfg,
                                    Index max_dim) {
    cfg.validate();
    const Index d = tgt.model.d;
    const int nx = tgt.n - 2 * tgt.r;
    Index dim = 1;
    for (Index i = 0; i < cfg.M; ++i) {
        dim *= d;
        if (dim > max_dim) throw std::invalid_argument("build_hamiltonian: dimension budget exceeded");
    }
    const Index sys_dim = dim;
    std::vector<Index> cutoffs;
    for (int j = 0; j < tgt.r; ++j) cutoffs.push_back(cfg.pair_init.cutoff);
    for (int i = 0; i < nx; ++i) cutoffs.push_back(cfg.x_init.cutoff);
    for (Index c : cutoffs) {
        dim *= c;
        if (dim > max_dim) throw std::invalid_argument("build_hamiltonian: dimension budget exceeded");
    }
    if (tgt.r > 0) check_mode_commutator(make_mode(true, cfg.pair_init, 0.5));
    if (nx > 0) check_mode_commutator(make_mode(false, cfg.x_init, 0.5));

    const auto embed = [&](const CMat& op, std::size_t mode) -> CMat {
        CMat out = CMat::Identity(sys_dim, sys_dim);
        for (std::size_t m = 0; m < cutoffs.size(); ++m)
            out = kron(out, m == mode ? op : CMat::Identity(cutoffs[m], cutoffs[m]));
        return out;
    };
    const auto sys_embed = [&](const CMat& op) -> CMat {
        CMat out = op;
        for (Index c : cutoffs) out = kron(out, CMat::Identity(c, c));
        return out;
    };

    CMat h = CMat::Zero(dim, dim);
    const double kap = cfg.kappa(), gam = cfg.gamma();
    for (int j = 0; j < tgt.r; ++j) {
        const CMat qm = collective_embed(tgt.y_ops[2 * j], static_cast<int>(cfg.M), sys_dim).mat();
        const CMat pm = collective_embed(tgt.y_ops[2 * j + 1], static_cast<int>(cfg.M), sys_dim).mat();
        h += kap * (sys_embed(qm) * embed(quadrature_p(cutoffs[j]), j) -
                    sys_embed(pm) * embed(quadrature_q(cutoffs[j]), j));
    }
    for (int i = 0; i < nx; ++i) {
        const CMat xm =
            collective_embed(tgt.y_ops[2 * tgt.r + i], static_cast<int>(cfg.M), sys_dim).mat();
        h += gam * sys_embed(xm) * embed(quadrature_p(cutoffs[tgt.r + i]), tgt.r + i);
    }
    return HermitianOperator(h);
}

RunResult linearized_simulate(const HermitianOperator& rho_true, const RVec& beta_true,
                              const MeasurementTarget& tgt, const SchemeConfig& cfg) {
    cfg.validate();
    const int n = tgt.n;
    RunResult res;
    res.beta_true = beta_true;
    res.kappa_t = cfg.kappa() * cfg.time();
    res.gamma_t = cfg.gamma() * cfg.time();

    linear_predictions(rho_true, tgt, cfg, res.model_mean, res.model_cov);
    Eigen::LLT<RMat> llt(res.model_cov);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("linearized_simulate: readout covariance not positive definite");
    const RMat chol = llt.matrixL();

    const Index s = cfg.samples;
    res.outcomes.resize(s, n);
    res.beta_hat.resize(s, n);
    for (Index i = 0; i < s; ++i) {
        RngStream rng(cfg.seed, static_cast<uint64_t>(i));
        RVec z(n);
        for (int c = 0; c < n; ++c) z(c) = rng.normal();
        const RVec raw = res.model_mean + chol * z;
        res.outcomes.row(i) = raw.transpose();
        res.beta_hat.row(i) = estimator(raw, tgt, cfg).transpose();
    }
    finalize_statistics(res, tgt, cfg.M);
    return res;
}

RunResult exact_evolve_and_measure(const HermitianOperator& rho_true, const RVec& beta_true,
                                   const MeasurementTarget& tgt, const SchemeConfig& cfg) {
    cfg.validate();
    if (cfg.M > cfg.exact_m_cap)
        throw std::invalid_argument("exact_evolve_and_measure: M exceeds the exact-engine cap");
    const Index d = tgt.model.d;
    const int n = tgt.n;
    const int r = tgt.r;
    const int nx = n - 2 * r;
    const double tfin = cfg.time();
    const double gt = cfg.gamma() * tfin;

    Index sys_dim = 1;
    for (Index i = 0; i < cfg.M; ++i) {
        sys_dim *= d;
        if (sys_dim > cfg.exact_dim_budget)
            throw std::invalid_argument("exact_evolve_and_measure: dimension budget exceeded");
    }

    // Ancilla modes: pair readouts first, then the q'' homodyne modes.
    std::vector<Mode> modes;
    for (int j = 0; j < r; ++j) modes.push_back(make_mode(true, cfg.pair_init, tgt.gdyne_v(j)));
    for (int i = 0; i < nx; ++i) modes.push_back(make_mode(false, cfg.x_init, 0.5));
    const int nmodes = static_cast<int>(modes.size());

    Index anc_dim = 1;
    double init_deficit = 0.0;
    for (auto& m : modes) {
        check_mode_commutator(m);
        anc_dim *= m.cutoff;
        init_deficit += m.init_deficit;
    }
    const Index dim = sys_dim * anc_dim;
    if (dim > cfg.exact_dim_budget)
        throw std::invalid_argument("exact_evolve_and_measure: dimension budget exceeded");
    if (init_deficit > cfg.deficit_tol)
        throw std::runtime_error("exact_evolve_and_measure: ancilla truncation deficit " +
                                 std::to_string(init_deficit) + " above tolerance");
    for (const auto& m : modes)
        if (std::abs(m.init.q_var * m.init.p_var - 0.25) > 1e-9)
            throw std::invalid_argument(
                "exact_evolve_and_measure: only minimum-uncertainty ancilla inputs supported");

    // Collective system observables and the interaction Hamiltonian, sparse.
    std::vector<CMat> ysys(n);
    for (int c = 0; c < n; ++c)
        ysys[c] = collective_embed(tgt.y_ops[c], static_cast<int>(cfg.M), sys_dim).mat();

    std::vector<SpMat> anc_eye;
    for (const auto& m : modes) anc_eye.push_back(sp_identity(m.cutoff));
    const auto full_term = [&](const CMat& sys_op, int mode, const CMat& mode_op) -> SpMat {
        SpMat term = to_sparse(sys_op);
        for (int m = 0; m < nmodes; ++m)
            term = sp_kron(term, m == mode ? to_sparse(mode_op) : anc_eye[m]);
        return term;
    };
    SpMat h(dim, dim);
    const double kap = cfg.kappa(), gam = cfg.gamma();
    for (int j = 0; j < r; ++j) {
        h = h + SpMat(kap * full_term(ysys[2 * j], j, quadrature_p(modes[j].cutoff)));
        h = h - SpMat(kap * full_term(ysys[2 * j + 1], j, quadrature_q(modes[j].cutoff)));
    }
    for (int i = 0; i < nx; ++i)
        h = h + SpMat(gam * full_term(ysys[2 * r + i], r + i, quadrature_p(modes[r + i].cutoff)));
    h.makeCompressed();

    const Propagator prop = Propagator::make(h, cfg.dense_eig_dim);

    // Branch decomposition of rho^(x M): one representative per eigenvalue
    // multiset, weighted by multiplicity (H and the trace over the object
    // space are permutation invariant).
    const auto eig = hermitian_eig(rho_true);
    std::vector<Index> kept;
    for (Index i = 0; i < d; ++i)
        if (eig.eigenvalues(i) > 1e-14) kept.push_back(i);

    CVec anc_init = modes[0].init_vec;
    for (int m = 1; m < nmodes; ++m) {
        CVec nxt(anc_init.size() * modes[m].cutoff);
        for (Index i = 0; i < anc_init.size(); ++i)
            nxt.segment(i * modes[m].cutoff, modes[m].cutoff) = anc_init(i) * modes[m].init_vec;
        anc_init = nxt;
    }

    std::vector<Index> stride(nmodes);
    {
        Index acc = 1;
        for (int m = nmodes - 1; m >= 0; --m) {
            stride[m] = acc;
            acc *= modes[m].cutoff;
        }
    }

    CMat rho_anc = CMat::Zero(anc_dim, anc_dim);
    double max_checkpoint_occ = 0.0;
    std::vector<double> occ_at(static_cast<std::size_t>(cfg.checkpoints), 0.0);

    std::vector<Index> multiset(cfg.M, 0);
    double fact_m = 1.0;
    for (Index i = 2; i <= cfg.M; ++i) fact_m *= static_cast<double>(i);

    const std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t pos,
                                                                   std::size_t start) {
        if (pos == multiset.size()) {
            double weight = fact_m;
            std::size_t i = 0;
            while (i < multiset.size()) {
                std::size_t j = i;
                double cnt = 0.0;
                while (j < multiset.size() && multiset[j] == multiset[i]) {
                    cnt += 1.0;
                    weight /= cnt;
                    ++j;
                }
                i = j;
            }
            for (Index b : multiset) weight *= eig.eigenvalues(b);
            if (weight < 1e-300) return;

            CVec vsys = CVec::Ones(1);
            for (Index b : multiset) {
                CVec nxt(vsys.size() * d);
                const CVec col = eig.eigenvectors.col(b);
                for (Index ii = 0; ii < vsys.size(); ++ii)
                    nxt.segment(ii * d, d) = vsys(ii) * col;
                vsys = nxt;
            }
            CVec psi(dim);
            for (Index ii = 0; ii < sys_dim; ++ii)
                psi.segment(ii * anc_dim, anc_dim) = vsys(ii) * anc_init;

            const double dt = tfin / static_cast<double>(cfg.checkpoints);
            for (Index cp = 0; cp < cfg.checkpoints; ++cp) {
                psi = prop.apply(psi, dt);
                double occ = 0.0;
                for (Index idx = 0; idx < dim; ++idx) {
                    const Index anc = idx % anc_dim;
                    const double a2 = std::norm(psi(idx));
                    if (a2 == 0.0) continue;
                    for (int m = 0; m < nmodes; ++m) {
                        const Index lvl = (anc / stride[m]) % modes[m].cutoff;
                        if (lvl >= modes[m].cutoff - 2) occ += a2;
                    }
                }
                occ_at[static_cast<std::size_t>(cp)] += weight * occ;
            }
            Eigen::Map<const CMat> amap(psi.data(), anc_dim, sys_dim);
            rho_anc += weight * (amap * amap.adjoint());
            return;
        }
        for (std::size_t b = start; b < kept.size(); ++b) {
            multiset[pos] = kept[b];
            walk(pos + 1, b);
        }
    };
    walk(0, 0);

    for (double occ : occ_at) max_checkpoint_occ = std::max(max_checkpoint_occ, occ);
    if (init_deficit + max_checkpoint_occ > cfg.deficit_tol)
        throw std::runtime_error("exact_evolve_and_measure: truncation deficit " +
                                 std::to_string(init_deficit + max_checkpoint_occ) +
                                 " at a time checkpoint");

    const double tr = rho_anc.trace().real();
    if (std::abs(tr - 1.0) > 1e-10)
        throw std::runtime_error("exact_evolve_and_measure: evolution lost trace normalization");
    if (anc_dim <= 2048) {
        Eigen::SelfAdjointEigenSolver<CMat> es(rho_anc);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw std::runtime_error("exact_evolve_and_measure: ancilla state lost positivity");
    }

    // Measurement banks.
    double max_x = 1.0;
    for (int c = 2 * r; c < n; ++c) {
        const auto xe = hermitian_eig(HermitianOperator(ysys[c]));
        max_x = std::max({max_x, std::abs(xe.eigenvalues(0)),
                          std::abs(xe.eigenvalues(xe.eigenvalues.size() - 1))});
    }
    const double x_span =
        std::max(cfg.homodyne_span_factor * gt * max_x,
                 6.0 * std::sqrt(cfg.x_init.q_var) + 6.0 * std::abs(cfg.x_init.q_mean) + 1.0);
    for (int m = 0; m < nmodes; ++m) {
        if (modes[m].pair)
            build_pair_bank(modes[m], cfg.gdyne_grid, cfg.gdyne_span);
        else
            build_x_bank(modes[m], cfg.homodyne_bins, x_span);
        build_moment_ops(modes[m]);
    }

    // Exact grid moments via the per-mode moment operators.
    const auto selected_trace = [&](const std::map<int, const CMat*>& sel) -> double {
        std::vector<const CMat*> ops;
        for (int m = 0; m < nmodes; ++m) {
            auto it = sel.find(m);
            ops.push_back(it == sel.end() ? &modes[m].mass : it->second);
        }
        return trace_product(rho_anc, kron_chain(ops)).real();
    };
    const double mass_tot = selected_trace({});
    const double grid_deficit = 1.0 - mass_tot;
    if (grid_deficit > cfg.deficit_tol)
        throw std::runtime_error("exact_evolve_and_measure: grid mass deficit " +
                                 std::to_string(grid_deficit) + " above tolerance");

    const auto channel_mode = [&](int c) { return c < 2 * r ? c / 2 : r + (c - 2 * r); };
    const auto channel_op1 = [&](int c) -> const CMat* {
        const Mode& m = modes[channel_mode(c)];
        if (!m.pair) return &m.o1;
        return c % 2 == 0 ? &m.o1 : &m.o2;
    };
    const auto channel_op2 = [&](int c) -> const CMat* {
        const Mode& m = modes[channel_mode(c)];
        if (!m.pair) return &m.o11;
        return c % 2 == 0 ? &m.o11 : &m.o22;
    };

    RVec gmean(n);
    for (int c = 0; c < n; ++c) gmean(c) = selected_trace({{channel_mode(c), channel_op1(c)}}) / mass_tot;
    RMat gsec(n, n);
    for (int c1 = 0; c1 < n; ++c1)
        for (int c2 = c1; c2 < n; ++c2) {
            double v;
            if (c1 == c2)
                v = selected_trace({{channel_mode(c1), channel_op2(c1)}});
            else if (channel_mode(c1) == channel_mode(c2))
                v = selected_trace({{channel_mode(c1), &modes[channel_mode(c1)].o12}});
            else
                v = selected_trace(
                    {{channel_mode(c1), channel_op1(c1)}, {channel_mode(c2), channel_op1(c2)}});
            gsec(c1, c2) = gsec(c2, c1) = v / mass_tot;
        }

    RunResult res;
    res.beta_true = beta_true;
    res.kappa_t = cfg.kappa() * tfin;
    res.gamma_t = gt;
    res.truncation_deficit = init_deficit + max_checkpoint_occ;
    res.grid_deficit = grid_deficit;
    res.grid_mean = gmean;
    res.grid_cov = gsec - gmean * gmean.transpose();
    linear_predictions(rho_true, tgt, cfg, res.model_mean, res.model_cov);

    // Sequential sampling: condition mode by mode, marginalizing the not yet
    // measured modes through their mass operators; conditionals cached per
    // outcome prefix.
    std::vector<CMat> mass_tail(nmodes);
    {
        CMat tail = CMat::Identity(1, 1);
        for (int m = nmodes - 1; m >= 0; --m) {
            mass_tail[m] = tail;
            tail = kron(modes[m].mass, tail);
        }
    }
    struct NodeDist {
        RVec cumsum;
        double total = 0.0;
    };
    std::map<std::vector<int>, NodeDist> dist_cache;
    std::map<std::vector<int>, CMat> cond_cache;
    cond_cache[{}] = rho_anc;

    const auto mode_distribution = [&](const CMat& cond, int m) -> RVec {
        const Index cm = modes[m].cutoff;
        const Index tdim = cond.rows() / cm;
        CMat red(cm, cm);
        for (Index a = 0; a < cm; ++a)
            for (Index b = 0; b < cm; ++b)
                red(a, b) =
                    trace_product(cond.block(a * tdim, b * tdim, tdim, tdim), mass_tail[m]);
        const CMat w = red * modes[m].proj;
        RVec p(modes[m].proj.cols());
        for (Index o = 0; o < p.size(); ++o)
            p(o) = std::max(0.0, (modes[m].proj.col(o).adjoint() * w.col(o)).value().real()) *
                   modes[m].cell;
        return p;
    };
    const auto condition = [&](const CMat& cond, int m, Index o) -> CMat {
        const Index cm = modes[m].cutoff;
        const Index tdim = cond.rows() / cm;
        const CVec z = modes[m].proj.col(o);
        CMat out = CMat::Zero(tdim, tdim);
        for (Index a = 0; a < cm; ++a)
            for (Index b = 0; b < cm; ++b)
                out += std::conj(z(a)) * z(b) * cond.block(a * tdim, b * tdim, tdim, tdim);
        const double sc = out.trace().real();
        if (sc > 1e-300) out /= sc;
        return out;
    };

    const Index s = cfg.samples;
    res.outcomes.resize(s, n);
    res.beta_hat.resize(s, n);
    for (Index i = 0; i < s; ++i) {
        RngStream rng(cfg.seed, static_cast<uint64_t>(i));
        std::vector<int> prefix;
        RVec raw(n);
        int ch = 0;
        for (int m = 0; m < nmodes; ++m) {
            auto dit = dist_cache.find(prefix);
            if (dit == dist_cache.end()) {
                const RVec p = mode_distribution(cond_cache.at(prefix), m);
                NodeDist nd;
                nd.cumsum.resize(p.size());
                double acc = 0.0;
                for (Index o = 0; o < p.size(); ++o) {
                    acc += p(o);
                    nd.cumsum(o) = acc;
                }
                nd.total = acc;
                dit = dist_cache.emplace(prefix, std::move(nd)).first;
            }
            const NodeDist& nd = dit->second;
            const double u = rng.uniform() * nd.total;
            const double* begin = nd.cumsum.data();
            const double* end = begin + nd.cumsum.size();
            Index o = static_cast<Index>(std::upper_bound(begin, end, u) - begin);
            if (o >= nd.cumsum.size()) o = nd.cumsum.size() - 1;

            if (modes[m].pair) {
                raw(ch++) = modes[m].val1(o);
                raw(ch++) = modes[m].val2(o);
            } else {
                raw(ch++) = modes[m].val1(o);
            }
            prefix.push_back(static_cast<int>(o));
            if (m + 1 < nmodes && cond_cache.find(prefix) == cond_cache.end()) {
                std::vector<int> parent(prefix.begin(), prefix.end() - 1);
                cond_cache[prefix] = condition(cond_cache.at(parent), m, o);
            }
        }
        res.outcomes.row(i) = raw.transpose();
        res.beta_hat.row(i) = estimator(raw, tgt, cfg).transpose();
    }
    finalize_statistics(res, tgt, cfg.M);
    return res;
}

} // namespace qmpe
