#include "qmpe/bounds.hpp"

#include <cmath>
#include <sstream>

#include "qmpe/operator_core.hpp"
#include "qmpe/rng.hpp"

namespace qmpe {

Complex trace_product(const CMat& a, const CMat& b) {
    return (a.transpose().cwiseProduct(b)).sum();
}

RMat sym_sqrt(const RMat& w) {
    if (w.rows() != w.cols() || (w - w.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("sym_sqrt: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<RMat> es(w);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw std::invalid_argument("sym_sqrt: matrix not positive definite");
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

void BoundReport::validate(double slack) const {
    if (!(hel <= hn + slack && hn <= c_at_hel + slack && c_at_hel <= 2.0 * hel + slack)) {
        std::ostringstream msg;
        msg << "BoundReport: sandwich violated: hel = " << hel << ", hn = " << hn
            << ", c_at_hel = " << c_at_hel;
        throw std::runtime_error(msg.str());
    }
    sym_sqrt(weight); // throws unless symmetric positive definite
}

namespace {

/// Gamma(C) = gamma0 + cross C^T + C cross^dag + C gram C^T for real n x A
/// coefficients C; gram is Hermitian PSD, so Gamma(C) stays Hermitian and the
/// objective below is convex in C.
struct QuadraticGammaForm {
    CMat gamma0; // n x n
    CMat cross;  // n x A
    CMat gram;   // A x A
};

struct CEval {
    double value = 0.0;
    RMat grad;
};

CEval eval_c(const QuadraticGammaForm& f, const RMat& w, const RMat& sqrt_w, const RMat& c,
             CMat* gamma_out = nullptr) {
    const CMat ct = c.cast<Complex>().transpose();
    const CMat h = f.cross.adjoint() + f.gram * ct; // A x n
    CMat gamma = f.gamma0 + f.cross * ct + c.cast<Complex>() * h;
    gamma = 0.5 * (gamma + gamma.adjoint().eval());
    if (gamma_out) *gamma_out = gamma;

    const RMat re = gamma.real();
    const RMat im = gamma.imag();
    const RMat m = sqrt_w * im * sqrt_w;
    Eigen::JacobiSVD<RMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);

    CEval out;
    out.value = (w * re).trace() + svd.singularValues().sum();
    const RMat polar = svd.matrixU() * svd.matrixV().transpose();
    const RMat gt = sqrt_w * polar * sqrt_w;
    const RMat h_re = h.real(), h_im = h.imag();
    out.grad = 2.0 * w * h_re.transpose() + (gt - gt.transpose()) * h_im.transpose();
    return out;
}

struct MinimizeResult {
    double best_value = 0.0;
    RMat best_c;
    OptimizerDiagnostics diag;
};

MinimizeResult minimize_c(const QuadraticGammaForm& form, const RMat& w, Index null_dim,
                          double c_at_base, const HnOptions& opts) {
    const Index n = form.gamma0.rows();
    const RMat sqrt_w = sym_sqrt(w);

    MinimizeResult res;
    res.best_c = RMat::Zero(n, null_dim);
    res.best_value = c_at_base;
    res.diag.null_dim = static_cast<int>(null_dim);
    res.diag.starts = 1 + std::max(0, opts.starts - 1);
    if (null_dim == 0) {
        res.diag.converged = true;
        return res;
    }

    const double step0 = opts.step0_scale * c_at_base;
    res.diag.step0 = step0;
    const double value_scale = std::max(std::abs(c_at_base), 1e-12);

    const int tail_start = opts.iterations - std::max(1, opts.iterations / 5);
    double best_at_tail_start = 0.0;

    for (int start = 0; start < res.diag.starts; ++start) {
        RMat c = RMat::Zero(n, null_dim);
        if (start > 0) {
            RngStream rng(opts.seed, static_cast<std::uint64_t>(start));
            for (Index i = 0; i < n; ++i)
                for (Index a = 0; a < null_dim; ++a) c(i, a) = step0 * rng.normal();
        }
        double start_best = eval_c(form, w, sqrt_w, c).value;
        RMat start_best_c = c;
        double tail_ref = start_best;

        for (int it = 1; it <= opts.iterations; ++it) {
            const CEval ev = eval_c(form, w, sqrt_w, c);
            if (ev.value < start_best) {
                start_best = ev.value;
                start_best_c = c;
            }
            if (it == tail_start) tail_ref = start_best;
            const double gnorm = ev.grad.norm();
            res.diag.final_subgradient_norm = gnorm;
            if (gnorm < 1e-13 * value_scale) {
                res.diag.iterations += it;
                break; // smooth stationary point: exact minimum of the convex map
            }
            c -= (step0 / std::sqrt(static_cast<double>(it))) * ev.grad / gnorm;
            if (it == opts.iterations) res.diag.iterations += it;
        }
        if (start == 0) best_at_tail_start = tail_ref;
        if (start_best < res.best_value) {
            res.best_value = start_best;
            res.best_c = start_best_c;
        }
    }

    res.diag.plateau_improvement = std::max(0.0, best_at_tail_start - res.best_value);
    res.diag.converged =
        res.diag.plateau_improvement <= std::max(1e-10, opts.plateau_rel * value_scale) ||
        res.diag.final_subgradient_norm < 1e-13 * value_scale;
    if (opts.require_convergence && !res.diag.converged) {
        std::ostringstream msg;
        msg << "hn optimizer did not plateau: improvement over final 20% = "
            << res.diag.plateau_improvement
            << ", subgradient norm = " << res.diag.final_subgradient_norm
            << ", iterations = " << res.diag.iterations;
        throw std::runtime_error(msg.str());
    }
    return res;
}

/// Hermitian operator basis: I/sqrt(d) followed by the Gell-Mann set.
std::vector<CMat> hermitian_basis(Index d) {
    std::vector<CMat> basis;
    basis.reserve(static_cast<size_t>(d * d));
    basis.push_back(CMat::Identity(d, d) / std::sqrt(static_cast<double>(d)));
    for (auto& e : gellmann_basis(d)) basis.push_back(std::move(e));
    return basis;
}

/// Orthonormal kernel of the real constraint matrix rows[c] . coords = 0.
std::vector<CMat> kernel_basis(const std::vector<CMat>& coord_ops,
                               const std::vector<CMat>& constraint_ops) {
    const Index dim = static_cast<Index>(coord_ops.size());
    RMat k(static_cast<Index>(constraint_ops.size()), dim);
    for (Index r = 0; r < k.rows(); ++r)
        for (Index a = 0; a < dim; ++a)
            k(r, a) = trace_product(constraint_ops[static_cast<size_t>(r)],
                                    coord_ops[static_cast<size_t>(a)])
                          .real();
    Eigen::JacobiSVD<RMat> svd(k, Eigen::ComputeFullV);
    const double tol = 1e-10 * std::max(svd.singularValues().maxCoeff(), 1e-30);
    Index rank = 0;
    for (Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol) ++rank;
    std::vector<CMat> out;
    for (Index a = rank; a < dim; ++a) {
        CMat t = CMat::Zero(coord_ops[0].rows(), coord_ops[0].cols());
        for (Index b = 0; b < dim; ++b) t += svd.matrixV()(b, a) * coord_ops[static_cast<size_t>(b)];
        out.push_back(0.5 * (t + t.adjoint().eval()));
    }
    return out;
}

RMat pseudo_inverse(const RMat& f, double rel_tol) {
    Eigen::JacobiSVD<RMat> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double tol = rel_tol * std::max(svd.singularValues().maxCoeff(), 1e-300);
    RVec inv = svd.singularValues();
    for (Index i = 0; i < inv.size(); ++i) inv(i) = inv(i) > tol ? 1.0 / inv(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

RMat influence_coefficients(const RMat& b, const RMat& f, double pinv_tol) {
    const RMat fpinv = pseudo_inverse(f, pinv_tol);
    const RMat a = b * fpinv; // n x k
    const double resid = (a * f - b).cwiseAbs().maxCoeff();
    if (resid > 1e-8 * std::max(1.0, b.cwiseAbs().maxCoeff()))
        throw std::runtime_error(
            "efficient influence: target Jacobian outside the row space of the "
            "information matrix (residual " +
            std::to_string(resid) + ")");
    return a;
}

GammaMatrix make_gamma(const CMat& gamma_raw, const std::string& label) {
    GammaMatrix g;
    g.gamma = 0.5 * (gamma_raw + gamma_raw.adjoint().eval());
    if ((gamma_raw - g.gamma).cwiseAbs().maxCoeff() >
        1e-10 * std::max(1.0, g.gamma.cwiseAbs().maxCoeff()))
        throw std::runtime_error(label + ": Gamma not Hermitian");
    g.re = g.gamma.real();
    g.im = g.gamma.imag();
    return g;
}

} // namespace

// finite-dimensional path -------------------------------------------------

std::vector<HermitianOperator> compute_slds(const FiniteDimModel& model) {
    std::vector<HermitianOperator> slds;
    slds.reserve(model.drho.size());
    for (const auto& dr : model.drho) {
        auto s = lyapunov_solve(model.rho, dr);
        if (std::abs(expectation(model.rho.mat(), s.mat())) > 1e-10)
            throw std::runtime_error("compute_slds: tr(rho S) != 0");
        slds.push_back(std::move(s));
    }
    return slds;
}

RMat qfi_matrix(const FiniteDimModel& model, const std::vector<HermitianOperator>& slds) {
    const Index k = static_cast<Index>(slds.size());
    RMat f(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index l = 0; l <= i; ++l) {
            const auto prod = jordan_product(slds[static_cast<size_t>(i)],
                                             slds[static_cast<size_t>(l)]);
            f(i, l) = expectation(model.rho.mat(), prod.mat());
            f(l, i) = f(i, l);
        }
    return f;
}

InfluenceVector efficient_influence(const FiniteDimModel& model) {
    const auto slds = compute_slds(model);
    const RMat f = qfi_matrix(model, slds);
    const RMat a = influence_coefficients(model.jacobian, f, 1e-10);

    InfluenceVector iv;
    for (int j = 0; j < model.n; ++j) {
        CMat d = CMat::Zero(model.d, model.d);
        for (int i = 0; i < model.k; ++i) d += a(j, i) * slds[static_cast<size_t>(i)].mat();
        iv.delta.push_back(HermitianOperator::symmetrized(d));
    }
    validate_influence(model, iv);
    return iv;
}

void validate_influence(const FiniteDimModel& model, const InfluenceVector& iv,
                        double trace_tol, double constraint_tol) {
    if (static_cast<int>(iv.delta.size()) != model.n)
        throw std::invalid_argument("influence: wrong component count");
    for (int j = 0; j < model.n; ++j) {
        const auto& dj = iv.delta[static_cast<size_t>(j)].mat();
        if (std::abs(expectation(model.rho.mat(), dj)) > trace_tol)
            throw std::runtime_error("influence: tr(rho delta_" + std::to_string(j) +
                                     ") != 0");
        for (int i = 0; i < model.k; ++i) {
            const double got =
                trace_product(model.drho[static_cast<size_t>(i)].mat(), dj).real();
            if (std::abs(got - model.jacobian(j, i)) > constraint_tol)
                throw std::runtime_error("influence: tr(drho_" + std::to_string(i) +
                                         " delta_" + std::to_string(j) + ") != B_ji");
        }
    }
}

GammaMatrix gamma_matrix(const HermitianOperator& rho, const InfluenceVector& iv) {
    const Index n = static_cast<Index>(iv.delta.size());
    CMat gamma(n, n);
    RMat re(n, n), im(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k) {
            const CMat prod = iv.delta[static_cast<size_t>(j)].mat() *
                              iv.delta[static_cast<size_t>(k)].mat();
            gamma(j, k) = trace_product(rho.mat(), prod);
            // independent decompositions: Jordan product and commutator
            const CMat prod_rev = iv.delta[static_cast<size_t>(k)].mat() *
                                  iv.delta[static_cast<size_t>(j)].mat();
            re(j, k) = (0.5 * trace_product(rho.mat(), (prod + prod_rev).eval())).real();
            im(j, k) = (0.5 * trace_product(rho.mat(), (prod - prod_rev).eval())).imag();
        }
    GammaMatrix g = make_gamma(gamma, "gamma_matrix");
    if ((g.re - re).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, re.cwiseAbs().maxCoeff()) ||
        (g.im - im).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, re.cwiseAbs().maxCoeff()))
        throw std::runtime_error("gamma_matrix: decomposition cross-check failed");
    g.re = re;
    g.im = 0.5 * (im - im.transpose().eval());
    return g;
}

double c_functional(const GammaMatrix& gamma, const RMat& w) {
    const RMat sqrt_w = sym_sqrt(w);
    const RMat m = sqrt_w * gamma.im * sqrt_w;
    Eigen::JacobiSVD<RMat> svd(m);
    return (w * gamma.re).trace() + svd.singularValues().sum();
}

double hel_bound(const FiniteDimModel& model, const RMat& w) {
    const auto slds = compute_slds(model);
    const RMat f = qfi_matrix(model, slds);
    const RMat a = influence_coefficients(model.jacobian, f, 1e-10);
    return (w * a * f * a.transpose()).trace();
}

std::vector<HermitianOperator> null_space_basis(const FiniteDimModel& model) {
    std::vector<CMat> constraints;
    constraints.push_back(model.rho.mat());
    for (const auto& dr : model.drho) constraints.push_back(dr.mat());
    std::vector<HermitianOperator> out;
    for (auto& t : kernel_basis(hermitian_basis(model.d), constraints))
        out.push_back(HermitianOperator::symmetrized(t));
    return out;
}

namespace {

QuadraticGammaForm build_form(const CMat& metric_left, const CMat& metric_right,
                              const std::vector<CMat>& base, const std::vector<CMat>& ts) {
    // Gamma entries tr[metric_left X metric_right Y]; finite-dim uses
    // metric_left = rho, metric_right = I; thermal uses Y, (I+Y).
    const Index n = static_cast<Index>(base.size());
    const Index a_dim = static_cast<Index>(ts.size());
    std::vector<CMat> left_base(base.size()), left_ts(ts.size());
    for (size_t i = 0; i < base.size(); ++i) left_base[i] = metric_left * base[i] * metric_right;
    for (size_t i = 0; i < ts.size(); ++i) left_ts[i] = metric_left * ts[i] * metric_right;

    QuadraticGammaForm f;
    f.gamma0.resize(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k)
            f.gamma0(j, k) = trace_product(left_base[static_cast<size_t>(j)],
                                           base[static_cast<size_t>(k)]);
    f.cross.resize(n, a_dim);
    for (Index j = 0; j < n; ++j)
        for (Index b = 0; b < a_dim; ++b)
            f.cross(j, b) = trace_product(left_base[static_cast<size_t>(j)],
                                          ts[static_cast<size_t>(b)]);
    f.gram.resize(a_dim, a_dim);
    for (Index a = 0; a < a_dim; ++a)
        for (Index b = 0; b < a_dim; ++b)
            f.gram(a, b) = trace_product(left_ts[static_cast<size_t>(a)],
                                         ts[static_cast<size_t>(b)]);
    return f;
}

} // namespace

BoundReport hn_bound(const FiniteDimModel& model, const RMat& w, const HnOptions& opts) {
    if (w.rows() != model.n || w.cols() != model.n)
        throw std::invalid_argument("hn_bound: weight shape mismatch");
    BoundReport rep;
    rep.weight = w;

    const auto slds = compute_slds(model);
    const RMat f = qfi_matrix(model, slds);
    const RMat a = influence_coefficients(model.jacobian, f, opts.pinv_tol);
    rep.hel = (w * a * f * a.transpose()).trace();

    InfluenceVector iv;
    for (int j = 0; j < model.n; ++j) {
        CMat d = CMat::Zero(model.d, model.d);
        for (int i = 0; i < model.k; ++i) d += a(j, i) * slds[static_cast<size_t>(i)].mat();
        iv.delta.push_back(HermitianOperator::symmetrized(d));
    }
    validate_influence(model, iv);
    rep.delta_hel = iv.delta;
    rep.gamma_hel = gamma_matrix(model.rho, iv);
    rep.c_at_hel = c_functional(rep.gamma_hel, w);

    const auto ts = null_space_basis(model);
    std::vector<CMat> base_mats, t_mats;
    for (const auto& dh : iv.delta) base_mats.push_back(dh.mat());
    for (const auto& t : ts) t_mats.push_back(t.mat());
    const auto form =
        build_form(model.rho.mat(), CMat::Identity(model.d, model.d), base_mats, t_mats);

    auto mres = minimize_c(form, w, static_cast<Index>(ts.size()), rep.c_at_hel, opts);
    rep.hn = mres.best_value;
    rep.diag = mres.diag;

    InfluenceVector iv_opt;
    for (int j = 0; j < model.n; ++j) {
        CMat d = iv.delta[static_cast<size_t>(j)].mat();
        for (size_t t = 0; t < ts.size(); ++t)
            d += mres.best_c(j, static_cast<Index>(t)) * ts[t].mat();
        iv_opt.delta.push_back(HermitianOperator::symmetrized(d));
    }
    validate_influence(model, iv_opt);
    rep.delta_opt = iv_opt.delta;
    rep.gamma_opt = gamma_matrix(model.rho, iv_opt);

    double trace_res = 0.0, constraint_res = 0.0;
    for (int j = 0; j < model.n; ++j) {
        trace_res = std::max(trace_res, std::abs(expectation(model.rho.mat(),
                                                             iv_opt.delta[j].mat())));
        for (int i = 0; i < model.k; ++i)
            constraint_res = std::max(
                constraint_res,
                std::abs(trace_product(model.drho[i].mat(), iv_opt.delta[j].mat()).real() -
                         model.jacobian(j, i)));
    }
    rep.diag.trace_residual = trace_res;
    rep.diag.constraint_residual = constraint_res;

    rep.validate();
    return rep;
}

// thermal-Gaussian path ---------------------------------------------------

std::vector<CMat> gaussian_scores(const ThermalGaussianModel& model) {
    const Index m = model.m;
    const CMat ups = model.upsilon;
    const CMat one_plus = CMat::Identity(m, m) + ups;
    // vec(A X B) = (B^T kron A) vec(X), column-major
    const CMat lhs = 0.5 * (kron(one_plus.transpose(), ups) + kron(ups.transpose(), one_plus));
    Eigen::FullPivLU<CMat> lu(lhs);

    std::vector<CMat> scores;
    for (const auto& dups : model.dupsilon) {
        const CVec rhs = Eigen::Map<const CVec>(dups.data(), m * m);
        const CVec sol = lu.solve(rhs);
        CMat r = Eigen::Map<const CMat>(sol.data(), m, m);
        const CMat resid = 0.5 * (ups * r * one_plus + one_plus * r * ups) - dups;
        const double scale = std::max(dups.cwiseAbs().maxCoeff(), 1e-30);
        if (resid.cwiseAbs().maxCoeff() > 1e-9 * scale)
            throw std::runtime_error("gaussian_scores: score equation unsolvable (zero "
                                     "modes of Upsilon?)");
        scores.push_back(0.5 * (r + r.adjoint().eval()));
    }
    return scores;
}

RMat gaussian_qfi(const ThermalGaussianModel& model, const std::vector<CMat>& scores) {
    const CMat one_plus = CMat::Identity(model.m, model.m) + model.upsilon;
    const Index k = static_cast<Index>(scores.size());
    RMat f(k, k);
    for (Index i = 0; i < k; ++i)
        for (Index l = 0; l <= i; ++l) {
            f(i, l) = trace_product((model.upsilon * scores[static_cast<size_t>(i)] * one_plus)
                                        .eval(),
                                    scores[static_cast<size_t>(l)])
                          .real();
            f(l, i) = f(i, l);
        }
    return f;
}

GammaMatrix gaussian_gamma(const std::vector<CMat>& d_list, const CMat& upsilon) {
    const Index m = upsilon.rows();
    const CMat one_plus = CMat::Identity(m, m) + upsilon;
    const Index n = static_cast<Index>(d_list.size());
    CMat gamma(n, n);
    for (Index l = 0; l < n; ++l)
        for (Index q = 0; q < n; ++q)
            gamma(l, q) = trace_product(
                (upsilon * d_list[static_cast<size_t>(l)] * one_plus).eval(),
                d_list[static_cast<size_t>(q)]);
    return make_gamma(gamma, "gaussian_gamma");
}

std::vector<CMat> thermal_efficient_influence(const ThermalGaussianModel& model) {
    const auto scores = gaussian_scores(model);
    const RMat f = gaussian_qfi(model, scores);
    const RMat a = influence_coefficients(model.jacobian, f, 1e-10);
    std::vector<CMat> out;
    for (int l = 0; l < model.n; ++l) {
        CMat d = CMat::Zero(model.m, model.m);
        for (int i = 0; i < model.k; ++i) d += a(l, i) * scores[static_cast<size_t>(i)];
        out.push_back(0.5 * (d + d.adjoint().eval()));
    }
    return out;
}

std::vector<CMat> gaussian_null_basis(const ThermalGaussianModel& model) {
    return kernel_basis(hermitian_basis(model.m), model.dupsilon);
}

BoundReport gaussian_hn_bound(const ThermalGaussianModel& model, const RMat& w,
                              const HnOptions& opts) {
    if (w.rows() != model.n || w.cols() != model.n)
        throw std::invalid_argument("gaussian_hn_bound: weight shape mismatch");
    BoundReport rep;
    rep.weight = w;

    const auto scores = gaussian_scores(model);
    const RMat f = gaussian_qfi(model, scores);
    const RMat a = influence_coefficients(model.jacobian, f, opts.pinv_tol);
    rep.hel = (w * a * f * a.transpose()).trace();

    std::vector<CMat> d_hel;
    for (int l = 0; l < model.n; ++l) {
        CMat d = CMat::Zero(model.m, model.m);
        for (int i = 0; i < model.k; ++i) d += a(l, i) * scores[static_cast<size_t>(i)];
        d_hel.push_back(0.5 * (d + d.adjoint().eval()));
    }
    rep.d_hel = d_hel;
    rep.gamma_hel = gaussian_gamma(d_hel, model.upsilon);
    rep.c_at_hel = c_functional(rep.gamma_hel, w);

    const auto ts = gaussian_null_basis(model);
    const CMat one_plus = CMat::Identity(model.m, model.m) + model.upsilon;
    const auto form = build_form(model.upsilon, one_plus, d_hel, ts);

    auto mres = minimize_c(form, w, static_cast<Index>(ts.size()), rep.c_at_hel, opts);
    rep.hn = mres.best_value;
    rep.diag = mres.diag;

    std::vector<CMat> d_opt;
    double constraint_res = 0.0;
    for (int l = 0; l < model.n; ++l) {
        CMat d = d_hel[static_cast<size_t>(l)];
        for (size_t t = 0; t < ts.size(); ++t)
            d += mres.best_c(l, static_cast<Index>(t)) * ts[t];
        d = 0.5 * (d + d.adjoint().eval());
        for (int i = 0; i < model.k; ++i)
            constraint_res = std::max(
                constraint_res, std::abs(trace_product(d, model.dupsilon[i]).real() -
                                         model.jacobian(l, i)));
        d_opt.push_back(std::move(d));
    }
    rep.d_opt = d_opt;
    rep.gamma_opt = gaussian_gamma(d_opt, model.upsilon);
    rep.diag.constraint_residual = constraint_res;

    rep.validate();
    return rep;
}

} // namespace qmpe
