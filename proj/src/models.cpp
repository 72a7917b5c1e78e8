#include "qmpe/models.hpp"

#include <string>

#include "qmpe/fock.hpp"
#include "qmpe/operator_core.hpp"

namespace qmpe {

void FiniteDimModel::validate() const {
    if (std::abs(real_trace(rho.mat()) - 1.0) > 1e-12)
        throw std::invalid_argument("model: tr(rho) != 1");
    const HermitianEig eig = hermitian_eig(rho);
    if (eig.eigenvalues.minCoeff() < -1e-12)
        throw std::invalid_argument("model: rho has eigenvalue " +
                                    std::to_string(eig.eigenvalues.minCoeff()));
    if (static_cast<int>(drho.size()) != k)
        throw std::invalid_argument("model: derivative count mismatch");
    for (const auto& dr : drho)
        if (std::abs(real_trace(dr.mat())) > 1e-10)
            throw std::invalid_argument("model: derivative not traceless");
    if (beta.size() != n || jacobian.rows() != n || jacobian.cols() != k)
        throw std::invalid_argument("model: target map shape mismatch");
}

std::vector<HermitianOperator> spin_operators(Index d) {
    if (d < 2) throw std::invalid_argument("spin_operators: need d >= 2");
    const double j = 0.5 * static_cast<double>(d - 1);
    CMat sp = CMat::Zero(d, d); // raising
    CMat s3 = CMat::Zero(d, d);
    for (Index a = 0; a < d; ++a) {
        const double m = j - static_cast<double>(a);
        s3(a, a) = m;
        if (a > 0) sp(a - 1, a) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
    }
    const CMat sm = sp.adjoint();
    std::vector<HermitianOperator> s;
    s.push_back(HermitianOperator::symmetrized(0.5 * (sp + sm)));
    s.push_back(HermitianOperator::symmetrized(Complex(0.0, -0.5) * (sp - sm)));
    s.push_back(HermitianOperator::symmetrized(s3));
    return s;
}

std::vector<CMat> gellmann_basis(Index d) {
    std::vector<CMat> basis;
    basis.reserve(static_cast<size_t>(d * d - 1));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (Index i = 0; i < d; ++i) {
        for (Index j = i + 1; j < d; ++j) {
            CMat sym = CMat::Zero(d, d);
            sym(i, j) = inv_sqrt2;
            sym(j, i) = inv_sqrt2;
            basis.push_back(sym);
            CMat asym = CMat::Zero(d, d);
            asym(i, j) = Complex(0.0, -inv_sqrt2);
            asym(j, i) = Complex(0.0, inv_sqrt2);
            basis.push_back(asym);
        }
    }
    for (Index l = 1; l < d; ++l) {
        CMat diag = CMat::Zero(d, d);
        const double norm = 1.0 / std::sqrt(static_cast<double>(l * (l + 1)));
        for (Index i = 0; i < l; ++i) diag(i, i) = norm;
        diag(l, l) = -static_cast<double>(l) * norm;
        basis.push_back(diag);
    }
    return basis;
}

SpinModel make_spin_model(Index d, const RVec& bloch_coords) {
    const auto basis = gellmann_basis(d);
    if (bloch_coords.size() != static_cast<Index>(basis.size()))
        throw std::invalid_argument("make_spin_model: expected " +
                                    std::to_string(basis.size()) + " coordinates");
    CMat rho = CMat::Identity(d, d) / static_cast<double>(d);
    for (size_t a = 0; a < basis.size(); ++a) rho += bloch_coords(a) * basis[a];

    SpinModel sm;
    sm.spin = spin_operators(d);
    sm.coords = bloch_coords;
    sm.model = make_nonparametric_model(HermitianOperator::symmetrized(rho), sm.spin);
    return sm;
}

RVec qubit_coords(double wx, double wy, double wz) {
    // rho = (I + w.sigma)/2 = I/2 + sum_a (w_a/sqrt(2)) E_a for E_a = sigma_a/sqrt(2)
    RVec c(3);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    c << wx * inv_sqrt2, wy * inv_sqrt2, wz * inv_sqrt2;
    return c;
}

FiniteDimModel make_nonparametric_model(const HermitianOperator& rho,
                                        const std::vector<HermitianOperator>& observables) {
    const Index d = rho.dim();
    FiniteDimModel m;
    m.d = d;
    m.k = static_cast<int>(d * d - 1);
    m.n = static_cast<int>(observables.size());
    m.rho = rho;
    const auto basis = gellmann_basis(d);
    m.drho.reserve(basis.size());
    for (const auto& e : basis) m.drho.emplace_back(HermitianOperator::symmetrized(e));
    m.beta.resize(m.n);
    m.jacobian.resize(m.n, m.k);
    for (int j = 0; j < m.n; ++j) {
        if (observables[j].dim() != d)
            throw std::invalid_argument("make_nonparametric_model: observable dimension mismatch");
        m.beta(j) = expectation(rho.mat(), observables[j].mat());
        for (int i = 0; i < m.k; ++i)
            m.jacobian(j, i) = expectation(basis[i], observables[j].mat());
    }
    m.observables = observables;
    const HermitianEig eig = hermitian_eig(rho);
    m.full_rank = eig.eigenvalues.minCoeff() > 1e-10 * std::max(eig.eigenvalues.maxCoeff(), 1.0);
    m.validate();
    return m;
}

void ThermalGaussianModel::validate() const {
    if (upsilon.rows() != m || upsilon.cols() != m)
        throw std::invalid_argument("thermal model: Upsilon shape mismatch");
    HermitianOperator u(upsilon, 1e-10);
    const HermitianEig eig = hermitian_eig(u);
    if (eig.eigenvalues.minCoeff() < -1e-10 * std::max(eig.eigenvalues.maxCoeff(), 1.0))
        throw std::invalid_argument("thermal model: Upsilon not PSD");
    if (static_cast<int>(dupsilon.size()) != k)
        throw std::invalid_argument("thermal model: derivative count mismatch");
    if (beta.size() != n || jacobian.rows() != n || jacobian.cols() != k)
        throw std::invalid_argument("thermal model: target map shape mismatch");
    if (real_upsilon && upsilon.imag().cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("thermal model: Upsilon flagged real but has imaginary part");
}

FockBuildResult thermal_fock_state(const CMat& upsilon, Index cutoff, double deficit_bound) {
    const Index m = upsilon.rows();
    HermitianOperator ups(upsilon, 1e-10);
    const HermitianEig eig = hermitian_eig(ups);
    if (eig.eigenvalues.minCoeff() < -1e-12)
        throw std::invalid_argument("thermal_fock_state: Upsilon not PSD");

    // product of per-mode geometric thermal states in the eigenmode basis
    Index dim = 1;
    for (Index i = 0; i < m; ++i) dim *= cutoff;
    RVec diag = RVec::Ones(dim);
    double trace_kept = 1.0;
    for (Index mode = 0; mode < m; ++mode) {
        const double nbar = std::max(eig.eigenvalues(mode), 0.0);
        const double q = nbar / (1.0 + nbar);
        RVec pmode(cutoff);
        for (Index j = 0; j < cutoff; ++j)
            pmode(j) = std::pow(q, static_cast<double>(j)) / (1.0 + nbar);
        trace_kept *= pmode.sum();
        // tensor in: mode index varies with stride cutoff^(m-1-mode)
        Index stride = 1;
        for (Index t = mode + 1; t < m; ++t) stride *= cutoff;
        for (Index idx = 0; idx < dim; ++idx)
            diag(idx) *= pmode((idx / stride) % cutoff);
    }
    const double deficit = 1.0 - trace_kept;
    if (deficit > deficit_bound)
        throw std::runtime_error("thermal_fock_state: truncation deficit " +
                                 std::to_string(deficit) + " exceeds bound");

    CMat rho = diag.cast<Complex>().asDiagonal();

    // passive rotation taking the eigenmodes back to the physical modes:
    // V^dag a V = U a with V = exp(-i H), H = sum h_jk a_j^dag a_k, h = i log U
    const CMat u_modes = eig.eigenvectors;
    Eigen::ComplexSchur<CMat> schur(u_modes);
    const CMat t = schur.matrixT(); // diagonal up to roundoff: u_modes is unitary, hence normal
    const CMat q = schur.matrixU();
    CVec logvals(m);
    for (Index i = 0; i < m; ++i) logvals(i) = std::log(t(i, i));
    const CMat logu = q * logvals.asDiagonal() * q.adjoint();
    const CMat h_modes = Complex(0.0, 1.0) * logu;
    if ((h_modes - h_modes.adjoint()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::runtime_error("thermal_fock_state: mode generator not Hermitian");

    if (m > 1 || h_modes.cwiseAbs().maxCoeff() > 1e-14) {
        // second-quantized generator on the truncated space
        const CMat a1 = annihilation_op(cutoff);
        const CMat id1 = CMat::Identity(cutoff, cutoff);
        CMat big_h = CMat::Zero(dim, dim);
        for (Index j = 0; j < m; ++j)
            for (Index kk = 0; kk < m; ++kk) {
                if (std::abs(h_modes(j, kk)) < 1e-16) continue;
                CMat term = CMat::Identity(1, 1);
                for (Index f = 0; f < m; ++f) {
                    CMat fac;
                    if (f == j && f == kk) fac = a1.adjoint() * a1;
                    else if (f == j) fac = a1.adjoint();
                    else if (f == kk) fac = a1;
                    else fac = id1;
                    term = kron(term, fac);
                }
                big_h += h_modes(j, kk) * term;
            }
        const CMat v = matrix_exp_i(HermitianOperator::symmetrized(big_h), -1.0);
        rho = v * rho * v.adjoint();
    }

    rho /= rho.trace().real();
    FockBuildResult out;
    out.rho = HermitianOperator::symmetrized(rho);
    out.truncation_deficit = deficit;
    return out;
}

std::vector<HermitianOperator> finite_difference_derivatives(
    const std::function<CMat(const RVec&)>& rho_of_theta, const RVec& theta, double step) {
    if (step <= 0) throw std::invalid_argument("finite_difference_derivatives: step must be > 0");
    std::vector<HermitianOperator> out;
    out.reserve(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
        RVec tp = theta, tm = theta;
        tp(i) += step;
        tm(i) -= step;
        const CMat diff = (rho_of_theta(tp) - rho_of_theta(tm)) / (2.0 * step);
        out.push_back(HermitianOperator::symmetrized(diff));
    }
    return out;
}

} // namespace qmpe
