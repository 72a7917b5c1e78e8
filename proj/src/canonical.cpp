#include "qmpe/canonical.hpp"

#include <cmath>

#include "qmpe/operator_core.hpp"

namespace qmpe {

RMat antisym_block_form(const RVec& nu, Index n) {
    RMat b = RMat::Zero(n, n);
    for (Index j = 0; j < nu.size(); ++j) {
        b(2 * j, 2 * j + 1) = nu(j);
        b(2 * j + 1, 2 * j) = -nu(j);
    }
    return b;
}

AntisymCanonical antisym_canonical(const RMat& a, double zero_tol) {
    const Index n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("antisym_canonical: matrix not square");
    if ((a + a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("antisym_canonical: matrix not antisymmetric");
    const RMat aa = 0.5 * (a - a.transpose());

    // iA is Hermitian with spectrum {+nu_j, -nu_j, 0...}; the +nu eigenvector
    // u gives the pair plane via u = (o1 - i o2)/sqrt(2)
    const CMat ia = Complex(0, 1) * aa.cast<Complex>();
    const HermitianEig eig = hermitian_eig(HermitianOperator::symmetrized(ia));

    const double nu_max = eig.eigenvalues.size() ? std::abs(eig.eigenvalues(0)) : 0.0;
    const double tol = std::max(zero_tol * nu_max, 1e-12);

    AntisymCanonical out;
    out.zero_tol_used = tol;
    std::vector<double> nus;
    std::vector<RVec> pair_cols;
    for (Index i = 0; i < n; ++i) {
        const double lam = eig.eigenvalues(i); // descending
        if (lam <= tol) break;
        CVec u = eig.eigenvectors.col(i);
        Index imax = 0;
        u.cwiseAbs().maxCoeff(&imax);
        const Complex phase = u(imax) / std::abs(u(imax));
        u *= std::conj(phase);
        RVec o1 = std::sqrt(2.0) * u.real();
        RVec o2 = -std::sqrt(2.0) * u.imag();
        for (Index c = 0; c < n; ++c) {
            if (std::abs(o1(c)) > 1e-9) {
                if (o1(c) < 0) {
                    o1 = -o1;
                    o2 = -o2;
                }
                break;
            }
        }
        nus.push_back(lam);
        pair_cols.push_back(o1);
        pair_cols.push_back(o2);
    }
    out.r = static_cast<int>(nus.size());
    out.nu = Eigen::Map<const RVec>(nus.data(), static_cast<Index>(nus.size()));

    out.O.resize(n, n);
    for (Index c = 0; c < static_cast<Index>(pair_cols.size()); ++c)
        out.O.col(c) = pair_cols[static_cast<size_t>(c)];

    // kernel of A: real SVD null space, orthogonal to the pair planes
    const Index zero_dim = n - 2 * out.r;
    if (zero_dim > 0) {
        Eigen::JacobiSVD<RMat> svd(aa, Eigen::ComputeFullV);
        out.O.rightCols(zero_dim) = svd.matrixV().rightCols(zero_dim);
    }

    if ((out.O.transpose() * out.O - RMat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-12)
        throw std::runtime_error("antisym_canonical: O not orthogonal");
    const RMat recon = out.O * antisym_block_form(out.nu, n) * out.O.transpose();
    if ((recon - aa).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, nu_max))
        throw std::runtime_error("antisym_canonical: reconstruction failed");
    return out;
}

CanonicalTransform build_L(const AntisymCanonical& c, Index n) {
    CanonicalTransform ct;
    ct.O = c.O;
    ct.nu = c.nu;
    ct.r = c.r;
    ct.zero_tol_used = c.zero_tol_used;
    RVec scale = RVec::Ones(n);
    for (int j = 0; j < c.r; ++j) {
        const double s = std::sqrt(2.0 * c.nu(j));
        scale(2 * j) = s;
        scale(2 * j + 1) = s;
    }
    ct.L = c.O * scale.asDiagonal();
    ct.L_inv = scale.cwiseInverse().asDiagonal() * c.O.transpose();
    if ((ct.L * ct.L_inv - RMat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::runtime_error("build_L: inverse check failed");
    return ct;
}

CanonicalTransform canonical_transform(const RMat& im_gamma, double zero_tol) {
    return build_L(antisym_canonical(im_gamma, zero_tol), im_gamma.rows());
}

std::vector<HermitianOperator> x_observables(const InfluenceVector& iv, const RVec& beta) {
    if (static_cast<Index>(iv.delta.size()) != beta.size())
        throw std::invalid_argument("x_observables: size mismatch");
    std::vector<HermitianOperator> x;
    for (size_t j = 0; j < iv.delta.size(); ++j) {
        const Index d = iv.delta[j].dim();
        x.push_back(HermitianOperator::symmetrized(
            iv.delta[j].mat() + beta(static_cast<Index>(j)) * CMat::Identity(d, d)));
    }
    return x;
}

std::vector<HermitianOperator> y_observables(const std::vector<HermitianOperator>& x_ops,
                                             const CanonicalTransform& ct) {
    const Index n = static_cast<Index>(x_ops.size());
    if (ct.L_inv.rows() != n)
        throw std::invalid_argument("y_observables: dimension mismatch");
    std::vector<HermitianOperator> y;
    for (Index j = 0; j < n; ++j) {
        CMat acc = CMat::Zero(x_ops[0].dim(), x_ops[0].dim());
        for (Index k = 0; k < n; ++k) acc += ct.L_inv(j, k) * x_ops[static_cast<size_t>(k)].mat();
        y.push_back(HermitianOperator::symmetrized(acc));
    }
    return y;
}

RMat commutator_im_matrix(const HermitianOperator& rho,
                          const std::vector<HermitianOperator>& ops) {
    const Index n = static_cast<Index>(ops.size());
    RMat m(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k) {
            const CMat prod = ops[static_cast<size_t>(j)].mat() * ops[static_cast<size_t>(k)].mat();
            const CMat prod_rev =
                ops[static_cast<size_t>(k)].mat() * ops[static_cast<size_t>(j)].mat();
            m(j, k) = (0.5 * trace_product(rho.mat(), (prod - prod_rev).eval())).imag();
        }
    return 0.5 * (m - m.transpose().eval());
}

} // namespace qmpe
