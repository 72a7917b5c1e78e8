#include "qmpe/operator_core.hpp"

#include <algorithm>
#include <string>

#include <lapacke.h>

namespace qmpe {

namespace {

// Ascending eigenvalues, eigenvectors overwrite `a` (column-major as Eigen).
void zheevd_inplace(CMat& a, RVec& w) {
    const lapack_int n = static_cast<lapack_int>(a.rows());
    w.resize(n);
    if (n == 0) return;
    lapack_int info = LAPACKE_zheevd(
        LAPACK_COL_MAJOR, 'V', 'L', n,
        reinterpret_cast<lapack_complex_double*>(a.data()), n, w.data());
    if (info != 0)
        throw std::runtime_error("hermitian_eig: zheevd failed, info = " + std::to_string(info));
}

} // namespace

HermitianEig hermitian_eig(const HermitianOperator& a) {
    // zheevd reads the lower triangle, so the Hermitian projection is implicit.
    CMat v = a.mat();
    RVec w;
    zheevd_inplace(v, w);
    HermitianEig out;
    const Index n = v.rows();
    out.eigenvalues = w.reverse();
    out.eigenvectors.resize(n, n);
    for (Index j = 0; j < n; ++j) out.eigenvectors.col(j) = v.col(n - 1 - j);
    return out;
}

HermitianOperator matrix_abs(const ComplexMatrix& a) {
    if (!a.square())
        throw std::invalid_argument("matrix_abs: matrix not square");
    Eigen::JacobiSVD<CMat> svd(a.mat(), Eigen::ComputeThinV);
    const CMat& v = svd.matrixV();
    return HermitianOperator::symmetrized(
        v * svd.singularValues().asDiagonal() * v.adjoint());
}

HermitianOperator jordan_product(const HermitianOperator& a, const HermitianOperator& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("jordan_product: dimension mismatch");
    return HermitianOperator::symmetrized(0.5 * (a.mat() * b.mat() + b.mat() * a.mat()));
}

HermitianOperator lyapunov_solve(const HermitianOperator& rho, const HermitianOperator& g,
                                 const LyapunovOptions& opts) {
    if (rho.dim() != g.dim())
        throw std::invalid_argument("lyapunov_solve: dimension mismatch");
    const HermitianEig eig = hermitian_eig(rho);
    const double lam_max = eig.eigenvalues.size() ? eig.eigenvalues(0) : 0.0;
    if (eig.eigenvalues.size() && eig.eigenvalues.minCoeff() < -1e-10 * std::max(lam_max, 1.0))
        throw std::invalid_argument("lyapunov_solve: rho is not positive semidefinite");

    const double sum_floor = opts.rank_tol * lam_max;
    const CMat g_eig = eig.eigenvectors.adjoint() * g.mat() * eig.eigenvectors;
    const double g_norm = g.mat().norm();

    const Index n = rho.dim();
    CMat s_eig(n, n);
    double unsupported = 0.0;
    for (Index b = 0; b < n; ++b) {
        for (Index a = 0; a < n; ++a) {
            const double sum = eig.eigenvalues(a) + eig.eigenvalues(b);
            if (sum < sum_floor) {
                unsupported += std::norm(g_eig(a, b));
                s_eig(a, b) = 0.0;
            } else {
                s_eig(a, b) = 2.0 * g_eig(a, b) / sum;
            }
        }
    }
    if (std::sqrt(unsupported) > opts.support_tol * g_norm)
        throw std::runtime_error(
            "lyapunov_solve: G has support outside the range of rho o (.), solve rejected");

    HermitianOperator s = HermitianOperator::symmetrized(
        eig.eigenvectors * s_eig * eig.eigenvectors.adjoint());

    const CMat resid = 0.5 * (rho.mat() * s.mat() + s.mat() * rho.mat()) - g.mat();
    if (g_norm > 0 && resid.norm() > opts.residual_tol * g_norm)
        throw std::runtime_error("lyapunov_solve: residual " + std::to_string(resid.norm()) +
                                 " exceeds tolerance");
    return s;
}

HermitianOperator collective_embed(const HermitianOperator& x, int copies, Index max_dim) {
    if (copies < 1)
        throw std::invalid_argument("collective_embed: need at least one copy");
    const Index d = x.dim();
    double total = 1.0;
    for (int k = 0; k < copies; ++k) {
        total *= static_cast<double>(d);
        if (total > static_cast<double>(max_dim))
            throw std::invalid_argument("collective_embed: dimension " + std::to_string(total) +
                                        " exceeds budget " + std::to_string(max_dim));
    }
    const Index dim = static_cast<Index>(total);
    CMat acc = CMat::Zero(dim, dim);
    const CMat id_one = CMat::Identity(d, d);
    for (int k = 0; k < copies; ++k) {
        CMat term = (k == 0) ? x.mat() : id_one;
        for (int j = 1; j < copies; ++j)
            term = kron(term, j == k ? x.mat() : id_one);
        acc += term;
    }
    acc /= std::sqrt(static_cast<double>(copies));
    return HermitianOperator::symmetrized(acc);
}

CMat kron(const CMat& a, const CMat& b) {
    CMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

CMat partial_trace(const CMat& a, const std::vector<Index>& dims, const std::vector<int>& keep) {
    Index total = 1;
    for (Index d : dims) total *= d;
    if (a.rows() != total || a.cols() != total)
        throw std::invalid_argument("partial_trace: dims do not match matrix size");
    for (size_t i = 1; i < keep.size(); ++i)
        if (keep[i] <= keep[i - 1])
            throw std::invalid_argument("partial_trace: keep set must be strictly ascending");
    for (int k : keep)
        if (k < 0 || k >= static_cast<int>(dims.size()))
            throw std::invalid_argument("partial_trace: keep index out of range");

    const int nf = static_cast<int>(dims.size());
    std::vector<bool> kept(nf, false);
    for (int k : keep) kept[k] = true;

    Index keep_dim = 1, trace_dim = 1;
    for (int f = 0; f < nf; ++f) (kept[f] ? keep_dim : trace_dim) *= dims[f];

    // strides of factor f in the full row index (row-major over factor list order)
    std::vector<Index> stride(nf, 1);
    for (int f = nf - 2; f >= 0; --f) stride[f] = stride[f + 1] * dims[f + 1];

    std::vector<int> keep_f(keep.begin(), keep.end());
    std::vector<int> trace_f;
    for (int f = 0; f < nf; ++f)
        if (!kept[f]) trace_f.push_back(f);

    auto unrank = [&](Index idx, const std::vector<int>& factors) {
        // full-space offset of a multi-index ranked over `factors` (last fastest)
        Index off = 0;
        for (int f = static_cast<int>(factors.size()) - 1; f >= 0; --f) {
            const Index d = dims[factors[f]];
            off += (idx % d) * stride[factors[f]];
            idx /= d;
        }
        return off;
    };

    CMat out = CMat::Zero(keep_dim, keep_dim);
    for (Index i = 0; i < keep_dim; ++i) {
        const Index oi = unrank(i, keep_f);
        for (Index j = 0; j < keep_dim; ++j) {
            const Index oj = unrank(j, keep_f);
            Complex acc = 0.0;
            for (Index tcur = 0; tcur < trace_dim; ++tcur) {
                const Index ot = unrank(tcur, trace_f);
                acc += a(oi + ot, oj + ot);
            }
            out(i, j) = acc;
        }
    }
    return out;
}

CMat matrix_exp_i(const HermitianOperator& h, double t) {
    const HermitianEig eig = hermitian_eig(h);
    CVec phase(eig.eigenvalues.size());
    for (Index i = 0; i < phase.size(); ++i)
        phase(i) = std::exp(Complex(0.0, t * eig.eigenvalues(i)));
    return eig.eigenvectors * phase.asDiagonal() * eig.eigenvectors.adjoint();
}

} // namespace qmpe
