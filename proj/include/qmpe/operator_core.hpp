#ifndef QMPE_OPERATOR_CORE_HPP
#define QMPE_OPERATOR_CORE_HPP

#include <vector>

#include "qmpe/types.hpp"

namespace qmpe {

struct HermitianEig {
    RVec eigenvalues;  // descending
    CMat eigenvectors; // columns, unitary; A = V diag(w) V^dag
};

/// Full eigendecomposition of a Hermitian matrix (LAPACK zheevd backend).
HermitianEig hermitian_eig(const HermitianOperator& a);

/// |A| = sqrt(A^dag A), positive semidefinite, for any square A.
HermitianOperator matrix_abs(const ComplexMatrix& a);

/// A o B = (AB + BA)/2.
HermitianOperator jordan_product(const HermitianOperator& a, const HermitianOperator& b);

struct LyapunovOptions {
    double rank_tol = 1e-10;     // relative floor on eigenvalue sums of rho
    double support_tol = 1e-9;   // solvability: |G| outside support, relative to ||G||_F
    double residual_tol = 1e-9;  // post-check on ||rho o S - G||_F / ||G||_F
};

/// Solves rho o S = G for Hermitian S. rho must be PSD with unit trace; G must
/// vanish where rho's support does, otherwise the solve is rejected.
HermitianOperator lyapunov_solve(const HermitianOperator& rho, const HermitianOperator& g,
                                 const LyapunovOptions& opts = {});

constexpr Index kDefaultEmbedBudget = 4096;

/// X^(M) = M^{-1/2} sum_k I x...x X x...x I on the M-fold tensor power.
HermitianOperator collective_embed(const HermitianOperator& x, int copies,
                                   Index max_dim = kDefaultEmbedBudget);

CMat kron(const CMat& a, const CMat& b);

/// Partial trace of an operator on a tensor-product space with factor
/// dimensions `dims`; `keep` lists the factor indices retained (ascending).
CMat partial_trace(const CMat& a, const std::vector<Index>& dims, const std::vector<int>& keep);

/// exp(i t H) for Hermitian H, via eigendecomposition; unitary.
CMat matrix_exp_i(const HermitianOperator& h, double t);

} // namespace qmpe

#endif
