#ifndef QMPE_CANONICAL_HPP
#define QMPE_CANONICAL_HPP

#include <vector>

#include "qmpe/bounds.hpp"
#include "qmpe/types.hpp"

namespace qmpe {

/// Real antisymmetric canonical data: O^T A O = block_diag((0 nu_j; -nu_j 0), 0).
struct AntisymCanonical {
    RMat O;  // orthogonal
    RVec nu; // descending, r positive entries
    int r = 0;
    double zero_tol_used = 0.0;
};

/// X = L Y transform turning the pair blocks into canonical quadratures:
/// Im(Gamma_Y) = L^-1 ImGamma L^-T has pair blocks (0 1/2; -1/2 0).
struct CanonicalTransform {
    RMat O;
    RVec nu;
    int r = 0;
    RMat L;
    RMat L_inv;
    double zero_tol_used = 0.0;
};

/// Block matrix ⊕_j (0 nu_j; -nu_j 0) ⊕ 0_{n-2r}.
RMat antisym_block_form(const RVec& nu, Index n);

/// Decomposition via the Hermitian eigenproblem of iA; columns deterministic
/// (phase fixed on the dominant component, pair sign on the first significant
/// entry of the first column).
AntisymCanonical antisym_canonical(const RMat& a, double zero_tol = 1e-9);

/// L = O diag(sqrt(2 nu_1), sqrt(2 nu_1), ..., 1, ..., 1).
CanonicalTransform build_L(const AntisymCanonical& c, Index n);

/// antisym_canonical followed by build_L.
CanonicalTransform canonical_transform(const RMat& im_gamma, double zero_tol = 1e-9);

/// X_j = delta_j + beta_j I.
std::vector<HermitianOperator> x_observables(const InfluenceVector& iv, const RVec& beta);

/// Y_j = sum_k (L^-1)_jk X_k.
std::vector<HermitianOperator> y_observables(const std::vector<HermitianOperator>& x_ops,
                                             const CanonicalTransform& ct);

/// M_jk = (1/2i) tr(rho [ops_j, ops_k]).
RMat commutator_im_matrix(const HermitianOperator& rho,
                          const std::vector<HermitianOperator>& ops);

} // namespace qmpe

#endif
