#ifndef QMPE_BOUNDS_HPP
#define QMPE_BOUNDS_HPP

#include <cstdint>
#include <vector>

#include "qmpe/models.hpp"
#include "qmpe/types.hpp"

namespace qmpe {

/// Influence operators delta_j for the n target components.
struct InfluenceVector {
    std::vector<HermitianOperator> delta;
};

/// Gamma_jk = tr(rho delta_j delta_k); Hermitian, re symmetric PSD,
/// im antisymmetric.
struct GammaMatrix {
    CMat gamma;
    RMat re;
    RMat im;
};

struct OptimizerDiagnostics {
    int null_dim = 0;
    int iterations = 0;
    int starts = 1;
    double step0 = 0.0;
    double final_subgradient_norm = 0.0;
    double plateau_improvement = 0.0; // best-value drop over the final 20% of iterations
    double trace_residual = 0.0;      // max_j |tr(rho delta_j)|
    double constraint_residual = 0.0; // max_ij |tr(drho_i delta_j) - B_ji|
    bool converged = true;
};

struct BoundReport {
    double hel = 0.0;
    double c_at_hel = 0.0;
    double hn = 0.0;
    RMat weight;
    GammaMatrix gamma_hel;
    GammaMatrix gamma_opt;
    std::vector<HermitianOperator> delta_hel; // finite-dimensional path
    std::vector<HermitianOperator> delta_opt;
    std::vector<CMat> d_hel; // thermal-Gaussian path (quadratic-form matrices)
    std::vector<CMat> d_opt;
    OptimizerDiagnostics diag;

    /// Sandwich chain hel <= hn <= c_at_hel <= 2 hel within `slack`.
    void validate(double slack = 1e-7) const;
};

struct HnOptions {
    int iterations = 5000;
    double step0_scale = 0.1; // step0 = scale * C(delta_hel)
    int starts = 1;           // extra random restarts beyond the zero start
    std::uint64_t seed = 0;
    double pinv_tol = 1e-10;      // relative singular-value threshold for F^+
    double plateau_rel = 1e-6;    // convergence: best-value drop over final 20%
    bool require_convergence = true;
};

// finite-dimensional path -------------------------------------------------

/// Scores S_i solving rho o S_i = drho_i; tr(rho S_i) = 0.
std::vector<HermitianOperator> compute_slds(const FiniteDimModel& model);

/// F_il = tr(rho S_i o S_l), symmetric PSD.
RMat qfi_matrix(const FiniteDimModel& model, const std::vector<HermitianOperator>& slds);

/// delta_j = sum_i [B F^+]_ji S_i; weight-independent.
InfluenceVector efficient_influence(const FiniteDimModel& model);

/// Checks the influence constraints against the model; throws on violation.
void validate_influence(const FiniteDimModel& model, const InfluenceVector& iv,
                        double trace_tol = 1e-9, double constraint_tol = 1e-8);

GammaMatrix gamma_matrix(const HermitianOperator& rho, const InfluenceVector& iv);

/// tr(W ReGamma) + tr|sqrt(W) ImGamma sqrt(W)|; W symmetric positive definite.
double c_functional(const GammaMatrix& gamma, const RMat& w);

/// Generalized Helstrom bound tr(W B F^+ B^T).
double hel_bound(const FiniteDimModel& model, const RMat& w);

/// Orthonormal Hermitian basis {T_a} of the influence null space:
/// tr(rho T) = 0 and tr(drho_i T) = 0 for all i.
std::vector<HermitianOperator> null_space_basis(const FiniteDimModel& model);

/// Holevo-Nagaoka bound by subgradient minimization of C over the affine
/// influence set delta_j = delta_hel_j + sum_a c_ja T_a.
BoundReport hn_bound(const FiniteDimModel& model, const RMat& w, const HnOptions& opts = {});

// thermal-Gaussian path ---------------------------------------------------

/// Score matrices R_i solving [Y R (I+Y) + (I+Y) R Y]/2 = dY_i.
std::vector<CMat> gaussian_scores(const ThermalGaussianModel& model);

/// F_il = Re tr[Y R_i (I+Y) R_l].
RMat gaussian_qfi(const ThermalGaussianModel& model, const std::vector<CMat>& scores);

/// Gamma_lm = tr[Y D_l (I+Y) D_m] for quadratic influences
/// delta_l = sum_jk D_l,jk a_j^dag a_k - tr(D_l Y).
GammaMatrix gaussian_gamma(const std::vector<CMat>& d_list, const CMat& upsilon);

/// D_l = sum_i [B F^+]_li R_i.
std::vector<CMat> thermal_efficient_influence(const ThermalGaussianModel& model);

/// Hermitian basis {T_a} with tr(T dY_i) = 0 for all i.
std::vector<CMat> gaussian_null_basis(const ThermalGaussianModel& model);

BoundReport gaussian_hn_bound(const ThermalGaussianModel& model, const RMat& w,
                              const HnOptions& opts = {});

// shared helpers ----------------------------------------------------------

/// Symmetric positive-definite square root; throws if w is not PD.
RMat sym_sqrt(const RMat& w);

/// tr(A B) without forming the product.
Complex trace_product(const CMat& a, const CMat& b);

} // namespace qmpe

#endif
