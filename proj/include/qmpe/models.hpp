#ifndef QMPE_MODELS_HPP
#define QMPE_MODELS_HPP

#include <functional>
#include <vector>

#include "qmpe/types.hpp"

namespace qmpe {

/// Finite-dimensional parametric model at a working point: the state, its k
/// coordinate derivatives, and the n-vector target map with Jacobian
/// B_ji = d beta_j / d theta_i.
struct FiniteDimModel {
    Index d = 0;
    int k = 0;
    int n = 0;
    HermitianOperator rho;
    std::vector<HermitianOperator> drho;
    RVec beta;
    RMat jacobian; // n x k
    std::vector<HermitianOperator> observables; // target observables b_j when the
                                                // model is of expected-value type
    bool full_rank = true;

    void validate() const;
};

struct SpinModel {
    FiniteDimModel model;
    std::vector<HermitianOperator> spin; // s1, s2, s3
    RVec coords;                         // generalized Bloch coordinates
};

/// Spin observables of a d-level object, [s_j, s_k] = i eps_jkl s_l.
std::vector<HermitianOperator> spin_operators(Index d);

/// Orthonormal traceless Hermitian basis (generalized Gell-Mann),
/// tr(E_a E_b) = delta_ab, d^2 - 1 elements.
std::vector<CMat> gellmann_basis(Index d);

/// rho = I/d + sum_a c_a E_a with targets beta_j = tr(rho s_j).
SpinModel make_spin_model(Index d, const RVec& bloch_coords);

/// d = 2 convenience: physical Bloch vector w, rho = (I + w.sigma)/2.
RVec qubit_coords(double wx, double wy, double wz);

/// Nonparametric expected-value estimation: full state space (k = d^2 - 1
/// Gell-Mann directions), beta_j = tr(rho b_j). A rank-deficient rho is
/// accepted but flagged (full_rank = false).
FiniteDimModel make_nonparametric_model(const HermitianOperator& rho,
                                        const std::vector<HermitianOperator>& observables);

/// Thermal Gaussian model of m optical modes with mutual coherence matrix
/// Upsilon_jk = tr(rho a_k^dag a_j), its k parameter derivatives, and the
/// target map evaluated at the working point.
struct ThermalGaussianModel {
    Index m = 0;
    int k = 0;
    int n = 0;
    CMat upsilon;
    std::vector<CMat> dupsilon;
    RVec beta;
    RMat jacobian; // n x k
    bool real_upsilon = false;

    void validate() const;
};

struct FockBuildResult {
    HermitianOperator rho;
    double truncation_deficit = 0.0; // 1 - trace before renormalization
};

/// Fock-basis density matrix of the zero-mean thermal Gaussian state with
/// coherence matrix Upsilon, truncated at `cutoff` levels per mode.
FockBuildResult thermal_fock_state(const CMat& upsilon, Index cutoff,
                                   double deficit_bound = 1e-6);

/// Central finite differences of a state-valued map, Hermitized.
std::vector<HermitianOperator> finite_difference_derivatives(
    const std::function<CMat(const RVec&)>& rho_of_theta, const RVec& theta, double step);

} // namespace qmpe

#endif
