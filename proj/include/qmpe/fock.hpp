#ifndef QMPE_FOCK_HPP
#define QMPE_FOCK_HPP

#include "qmpe/types.hpp"

namespace qmpe {

// Truncated single-mode ladder and quadrature operators in shot-noise units:
// [q, p] = i away from the cutoff level, vacuum variance 1/2, hbar = 1.

CMat annihilation_op(Index cutoff);

inline CMat number_op(Index cutoff) {
    CMat n = CMat::Zero(cutoff, cutoff);
    for (Index k = 0; k < cutoff; ++k) n(k, k) = static_cast<double>(k);
    return n;
}

inline CMat quadrature_q(Index cutoff) {
    const CMat a = annihilation_op(cutoff);
    return (a + a.adjoint()) / std::sqrt(2.0);
}

inline CMat quadrature_p(Index cutoff) {
    const CMat a = annihilation_op(cutoff);
    return (a - a.adjoint()) * Complex(0.0, -1.0) / std::sqrt(2.0);
}

/// Fock coefficients of D(alpha) S(r) |0> with mean (q_mean, p_mean) and
/// q-variance q_var (minimum uncertainty, p-variance 1/(4 q_var)), truncated
/// without renormalization; 1 - ||.||^2 is the truncation deficit.
CVec gaussian_state_coeffs(Index cutoff, double q_mean, double p_mean, double q_var);

/// Normalized truncation of gaussian_state_coeffs, for ancilla input states.
CVec gaussian_pure_state(Index cutoff, double q_mean, double p_mean, double q_var);

/// Squeezed-coherent projector vector used by the general-dyne POVM. Kept
/// unnormalized so that sum_grid |z><z| dq dp / (2 pi) resolves the identity.
CVec gdyne_projector(Index cutoff, double q_out, double p_out, double q_var);

/// Harmonic-oscillator eigenfunctions <n|q> for n = 0..cutoff-1 at the given
/// quadrature value (shot units); column vector, used for homodyne densities.
RVec hermite_point(Index cutoff, double q);

} // namespace qmpe

#endif
