#include "qmpe/fock.hpp"

#include "qmpe/operator_core.hpp"

namespace qmpe {

CMat annihilation_op(Index cutoff) {
    CMat a = CMat::Zero(cutoff, cutoff);
    for (Index n = 1; n < cutoff; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

CVec gaussian_state_coeffs(Index cutoff, double q_mean, double p_mean, double q_var) {
    if (q_var <= 0)
        throw std::invalid_argument("gaussian_state_coeffs: q_var must be positive");
    if (cutoff < 1) throw std::invalid_argument("gaussian_state_coeffs: empty space");
    // |psi> = D(alpha) S(r) |0> with S = exp((r/2)(a^dag2 - a^2)), q-variance
    // exp(2r)/2. The annihilator relation (mu a - nu a^dag)|psi> =
    // (mu alpha - nu conj(alpha))|psi> with mu = cosh r, nu = sinh r gives a
    // two-term recursion; c_0 = exp(-|alpha|^2/2 + conj(alpha)^2 tanh(r)/2)/sqrt(cosh r).
    const double r = 0.5 * std::log(2.0 * q_var);
    const double mu = std::cosh(r), nu = std::sinh(r);
    const Complex alpha(q_mean / std::sqrt(2.0), p_mean / std::sqrt(2.0));
    const Complex ac = std::conj(alpha);
    const Complex lam = mu * alpha - nu * ac;

    CVec c(cutoff);
    c(0) = std::exp(-0.5 * std::norm(alpha) + 0.5 * ac * ac * std::tanh(r)) / std::sqrt(mu);
    if (cutoff > 1) c(1) = lam * c(0) / mu;
    for (Index n = 1; n + 1 < cutoff; ++n)
        c(n + 1) = (lam * c(n) + nu * std::sqrt(static_cast<double>(n)) * c(n - 1)) /
                   (mu * std::sqrt(static_cast<double>(n + 1)));
    return c;
}

CVec gaussian_pure_state(Index cutoff, double q_mean, double p_mean, double q_var) {
    CVec c = gaussian_state_coeffs(cutoff, q_mean, p_mean, q_var);
    const double norm = c.norm();
    if (norm < 1e-8)
        throw std::runtime_error("gaussian_pure_state: state mass below cutoff is negligible");
    return c / norm;
}

CVec gdyne_projector(Index cutoff, double q_out, double p_out, double q_var) {
    return gaussian_state_coeffs(cutoff, q_out, p_out, q_var);
}

RVec hermite_point(Index cutoff, double q) {
    // psi_0(q) = pi^{-1/4} exp(-q^2/2); psi_{n+1} = (sqrt(2) q psi_n - sqrt(n) psi_{n-1})/sqrt(n+1)
    RVec v(cutoff);
    if (cutoff == 0) return v;
    v(0) = std::pow(M_PI, -0.25) * std::exp(-0.5 * q * q);
    if (cutoff > 1) v(1) = std::sqrt(2.0) * q * v(0);
    for (Index n = 1; n + 1 < cutoff; ++n)
        v(n + 1) = (std::sqrt(2.0) * q * v(n) - std::sqrt(static_cast<double>(n)) * v(n - 1)) /
                   std::sqrt(static_cast<double>(n + 1));
    return v;
}

} // namespace qmpe
