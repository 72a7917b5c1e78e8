#include <optional>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qmpe/bounds.hpp"
#include "qmpe/canonical.hpp"
#include "qmpe/models.hpp"
#include "qmpe/runner.hpp"
#include "qmpe/scheme_sim.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace qmpe;

namespace {

RMat weight_or_identity(const std::optional<RMat>& w, int n) {
    if (!w) return RMat::Identity(n, n);
    if (w->rows() != n || w->cols() != n)
        throw std::invalid_argument("weight must be " + std::to_string(n) + " x " +
                                    std::to_string(n));
    return *w;
}

py::dict bound_dict(const BoundReport& rep) {
    py::dict out;
    out["hel"] = rep.hel;
    out["hn"] = rep.hn;
    out["c_at_hel"] = rep.c_at_hel;
    out["re_gamma"] = rep.gamma_opt.re;
    out["im_gamma"] = rep.gamma_opt.im;
    out["null_dim"] = rep.diag.null_dim;
    out["converged"] = rep.diag.converged;
    return out;
}

py::dict spin_bounds(Index d, const RVec& coords, const std::optional<RMat>& weight) {
    const FiniteDimModel model = make_spin_model(d, coords).model;
    return bound_dict(hn_bound(model, weight_or_identity(weight, model.n)));
}

ThermalGaussianModel thermal_model(const CMat& upsilon, const std::vector<CMat>& derivatives,
                                   const std::optional<RMat>& jacobian,
                                   const std::optional<RVec>& beta) {
    ThermalGaussianModel m;
    m.m = upsilon.rows();
    m.k = static_cast<int>(derivatives.size());
    m.upsilon = upsilon;
    m.dupsilon = derivatives;
    m.jacobian = jacobian ? *jacobian : RMat::Identity(m.k, m.k);
    m.n = static_cast<int>(m.jacobian.rows());
    m.beta = beta ? *beta : RVec::Zero(m.n);
    m.real_upsilon = upsilon.imag().cwiseAbs().maxCoeff() < 1e-14;
    m.validate();
    return m;
}

py::dict thermal_bounds(const CMat& upsilon, const std::vector<CMat>& derivatives,
                        const std::optional<RMat>& jacobian, const std::optional<RVec>& beta,
                        const std::optional<RMat>& weight) {
    const ThermalGaussianModel m = thermal_model(upsilon, derivatives, jacobian, beta);
    return bound_dict(gaussian_hn_bound(m, weight_or_identity(weight, m.n)));
}

py::dict canonical(Index d, const RVec& coords, const std::optional<RMat>& weight) {
    const FiniteDimModel model = make_spin_model(d, coords).model;
    const BoundReport rep = hn_bound(model, weight_or_identity(weight, model.n));
    const CanonicalTransform ct = canonical_transform(rep.gamma_opt.im);
    py::dict out;
    out["O"] = ct.O;
    out["nu"] = ct.nu;
    out["r"] = ct.r;
    out["L"] = ct.L;
    out["L_inv"] = ct.L_inv;
    return out;
}

py::dict simulate_linear(Index d, const RVec& coords, Index M, Index samples,
                         std::uint64_t seed, double gamma1, double kappa1, double gdyne_noise,
                         const std::optional<RMat>& weight) {
    const auto sm = make_spin_model(d, coords);
    SchemeConfig cfg;
    cfg.M = M;
    cfg.samples = samples;
    cfg.seed = seed;
    cfg.gamma1 = gamma1;
    cfg.kappa1 = kappa1;
    cfg.gdyne_noise = gdyne_noise;
    const RMat w = weight_or_identity(weight, sm.model.n);
    const MeasurementTarget tgt = build_target(sm.model, w, cfg);
    const RunResult res = linearized_simulate(sm.model.rho, sm.model.beta, tgt, cfg);
    py::dict out;
    out["scaled_error"] = res.scaled_error;
    out["scaled_error_se"] = res.scaled_error_se;
    out["predicted_scaled_error"] = tgt.predicted_scaled_error;
    out["beta_true"] = res.beta_true;
    out["V"] = res.V;
    out["gamma_t"] = res.gamma_t;
    return out;
}

} // namespace

PYBIND11_MODULE(_qmpe, m) {
    m.doc() = "Generalized Helstrom / Holevo-Nagaoka bounds and the "
              "ancilla-coupling measurement scheme";
    m.attr("__version__") = kArtifactVersion;

    m.def("qubit_coords", &qubit_coords, "wx"_a, "wy"_a, "wz"_a,
          "Generalized Bloch coordinates of a qubit with physical Bloch vector w.");

    m.def("spin_bounds", &spin_bounds, "d"_a, "coords"_a, "weight"_a = py::none(),
          "Hel / HN / C bounds for the spin expectation model at the given "
          "generalized Bloch coordinates.");

    m.def("thermal_bounds", &thermal_bounds, "upsilon"_a, "derivatives"_a,
          "jacobian"_a = py::none(), "beta"_a = py::none(), "weight"_a = py::none(),
          "Bounds for a thermal Gaussian model with mutual coherence matrix "
          "upsilon and its parameter derivatives.");

    m.def("canonical", &canonical, "d"_a, "coords"_a, "weight"_a = py::none(),
          "Canonical observable transform (O, nu, L) at the HN optimum.");

    m.def("simulate_linear", &simulate_linear, "d"_a, "coords"_a, "M"_a = 100000,
          "samples"_a = 20000, "seed"_a = 1, "gamma1"_a = 8.0, "kappa1"_a = 1.0,
          "gdyne_noise"_a = 0.0, "weight"_a = py::none(),
          "QCLT-linearized measurement run; returns the scaled error and the "
          "C(delta) prediction. gdyne_noise <= 0 selects the per-pair optimum.");
}
