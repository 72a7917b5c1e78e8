#include "qmpe/runner.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "qmpe/bounds.hpp"
#include "qmpe/canonical.hpp"
#include "qmpe/fock.hpp"
#include "qmpe/models.hpp"
#include "qmpe/operator_core.hpp"
#include "qmpe/protocol.hpp"
#include "qmpe/report.hpp"
#include "qmpe/rng.hpp"
#include "qmpe/scheme_sim.hpp"

namespace qmpe {

namespace {

using nlohmann::json;

json vec_json(const RVec& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_json(const RMat& m) {
    json a = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(row);
    }
    return a;
}

FiniteDimModel finite_model(const ExperimentConfig& cfg) {
    if (cfg.model_kind != "spin")
        throw std::invalid_argument("command '" + cfg.command +
                                    "' needs a finite-dimensional (spin) model");
    return make_spin_model(cfg.model_d, cfg.model_coords).model;
}

ThermalGaussianModel thermal_model(const ExperimentConfig& cfg) {
    ThermalGaussianModel m;
    m.m = cfg.upsilon.rows();
    m.k = static_cast<int>(cfg.d_list.size());
    m.n = m.k;
    m.upsilon = cfg.upsilon.cast<Complex>();
    for (const RMat& d : cfg.d_list) m.dupsilon.push_back(d.cast<Complex>());
    m.jacobian = RMat::Identity(m.n, m.k);
    m.beta = RVec::Zero(m.n);
    m.real_upsilon = true;
    m.validate();
    return m;
}

BoundReport compute_bounds(const ExperimentConfig& cfg) {
    if (cfg.model_kind == "thermal") return gaussian_hn_bound(thermal_model(cfg), cfg.weight, cfg.hn);
    return hn_bound(finite_model(cfg), cfg.weight, cfg.hn);
}

// re-checked every time a report is written
void verify_sandwich(const BoundReport& rep) {
    const double tol = 1e-7 * std::max(1.0, std::abs(rep.hel));
    if (!(rep.hel <= rep.hn + tol && rep.hn <= rep.c_at_hel + tol &&
          rep.c_at_hel <= 2.0 * rep.hel + tol))
        throw std::runtime_error("bound sandwich violated at serialization: hel=" +
                                 format_double(rep.hel) + " hn=" + format_double(rep.hn) +
                                 " c_at_hel=" + format_double(rep.c_at_hel));
}

json bounds_json(const BoundReport& rep) {
    verify_sandwich(rep);
    json b;
    b["hel"] = rep.hel;
    b["c_at_hel"] = rep.c_at_hel;
    b["hn"] = rep.hn;
    b["gamma_opt_re"] = mat_json(rep.gamma_opt.re);
    b["gamma_opt_im"] = mat_json(rep.gamma_opt.im);
    b["null_dim"] = rep.diag.null_dim;
    b["iterations"] = rep.diag.iterations;
    b["converged"] = rep.diag.converged;
    b["sandwich_ok"] = true;
    return b;
}

json canonical_json(const CanonicalTransform& ct) {
    json c;
    c["r"] = ct.r;
    c["nu"] = vec_json(ct.nu);
    c["O"] = mat_json(ct.O);
    c["L"] = mat_json(ct.L);
    return c;
}

json run_json(const RunResult& res, bool exact) {
    json r;
    r["N_used"] = res.N_used;
    r["scaled_error"] = res.scaled_error;
    r["scaled_error_se"] = res.scaled_error_se;
    r["beta_true"] = vec_json(res.beta_true);
    r["beta_hat_mean"] = vec_json(res.beta_hat.colwise().mean().transpose());
    r["readout_mean"] = vec_json(res.readout_mean);
    r["readout_cov"] = mat_json(res.readout_cov);
    r["model_mean"] = vec_json(res.model_mean);
    r["model_cov"] = mat_json(res.model_cov);
    r["kappa_t"] = res.kappa_t;
    r["gamma_t"] = res.gamma_t;
    if (exact) {
        r["grid_mean"] = vec_json(res.grid_mean);
        r["grid_cov"] = mat_json(res.grid_cov);
        r["truncation_deficit"] = res.truncation_deficit;
        r["grid_deficit"] = res.grid_deficit;
    }
    return r;
}

RunResult run_one(const FiniteDimModel& model, const MeasurementTarget& tgt,
                  const SchemeConfig& sc, bool exact) {
    if (exact) return exact_evolve_and_measure(model.rho, model.beta, tgt, sc);
    return linearized_simulate(model.rho, model.beta, tgt, sc);
}

double mean_gap(const RunResult& res) {
    const double scale = std::max(res.model_mean.norm(), 1e-12);
    return (res.grid_mean - res.model_mean).norm() / scale;
}

double cov_gap(const RunResult& res) {
    const double scale = std::max(res.model_cov.norm(), 1e-12);
    return (res.grid_cov - res.model_cov).norm() / scale;
}

void simulate_command(const ExperimentConfig& cfg, json& report, std::string& csv) {
    const bool exact = cfg.command == "simulate-exact";
    const FiniteDimModel model = finite_model(cfg);

    if (cfg.sweep_axis.empty()) {
        const MeasurementTarget tgt = build_target(model, cfg.weight, cfg.scheme, cfg.hn);
        const RunResult res = run_one(model, tgt, cfg.scheme, exact);
        json r = run_json(res, exact);
        r["predicted_scaled_error"] = tgt.predicted_scaled_error;
        report["run"] = std::move(r);
        report["bounds"] = bounds_json(tgt.rep);
        return;
    }

    json rows = json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (const double v : cfg.sweep_values) {
        SchemeConfig sc = cfg.scheme;
        if (cfg.sweep_axis == "M") {
            if (v < 1.0 || v != std::floor(v))
                throw std::invalid_argument("sweep over M needs positive integer values");
            sc.M = static_cast<Index>(v);
        } else if (cfg.sweep_axis == "kappa_t") {
            if (!(v > 0.0)) throw std::invalid_argument("sweep over kappa_t needs positive values");
            sc.quarter_period = false;
            sc.t = v / sc.kappa();
        } else if (cfg.sweep_axis == "gdyne_noise") {
            if (!(v > 0.0))
                throw std::invalid_argument("sweep over gdyne_noise needs positive values");
            sc.gdyne_noise = v;
        }
        const MeasurementTarget tgt = build_target(model, cfg.weight, sc, cfg.hn);
        const RunResult res = run_one(model, tgt, sc, exact);

        json row;
        row[cfg.sweep_axis] = v;
        row["scaled_error"] = res.scaled_error;
        row["scaled_error_se"] = res.scaled_error_se;
        row["predicted_scaled_error"] = tgt.predicted_scaled_error;
        std::vector<std::string> cr{format_double(v), format_double(res.scaled_error),
                                    format_double(res.scaled_error_se),
                                    format_double(tgt.predicted_scaled_error)};
        if (exact) {
            row["mean_gap"] = mean_gap(res);
            row["cov_gap"] = cov_gap(res);
            row["truncation_deficit"] = res.truncation_deficit;
            cr.push_back(format_double(mean_gap(res)));
            cr.push_back(format_double(cov_gap(res)));
            cr.push_back(format_double(res.truncation_deficit));
        }
        rows.push_back(std::move(row));
        csv_rows.push_back(std::move(cr));
    }
    report["sweep"] = {{"axis", cfg.sweep_axis}, {"rows", rows}};
    std::vector<std::string> header{cfg.sweep_axis, "scaled_error", "scaled_error_se",
                                    "predicted_scaled_error"};
    if (exact) {
        header.push_back("mean_gap");
        header.push_back("cov_gap");
        header.push_back("truncation_deficit");
    }
    csv = csv_table(header, csv_rows);
}

void protocol_command(const ExperimentConfig& cfg, json& report, std::string& csv) {
    const FiniteDimModel model = finite_model(cfg);
    const BoundReport true_rep = hn_bound(model, cfg.weight, cfg.hn);

    TwoStepOptions opts;
    opts.min_acquisition = cfg.protocol_min_acquisition;
    opts.oracle_acquisition = cfg.protocol_oracle;
    opts.hn = cfg.hn;

    std::vector<double> fs;
    std::vector<Index> ns;
    if (cfg.sweep_axis == "f") {
        for (const double v : cfg.sweep_values) {
            fs.push_back(v);
            ns.push_back(cfg.protocol_n.front());
        }
    } else {
        for (const Index n : cfg.protocol_n) {
            fs.push_back(cfg.protocol_f);
            ns.push_back(n);
        }
    }

    json rows = json::array();
    std::vector<std::vector<std::string>> csv_rows;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const TwoStepResult ts =
            two_step_protocol(model, ns[i], fs[i], cfg.weight, cfg.scheme, opts);
        json row;
        row["N"] = ns[i];
        row["f"] = fs[i];
        row["m_step2"] = ts.m_step2;
        row["scaled_error"] = ts.scaled_error;
        row["scaled_error_se"] = ts.scaled_error_se;
        row["hn"] = true_rep.hn;
        row["beta_check"] = vec_json(ts.beta_check);
        row["acquisition_projected"] = ts.acquisition_projected;
        rows.push_back(std::move(row));
        csv_rows.push_back({std::to_string(ns[i]), format_double(fs[i]),
                            format_double(ts.scaled_error), format_double(ts.scaled_error_se),
                            format_double(true_rep.hn)});
    }
    report["bounds"] = bounds_json(true_rep);
    report["protocol"] = {{"rows", rows}};
    csv = csv_table({"N", "f", "scaled_error", "scaled_error_se", "hn"}, csv_rows);
}

FiniteDimModel validate_fixture_model() {
    return make_spin_model(2, qubit_coords(0.8, 0.0, 0.0)).model;
}

CheckRow check(const std::string& name, bool pass, const std::string& detail) {
    return CheckRow{name, pass, detail};
}

} // namespace

std::vector<CheckRow> validate_fixtures() {
    std::vector<CheckRow> rows;
    const RMat w3 = RMat::Identity(3, 3);

    const FiniteDimModel fixture = validate_fixture_model();
    const BoundReport rep = hn_bound(fixture, w3);
    {
        const bool ok = std::abs(rep.hel - 0.59) < 1e-9 && std::abs(rep.hn - 0.99) < 1e-7 &&
                        std::abs(rep.c_at_hel - 0.99) < 1e-9;
        std::ostringstream os;
        os << "hel=" << format_double(rep.hel) << " hn=" << format_double(rep.hn);
        rows.push_back(check("bounds fixture", ok, os.str()));
    }

    {
        bool ok = true;
        double worst = 0.0;
        for (int trial = 0; trial < 8; ++trial) {
            RngStream rng(7, static_cast<std::uint64_t>(trial));
            const Index d = (trial % 2 == 0) ? 2 : 3;
            CMat a(d, d);
            for (Index r = 0; r < d; ++r)
                for (Index c = 0; c < d; ++c) a(r, c) = Complex(rng.normal(), rng.normal());
            CMat rho = a * a.adjoint();
            rho /= rho.trace();
            std::vector<HermitianOperator> obs;
            if (d == 2) {
                obs = spin_operators(2);
            } else {
                const auto basis = gellmann_basis(3);
                for (int c = 0; c < 3; ++c) obs.emplace_back(HermitianOperator::symmetrized(basis[c]));
            }
            const auto model = make_nonparametric_model(HermitianOperator::symmetrized(rho), obs);
            const auto r = hn_bound(model, RMat::Identity(model.n, model.n));
            const double tol = 1e-7 * std::max(1.0, r.hel);
            const bool chain = r.hel <= r.hn + tol && r.hn <= r.c_at_hel + tol &&
                               r.c_at_hel <= 2.0 * r.hel + tol;
            ok = ok && chain;
            worst = std::max(worst, std::max(r.hel - r.hn, r.c_at_hel - 2.0 * r.hel));
        }
        rows.push_back(check("sandwich random models", ok, "worst slack " + format_double(worst)));
    }

    {
        const CanonicalTransform ct = canonical_transform(rep.gamma_opt.im);
        const double scale = std::sqrt(0.4);
        RVec d(3);
        d << scale, scale, 1.0;
        const RMat col_scales = ct.O.transpose() * ct.L; // L = O diag(scales)
        const bool ok = ct.r == 1 && std::abs(ct.nu(0) - 0.2) < 1e-9 &&
                        (col_scales - RMat(d.asDiagonal())).cwiseAbs().maxCoeff() < 1e-10;
        rows.push_back(check("canonical fixture", ok,
                             "r=" + std::to_string(ct.r) + " nu=" + format_double(ct.nu(0))));
    }

    SchemeConfig sc;
    const MeasurementTarget tgt = build_target(fixture, w3, sc);
    {
        const double gt = sc.gamma() * sc.time();
        const double want = 0.99 + 0.05 / (gt * gt);
        const bool ok = std::abs(tgt.gdyne_v(0) - 0.5) < 1e-6 &&
                        std::abs(tgt.predicted_scaled_error - want) < 1e-9;
        rows.push_back(check("gdyne split fixture", ok,
                             "v=" + format_double(tgt.gdyne_v(0)) +
                                 " predicted=" + format_double(tgt.predicted_scaled_error)));
    }

    {
        SchemeConfig quick = sc;
        quick.samples = 8;
        const RunResult res = linearized_simulate(fixture.rho, fixture.beta, tgt, quick);
        const RVec bh = estimator(res.model_mean, tgt, quick);
        const double resid = (bh - fixture.beta).cwiseAbs().maxCoeff();
        rows.push_back(check("estimator round trip", resid < 1e-12,
                             "residual " + format_double(resid)));
    }

    {
        const double nbar = 0.5;
        const CMat ups = nbar * CMat::Identity(1, 1);
        const auto built = thermal_fock_state(ups, 40);
        const CMat num = number_op(40);
        const double ex = trace_product(built.rho.mat(), num).real();
        const double ex2 = trace_product(built.rho.mat(), (num * num).eval()).real();
        const double var = ex2 - ex * ex;
        const double want = nbar * (1.0 + nbar);
        rows.push_back(check("thermal number variance", std::abs(var - want) < 1e-5,
                             "var=" + format_double(var)));
    }

    return rows;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
    json report;
    report["provenance"] = {{"artifact_version", kArtifactVersion},
                            {"command", cfg.command},
                            {"schema_version", 1},
                            {"seed", cfg.seed},
                            {"config_hash", config_hash(cfg.canonical_text)}};
    report["config"] = json::parse(cfg.canonical_text);
    report["units"] = "shot-noise units, hbar = 1";

    const std::string report_path = cfg.out_dir + "/report.json";
    int code = 0;
    try {
        std::string csv;
        if (cfg.command == "bounds") {
            report["bounds"] = bounds_json(compute_bounds(cfg));
        } else if (cfg.command == "canonical") {
            const BoundReport rep = compute_bounds(cfg);
            report["bounds"] = bounds_json(rep);
            report["canonical"] = canonical_json(canonical_transform(rep.gamma_opt.im));
        } else if (cfg.command == "simulate-linear" || cfg.command == "simulate-exact") {
            simulate_command(cfg, report, csv);
        } else if (cfg.command == "protocol") {
            protocol_command(cfg, report, csv);
        } else if (cfg.command == "baseline") {
            if (!cfg.weight.isIdentity(1e-12))
                throw std::invalid_argument("baseline requires the identity weight");
            const FiniteDimModel model = finite_model(cfg);
            const BaselineResult res =
                separable_baseline(model, cfg.baseline_n, cfg.baseline_reps, cfg.seed);
            const BoundReport rep = hn_bound(model, cfg.weight, cfg.hn);
            report["bounds"] = bounds_json(rep);
            report["baseline"] = {{"analytic", res.analytic},
                                  {"mc", res.mc},
                                  {"mc_se", res.mc_se},
                                  {"batch", res.batch}};
        } else if (cfg.command == "validate") {
            const auto checks = validate_fixtures();
            json rows = json::array();
            bool all = true;
            for (const auto& c : checks) {
                out << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << c.detail << ")\n";
                rows.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
                all = all && c.pass;
            }
            report["validate"] = {{"checks", rows}, {"all_pass", all}};
            if (!all) code = 1;
        }

        atomic_write_file(report_path, report.dump(2) + "\n");
        if (!csv.empty()) atomic_write_file(cfg.out_dir + "/table.csv", csv);
        out << report_path << "\n";
        return code;
    } catch (const std::exception& e) {
        const bool config_side = dynamic_cast<const ConfigError*>(&e) != nullptr ||
                                 dynamic_cast<const std::invalid_argument*>(&e) != nullptr;
        json error = {{"error",
                       {{"type", config_side ? "config" : "engine"},
                        {"message", e.what()},
                        {"command", cfg.command}}}};
        err << error.dump() << "\n";
        try {
            atomic_write_file(cfg.out_dir + "/error.json", error.dump(2) + "\n");
        } catch (...) {
        }
        return config_side ? 2 : 1;
    }
}

} // namespace qmpe
