#include "qmpe/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace qmpe {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
                return it.key() == k;
            }) == allowed.end())
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError("missing key '" + std::string(key) + "' in " + where);
    return obj.at(key);
}

double as_double(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

Index as_index(const json& v, const std::string& where, Index min_value) {
    if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
    const Index n = v.get<Index>();
    if (n < min_value)
        throw ConfigError(where + " must be at least " + std::to_string(min_value));
    return n;
}

bool as_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) throw ConfigError(where + " must be a boolean");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + " must be a string");
    return v.get<std::string>();
}

RVec parse_vector(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a nonempty array");
    RVec out(static_cast<Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out(static_cast<Index>(i)) = as_double(v[i], where + "[" + std::to_string(i) + "]");
    return out;
}

RMat parse_matrix(const json& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError(where + " must be an array of rows");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    if (cols == 0) throw ConfigError(where + " rows must be nonempty arrays");
    RMat out(static_cast<Index>(v.size()), static_cast<Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
        if (!v[r].is_array() || v[r].size() != cols)
            throw ConfigError(where + " must be rectangular");
        for (std::size_t c = 0; c < cols; ++c)
            out(static_cast<Index>(r), static_cast<Index>(c)) =
                as_double(v[r][c], where + " entry");
    }
    return out;
}

void parse_ancilla(const json& v, const std::string& where, AncillaSpec& spec) {
    require_keys(v, where, {"q_mean", "p_mean", "q_var", "p_var", "cutoff"});
    if (v.contains("q_mean")) spec.q_mean = as_double(v["q_mean"], where + ".q_mean");
    if (v.contains("p_mean")) spec.p_mean = as_double(v["p_mean"], where + ".p_mean");
    if (v.contains("q_var")) spec.q_var = as_double(v["q_var"], where + ".q_var");
    if (v.contains("p_var")) spec.p_var = as_double(v["p_var"], where + ".p_var");
    if (v.contains("cutoff")) spec.cutoff = as_index(v["cutoff"], where + ".cutoff", 2);
}

void parse_scheme(const json& v, SchemeConfig& s) {
    require_keys(v, "scheme",
                 {"M", "kappa1", "gamma1", "t", "quarter_period", "pair_init", "x_init",
                  "gdyne_noise", "samples", "gdyne_grid", "gdyne_span", "homodyne_bins",
                  "homodyne_span_factor", "deficit_tol", "exact_dim_budget", "exact_m_cap",
                  "dense_eig_dim", "checkpoints"});
    if (v.contains("M")) s.M = as_index(v["M"], "scheme.M", 1);
    if (v.contains("kappa1")) s.kappa1 = as_double(v["kappa1"], "scheme.kappa1");
    if (v.contains("gamma1")) s.gamma1 = as_double(v["gamma1"], "scheme.gamma1");
    if (v.contains("t")) s.t = as_double(v["t"], "scheme.t");
    if (v.contains("quarter_period"))
        s.quarter_period = as_bool(v["quarter_period"], "scheme.quarter_period");
    if (v.contains("pair_init")) parse_ancilla(v["pair_init"], "scheme.pair_init", s.pair_init);
    if (v.contains("x_init")) parse_ancilla(v["x_init"], "scheme.x_init", s.x_init);
    if (v.contains("gdyne_noise")) s.gdyne_noise = as_double(v["gdyne_noise"], "scheme.gdyne_noise");
    if (v.contains("samples")) s.samples = as_index(v["samples"], "scheme.samples", 1);
    if (v.contains("gdyne_grid")) s.gdyne_grid = as_index(v["gdyne_grid"], "scheme.gdyne_grid", 3);
    if (v.contains("gdyne_span")) s.gdyne_span = as_double(v["gdyne_span"], "scheme.gdyne_span");
    if (v.contains("homodyne_bins"))
        s.homodyne_bins = as_index(v["homodyne_bins"], "scheme.homodyne_bins", 3);
    if (v.contains("homodyne_span_factor"))
        s.homodyne_span_factor = as_double(v["homodyne_span_factor"], "scheme.homodyne_span_factor");
    if (v.contains("deficit_tol")) s.deficit_tol = as_double(v["deficit_tol"], "scheme.deficit_tol");
    if (v.contains("exact_dim_budget"))
        s.exact_dim_budget = as_index(v["exact_dim_budget"], "scheme.exact_dim_budget", 2);
    if (v.contains("exact_m_cap")) s.exact_m_cap = as_index(v["exact_m_cap"], "scheme.exact_m_cap", 1);
    if (v.contains("dense_eig_dim"))
        s.dense_eig_dim = as_index(v["dense_eig_dim"], "scheme.dense_eig_dim", 0);
    if (v.contains("checkpoints")) s.checkpoints = as_index(v["checkpoints"], "scheme.checkpoints", 1);
}

void parse_hn(const json& v, HnOptions& h) {
    require_keys(v, "bounds",
                 {"iterations", "step0_scale", "starts", "pinv_tol", "plateau_rel",
                  "require_convergence"});
    if (v.contains("iterations")) h.iterations = as_index(v["iterations"], "bounds.iterations", 1);
    if (v.contains("step0_scale")) h.step0_scale = as_double(v["step0_scale"], "bounds.step0_scale");
    if (v.contains("starts")) h.starts = static_cast<int>(as_index(v["starts"], "bounds.starts", 1));
    if (v.contains("pinv_tol")) h.pinv_tol = as_double(v["pinv_tol"], "bounds.pinv_tol");
    if (v.contains("plateau_rel")) h.plateau_rel = as_double(v["plateau_rel"], "bounds.plateau_rel");
    if (v.contains("require_convergence"))
        h.require_convergence = as_bool(v["require_convergence"], "bounds.require_convergence");
}

void parse_model(const json& v, ExperimentConfig& cfg) {
    require_keys(v, "model", {"kind", "d", "coords", "bloch", "upsilon", "derivatives"});
    cfg.model_kind = as_string(require(v, "kind", "model"), "model.kind");
    if (cfg.model_kind == "spin") {
        require_keys(v, "model(spin)", {"kind", "d", "coords", "bloch"});
        cfg.model_d = as_index(require(v, "d", "model"), "model.d", 2);
        const bool has_coords = v.contains("coords");
        const bool has_bloch = v.contains("bloch");
        if (has_coords == has_bloch)
            throw ConfigError("model needs exactly one of 'coords' or 'bloch'");
        if (has_bloch) {
            if (cfg.model_d != 2) throw ConfigError("model.bloch is only defined for d = 2");
            const RVec w = parse_vector(v["bloch"], "model.bloch");
            if (w.size() != 3) throw ConfigError("model.bloch must have 3 entries");
            cfg.model_coords = qubit_coords(w(0), w(1), w(2));
        } else {
            cfg.model_coords = parse_vector(v["coords"], "model.coords");
            if (cfg.model_coords.size() != cfg.model_d * cfg.model_d - 1)
                throw ConfigError("model.coords must have d^2 - 1 entries");
        }
    } else if (cfg.model_kind == "thermal") {
        require_keys(v, "model(thermal)", {"kind", "upsilon", "derivatives"});
        cfg.upsilon = parse_matrix(require(v, "upsilon", "model"), "model.upsilon");
        if (cfg.upsilon.rows() != cfg.upsilon.cols())
            throw ConfigError("model.upsilon must be square");
        const json& ders = require(v, "derivatives", "model");
        if (!ders.is_array() || ders.empty())
            throw ConfigError("model.derivatives must be a nonempty array of matrices");
        for (std::size_t i = 0; i < ders.size(); ++i) {
            RMat d = parse_matrix(ders[i], "model.derivatives[" + std::to_string(i) + "]");
            if (d.rows() != cfg.upsilon.rows() || d.cols() != cfg.upsilon.cols())
                throw ConfigError("model.derivatives entries must match upsilon's shape");
            cfg.d_list.push_back(std::move(d));
        }
    } else {
        throw ConfigError("model.kind must be 'spin' or 'thermal'");
    }
}

json parse_value_token(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text); // bare strings stay strings
    }
}

void apply_override(json& root, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like key=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const json value = parse_value_token(spec.substr(eq + 1));

    std::vector<std::string> tokens;
    std::stringstream ss(path);
    std::string tk;
    while (std::getline(ss, tk, '.')) {
        if (tk.empty()) throw ConfigError("override path has an empty segment: " + path);
        tokens.push_back(tk);
    }

    json* cur = &root;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool last = i + 1 == tokens.size();
        const std::string& t = tokens[i];
        const bool numeric = std::all_of(t.begin(), t.end(),
                                         [](unsigned char c) { return std::isdigit(c); });
        if (cur->is_array()) {
            if (!numeric) throw ConfigError("override path indexes an array with '" + t + "'");
            const std::size_t idx = std::stoul(t);
            if (idx >= cur->size())
                throw ConfigError("override index out of range in: " + path);
            if (last)
                (*cur)[idx] = value;
            else
                cur = &(*cur)[idx];
        } else if (cur->is_object()) {
            if (last) {
                (*cur)[t] = value;
            } else {
                if (!cur->contains(t)) (*cur)[t] = json::object();
                cur = &(*cur)[t];
            }
        } else {
            throw ConfigError("override path crosses a scalar at '" + t + "' in: " + path);
        }
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

ExperimentConfig resolve(json j, const std::string& base_dir) {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    require_keys(j, "config",
                 {"schema_version", "command", "model", "weight", "scheme", "bounds", "protocol",
                  "baseline", "sweep", "seed", "out", "threads"});

    const Index version = as_index(require(j, "schema_version", "config"), "schema_version", 1);
    if (version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(version));

    ExperimentConfig cfg;
    cfg.command = as_string(require(j, "command", "config"), "command");
    static const char* commands[] = {"bounds",   "canonical", "simulate-exact", "simulate-linear",
                                     "protocol", "baseline",  "validate"};
    if (std::find_if(std::begin(commands), std::end(commands), [&](const char* c) {
            return cfg.command == c;
        }) == std::end(commands))
        throw ConfigError("unknown command '" + cfg.command + "'");

    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() || j["seed"].get<std::int64_t>() < 0)
            throw ConfigError("seed must be a nonnegative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("out")) cfg.out_dir = as_string(j["out"], "out");
    if (j.contains("threads"))
        cfg.threads = static_cast<int>(as_index(j["threads"], "threads", 1));

    if (j.contains("model")) {
        if (j["model"].is_string()) {
            // inline the referenced file so the config hash covers the actual model
            std::filesystem::path p(j["model"].get<std::string>());
            if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
            j["model"] = read_json_file(p.string());
        }
        if (!j["model"].is_object()) throw ConfigError("model must be an object or a file path");
        parse_model(j["model"], cfg);
    } else if (cfg.command != "validate") {
        throw ConfigError("missing key 'model' in config");
    }

    if (j.contains("scheme")) parse_scheme(j["scheme"], cfg.scheme);
    if (j.contains("bounds")) parse_hn(j["bounds"], cfg.hn);

    if (j.contains("protocol")) {
        const json& p = j["protocol"];
        require_keys(p, "protocol", {"n", "n_grid", "f", "min_acquisition", "oracle"});
        if (p.contains("n") && p.contains("n_grid"))
            throw ConfigError("protocol needs at most one of 'n' and 'n_grid'");
        if (p.contains("n")) cfg.protocol_n = {as_index(p["n"], "protocol.n", 1)};
        if (p.contains("n_grid")) {
            if (!p["n_grid"].is_array() || p["n_grid"].empty())
                throw ConfigError("protocol.n_grid must be a nonempty array");
            cfg.protocol_n.clear();
            for (std::size_t i = 0; i < p["n_grid"].size(); ++i)
                cfg.protocol_n.push_back(as_index(p["n_grid"][i], "protocol.n_grid entry", 1));
        }
        if (p.contains("f")) cfg.protocol_f = as_double(p["f"], "protocol.f");
        if (p.contains("min_acquisition"))
            cfg.protocol_min_acquisition = as_index(p["min_acquisition"], "protocol.min_acquisition", 1);
        if (p.contains("oracle")) cfg.protocol_oracle = as_bool(p["oracle"], "protocol.oracle");
    }

    if (j.contains("baseline")) {
        const json& b = j["baseline"];
        require_keys(b, "baseline", {"n", "repetitions"});
        if (b.contains("n")) cfg.baseline_n = as_index(b["n"], "baseline.n", 1);
        if (b.contains("repetitions"))
            cfg.baseline_reps = as_index(b["repetitions"], "baseline.repetitions", 1);
    }

    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        require_keys(s, "sweep", {"axis", "values"});
        cfg.sweep_axis = as_string(require(s, "axis", "sweep"), "sweep.axis");
        static const char* axes[] = {"M", "kappa_t", "f", "gdyne_noise"};
        if (std::find_if(std::begin(axes), std::end(axes), [&](const char* a) {
                return cfg.sweep_axis == a;
            }) == std::end(axes))
            throw ConfigError("sweep.axis must be one of M, kappa_t, f, gdyne_noise");
        const json& vals = require(s, "values", "sweep");
        if (!vals.is_array() || vals.empty())
            throw ConfigError("sweep.values must be a nonempty array");
        for (std::size_t i = 0; i < vals.size(); ++i)
            cfg.sweep_values.push_back(as_double(vals[i], "sweep.values entry"));

        const bool simulate =
            cfg.command == "simulate-linear" || cfg.command == "simulate-exact";
        if (cfg.sweep_axis == "f" && cfg.command != "protocol")
            throw ConfigError("sweep over f requires the protocol command");
        if (cfg.sweep_axis != "f" && !simulate)
            throw ConfigError("sweep over " + cfg.sweep_axis + " requires a simulate command");
    }

    // weight needs the parameter count, known once the model kind is fixed
    Index n = 0;
    if (cfg.model_kind == "spin")
        n = cfg.model_d * cfg.model_d - 1;
    else if (cfg.model_kind == "thermal")
        n = static_cast<Index>(cfg.d_list.size());
    if (n > 0) {
        if (j.contains("weight") && !(j["weight"].is_string())) {
            cfg.weight = parse_matrix(j["weight"], "weight");
            if (cfg.weight.rows() != n || cfg.weight.cols() != n)
                throw ConfigError("weight must be " + std::to_string(n) + " x " + std::to_string(n));
            if ((cfg.weight - cfg.weight.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw ConfigError("weight must be symmetric");
        } else {
            if (j.contains("weight") && as_string(j["weight"], "weight") != "identity")
                throw ConfigError("weight must be a matrix or the string 'identity'");
            cfg.weight = RMat::Identity(n, n);
        }
    }

    cfg.scheme.seed = cfg.seed;
    cfg.hn.seed = cfg.seed;
    cfg.canonical_text = j.dump();
    return cfg;
}

} // namespace

ExperimentConfig parse_experiment_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return resolve(std::move(j), "");
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides,
                                        const std::uint64_t* seed_override,
                                        const std::string* out_override,
                                        const int* threads_override) {
    json j = read_json_file(path);
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (const auto& ov : overrides) apply_override(j, ov);
    if (seed_override) j["seed"] = *seed_override;
    if (out_override) j["out"] = *out_override;
    if (threads_override) j["threads"] = *threads_override;
    const std::string base = std::filesystem::path(path).parent_path().string();
    return resolve(std::move(j), base);
}

} // namespace qmpe
