#include "perfrl/errors.hpp"
#include "perfrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace perfrl {

using nlohmann::json;

namespace {

std::string num(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

/// A JSON object being read; remembers which keys were consumed so leftovers
/// can be rejected.
class Fields {
public:
    Fields(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object())
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key);
    }

    const json& at(const std::string& key) {
        if (!has(key))
            throw ConfigError(path(key), "required field is missing");
        return node_.at(key);
    }

    double number(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number())
            throw ConfigError(path(key), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x))
            throw ConfigError(path(key), "must be finite");
        return x;
    }

    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::size_t count(const std::string& key) {
        const json& v = at(key);
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw ConfigError(path(key), "expected a nonnegative integer");
        return v.get<std::size_t>();
    }

    std::size_t count(const std::string& key, std::size_t fallback) { return has(key) ? count(key) : fallback; }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        if (!has(key))
            return fallback;
        const json& v = node_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw ConfigError(path(key), "expected a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    bool flag(const std::string& key, bool fallback) {
        if (!has(key))
            return fallback;
        const json& v = node_.at(key);
        if (!v.is_boolean())
            throw ConfigError(path(key), "expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& key, const std::string& fallback) {
        if (!has(key))
            return fallback;
        const json& v = node_.at(key);
        if (!v.is_string())
            throw ConfigError(path(key), "expected a string");
        return v.get<std::string>();
    }

    std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> allowed) {
        const std::string v = text(key, fallback);
        for (const char* a : allowed)
            if (v == a)
                return v;
        std::string list;
        for (const char* a : allowed)
            list += (list.empty() ? "" : ", ") + std::string(a);
        throw ConfigError(path(key), "unknown value \"" + v + "\" (expected one of " + list + ")");
    }

    Fields object(const std::string& key) { return Fields(at(key), path(key)); }

    void finish() const {
        for (const auto& item : node_.items())
            if (!seen_.contains(item.key()))
                throw ConfigError(path(item.key()), "unknown key");
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::vector<double> number_array(const json& v, const std::string& path, std::size_t expected) {
    if (!v.is_array() || v.size() != expected)
        throw ConfigError(path, "expected an array of " + std::to_string(expected) + " numbers");
    std::vector<double> out;
    out.reserve(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        if (!v[i].is_number())
            throw ConfigError(path + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

Table number_table(const json& v, const std::string& path, std::size_t rows, std::size_t cols) {
    if (!v.is_array() || v.size() != rows)
        throw ConfigError(path, "expected " + std::to_string(rows) + " rows");
    Table out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = number_array(v[r], path + "[" + std::to_string(r) + "]", cols);
        std::ranges::copy(row, out.row(r).begin());
    }
    return out;
}

std::vector<double> kernel_array(const json& v, const std::string& path, std::size_t ns, std::size_t na) {
    if (!v.is_array() || v.size() != ns)
        throw ConfigError(path, "expected " + std::to_string(ns) + " state blocks of shape [|A|][|S|]");
    std::vector<double> flat;
    flat.reserve(ns * na * ns);
    for (std::size_t s = 0; s < ns; ++s) {
        const Table block = number_table(v[s], path + "[" + std::to_string(s) + "]", na, ns);
        flat.insert(flat.end(), block.flat().begin(), block.flat().end());
    }
    return flat;
}

EnvConfig parse_env(Fields f) {
    EnvConfig env;
    env.rule = f.choice("rule", "affine_mix", {"fixed", "affine_mix", "interpolated"});
    env.n_states = f.count("n_states");
    if (env.n_states == 0)
        throw ConfigError(f.path("n_states"), "must be at least 1");
    env.n_actions = f.count("n_actions");
    if (env.n_actions < 2)
        throw ConfigError(f.path("n_actions"), "must be at least 2");
    env.gamma = f.number("gamma");
    if (!(env.gamma > 0.0 && env.gamma < 1.0))
        throw ConfigError(f.path("gamma"), "must lie in (0, 1), got " + num(env.gamma));
    if (f.has("rho"))
        env.rho = number_array(f.at("rho"), f.path("rho"), env.n_states);
    if (f.has("kernel"))
        env.kernel = kernel_array(f.at("kernel"), f.path("kernel"), env.n_states, env.n_actions);
    if (f.has("reward"))
        env.reward = number_table(f.at("reward"), f.path("reward"), env.n_states, env.n_actions);
    env.random_seed = f.seed("random_seed", 0);
    if (env.rule == "affine_mix" && (env.kernel || env.reward))
        throw ConfigError(f.path("rule"), "affine_mix takes no kernel or reward tables");
    if (env.rule == "interpolated") {
        env.kappa = f.number("kappa");
        if (!(env.kappa >= 0.0 && env.kappa <= 1.0))
            throw ConfigError(f.path("kappa"), "must lie in [0, 1], got " + num(env.kappa));
    }
    if (f.has("constants")) {
        Fields c = f.object("constants");
        SensitivityConstants sc;
        sc.eps_p = c.number("eps_p", 0.0);
        sc.eps_r = c.number("eps_r", 0.0);
        sc.s_p = c.number("s_p", 0.0);
        sc.s_r = c.number("s_r", 0.0);
        sc.d_min = c.number("d_min");
        c.finish();
        try {
            sc.validate();
        } catch (const PreconditionError& e) {
            throw ConfigError(f.path("constants"), e.what());
        }
        env.constants = sc;
    }
    if (f.has("estimate")) {
        Fields e = f.object("estimate");
        env.estimate_pairs = e.count("pairs", 200);
        env.estimate_samples = e.count("samples", 200);
        e.finish();
        if (env.estimate_pairs == 0 || env.estimate_samples == 0)
            throw ConfigError(f.path("estimate"), "pairs and samples must be at least 1");
    }
    f.finish();
    return env;
}

RegCoefficient parse_reg(Fields f) {
    const std::string kind = f.choice("kind", "entropy", {"entropy", "quadratic"});
    const double lambda = f.number("lambda");
    if (!(lambda >= 0.0))
        throw ConfigError(f.path("lambda"), "must be nonnegative, got " + num(lambda));
    f.finish();
    return kind == "entropy" ? RegCoefficient::entropy(lambda) : RegCoefficient::quadratic(lambda);
}

FwConfig parse_zfw(Fields f) {
    FwConfig c;
    c.iterations = f.count("iterations");
    c.batch = f.count("batch");
    c.step = f.number("step");
    c.floor = f.number("floor");
    c.probe = f.number("probe");
    c.eval_noise = f.number("eval_noise", 0.0);
    c.sampler = f.choice("sampler", "gaussian", {"gaussian", "sphere"}) == "gaussian" ? DirectionSampler::gaussian
                                                                                       : DirectionSampler::sphere;
    c.record_oracle_gap = f.flag("record_oracle_gap", false);
    f.finish();
    return c;
}

AlgorithmConfig parse_algorithm(Fields f, std::size_t n_states, std::size_t n_actions) {
    AlgorithmConfig a;
    a.run = f.choice("run", "zfw", {"zfw", "retraining"});
    const bool has_zfw = f.has("zfw");
    const bool has_theory = f.has("theory");
    if (has_zfw && has_theory)
        throw ConfigError(f.path("theory"), "give either zfw or theory, not both");
    a.has_zfw = has_zfw;
    if (has_zfw) {
        a.zfw = parse_zfw(f.object("zfw"));
        try {
            a.zfw.validate(n_actions);
        } catch (const PreconditionError& e) {
            throw ConfigError(f.path("zfw"), e.what());
        }
    }
    if (has_theory) {
        Fields t = f.object("theory");
        TheoryRequest req;
        req.target_eps = t.number("target_eps");
        req.fail_prob = t.number("fail_prob");
        t.finish();
        if (!(req.target_eps > 0.0))
            throw ConfigError(t.path("target_eps"), "must be positive");
        if (!(req.fail_prob > 0.0 && req.fail_prob < 1.0))
            throw ConfigError(t.path("fail_prob"), "must lie in (0, 1)");
        a.theory = req;
    }
    if (a.run == "zfw" && !has_zfw && !has_theory)
        throw ConfigError(f.path("zfw"), "required when run is zfw (or give a theory block)");
    if (f.has("retraining")) {
        Fields r = f.object("retraining");
        a.retraining.outer_iters = r.count("outer_iters");
        a.retraining.inner_iters = r.count("inner_iters");
        a.retraining.inner_step = r.number("inner_step");
        r.finish();
        if (a.retraining.inner_iters == 0)
            throw ConfigError(r.path("inner_iters"), "must be at least 1");
        if (!(a.retraining.inner_step > 0.0))
            throw ConfigError(r.path("inner_step"), "must be positive");
    } else if (a.run == "retraining") {
        throw ConfigError(f.path("retraining"), "required when run is retraining");
    }
    if (f.has("init")) {
        const json& v = f.at("init");
        if (v.is_string()) {
            if (v.get<std::string>() != "uniform")
                throw ConfigError(f.path("init"), "expected \"uniform\" or a policy table");
        } else {
            Table t = number_table(v, f.path("init"), n_states, n_actions);
            try {
                (void)Policy(t);
            } catch (const PreconditionError& e) {
                throw ConfigError(f.path("init"), e.what());
            }
            a.init = std::move(t);
        }
    }
    f.finish();
    return a;
}

CheckConfig parse_checks(Fields f) {
    CheckConfig c;
    if (f.has("suites")) {
        const json& v = f.at("suites");
        if (!v.is_array())
            throw ConfigError(f.path("suites"), "expected an array of suite names");
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string p = f.path("suites") + "[" + std::to_string(i) + "]";
            if (!v[i].is_string())
                throw ConfigError(p, "expected a string");
            const std::string name = v[i].get<std::string>();
            if (name != "dominance" && name != "lower_bound" && name != "prop2" && name != "po_gap")
                throw ConfigError(p, "unknown suite \"" + name + "\"");
            c.suites.push_back(name);
        }
    }
    c.pairs = f.count("pairs", c.pairs);
    c.policies = f.count("policies", c.policies);
    if (f.has("debug_mu"))
        c.debug_mu = f.number("debug_mu");
    f.finish();
    return c;
}

OutputConfig parse_output(Fields f) {
    OutputConfig o;
    o.dir = f.text("dir", o.dir);
    o.prefix = f.text("prefix", o.prefix);
    o.record_timing = f.flag("record_timing", false);
    f.finish();
    if (o.prefix.empty())
        throw ConfigError(f.path("prefix"), "must not be empty");
    return o;
}

} // namespace

ExperimentConfig parse_config(const json& doc) {
    Fields root(doc, "");
    ExperimentConfig cfg;
    cfg.raw = doc;
    cfg.env = parse_env(root.object("env"));
    cfg.reg = parse_reg(root.object("reg"));
    if (root.has("algorithm"))
        cfg.algorithm = parse_algorithm(root.object("algorithm"), cfg.env.n_states, cfg.env.n_actions);
    if (root.has("checks"))
        cfg.checks = parse_checks(root.object("checks"));
    cfg.seed = root.seed("seed", 0);
    if (root.has("output"))
        cfg.output = parse_output(root.object("output"));
    root.finish();

    cfg.algorithm.zfw.seed = cfg.seed;
    cfg.algorithm.zfw.record_timing = cfg.output.record_timing;
    cfg.algorithm.retraining.record_timing = cfg.output.record_timing;
    if (cfg.algorithm.run == "retraining" && cfg.reg.kind != RegKind::entropy)
        throw ConfigError("reg.kind", "repeated retraining needs the entropy regularizer");
    if (cfg.algorithm.retraining.inner_step * cfg.reg.lambda / (1.0 - cfg.env.gamma) >= 1.0)
        throw ConfigError("algorithm.retraining.inner_step", "inner_step * lambda / (1 - gamma) must be below 1");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("<file>", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

PerformativeEnv build_env(const EnvConfig& cfg) {
    try {
        MdpBase base = cfg.rho ? MdpBase::make(cfg.n_states, cfg.n_actions, cfg.gamma, *cfg.rho)
                               : MdpBase::make(cfg.n_states, cfg.n_actions, cfg.gamma);
        std::optional<SensitivityConstants> declared = cfg.constants;
        if (cfg.rule == "affine_mix")
            return PerformativeEnv(std::move(base), rules::AffineMix{}, declared);

        SeededRng rng(cfg.random_seed);
        TransitionKernel kernel = cfg.kernel ? TransitionKernel(cfg.n_states, cfg.n_actions, *cfg.kernel)
                                             : sample_kernel(cfg.n_states, cfg.n_actions, rng);
        RewardTable reward = cfg.reward ? RewardTable(*cfg.reward) : sample_reward(cfg.n_states, cfg.n_actions, rng);
        if (cfg.rule == "fixed")
            return PerformativeEnv(std::move(base), rules::Fixed{std::move(kernel), std::move(reward)}, declared);
        return PerformativeEnv(std::move(base), rules::Interpolated{std::move(kernel), std::move(reward), cfg.kappa},
                               declared);
    } catch (const PreconditionError& e) {
        throw ConfigError("env", e.what());
    }
}

Policy initial_policy(const ExperimentConfig& cfg) {
    if (cfg.algorithm.init)
        return Policy(*cfg.algorithm.init);
    return Policy::uniform(cfg.env.n_states, cfg.env.n_actions);
}

SensitivityConstants constants_for(const ExperimentConfig& cfg, const PerformativeEnv& env) {
    return cfg.env.constants ? *cfg.env.constants : certified_constants(env);
}

FwConfig resolve_fw_config(const ExperimentConfig& cfg, const PerformativeEnv& env) {
    if (!cfg.algorithm.theory)
        return cfg.algorithm.zfw;
    const SensitivityConstants sc = constants_for(cfg, env);
    try {
        const TheoryConstants tc = compute_constants(sc, env.base(), cfg.reg);
        const TheorySchedule ts = theory_hyperparams(tc, sc, env.base(), cfg.reg, cfg.algorithm.theory->target_eps,
                                                     cfg.algorithm.theory->fail_prob);
        FwConfig fw = cfg.algorithm.zfw;
        fw.floor = ts.floor;
        fw.step = ts.step;
        fw.iterations = ts.iterations;
        fw.probe = ts.probe;
        fw.eval_noise = ts.eval_noise;
        fw.batch = ts.batch;
        fw.validate(env.base().n_actions);
        return fw;
    } catch (const std::logic_error& e) {
        throw ConfigError("algorithm.theory", e.what());
    }
}

} // namespace perfrl
