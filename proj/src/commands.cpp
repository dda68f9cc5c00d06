#include "perfrl/errors.hpp"
#include "perfrl/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace perfrl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Runs a command body, mapping exceptions to exit codes.
template <class Body>
int guarded(std::ostream& err, Body&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

/// Everything derived from the config before any computation starts.
/// Precondition and domain failures here are reported as config errors.
struct Prepared {
    ExperimentConfig cfg;
    PerformativeEnv env;
    Policy init;
    fs::path out_dir;
};

Prepared prepare(const CommandOptions& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    PerformativeEnv env = build_env(cfg.env);
    Policy init = initial_policy(cfg);
    fs::path dir = opts.out_dir ? fs::path(*opts.out_dir) : fs::path(cfg.output.dir);
    return {std::move(cfg), std::move(env), std::move(init), std::move(dir)};
}

template <class F>
auto as_config_error(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const std::logic_error& e) {
        throw ConfigError(path, e.what());
    }
}

FwConfig prepared_fw(const Prepared& p) {
    if (!p.cfg.algorithm.has_zfw && !p.cfg.algorithm.theory)
        throw ConfigError("algorithm.zfw", "a zfw or theory block is required");
    FwConfig fw = resolve_fw_config(p.cfg, p.env);
    if (!p.init.in_floored(fw.floor - kFloorTol))
        throw ConfigError("algorithm.init", "initial policy lies outside the floored simplex");
    return fw;
}

json fw_json(const FwConfig& fw) {
    return {{"iterations", fw.iterations}, {"batch", fw.batch},  {"step", fw.step},
            {"floor", fw.floor},           {"probe", fw.probe},  {"eval_noise", fw.eval_noise},
            {"seed", fw.seed},             {"sampler", fw.sampler == DirectionSampler::gaussian ? "gaussian" : "sphere"}};
}

json retraining_json(const RetrainingConfig& rc) {
    return {{"outer_iters", rc.outer_iters}, {"inner_iters", rc.inner_iters}, {"inner_step", rc.inner_step}};
}

fs::path output_file(const Prepared& p, const std::string& suffix) {
    fs::create_directories(p.out_dir);
    return p.out_dir / (p.cfg.output.prefix + suffix);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

void write_trace(const fs::path& path, const std::vector<IterationRecord>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    write_trace_csv(out, trace);
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

/// Final and output values of a finished run.
json result_json(const PerformativeEnv& env, const RegCoefficient& reg, const RunResult& r) {
    const IterationRecord& chosen = r.trace.at(r.output_index);
    json j = {{"iterations", r.trace.size()},
              {"final_v_reg", performative_value(env, r.final_policy, reg)},
              {"final_v_unreg", performative_value(env, r.final_policy, reg.unregularized())},
              {"output_index", r.output_index},
              {"output_v_reg", chosen.v_reg},
              {"output_v_unreg", chosen.v_unreg},
              {"output_fw_gap", chosen.fw_gap},
              {"final_policy", to_json(r.final_policy)},
              {"output_policy", to_json(r.output_policy)}};
    if (!r.oracle_gaps.empty())
        j["oracle_gaps"] = r.oracle_gaps;
    return j;
}

/// Sensitivity and theory constants for the summary, when they are defined.
json constants_json(const Prepared& p) {
    if (p.cfg.reg.kind != RegKind::entropy)
        return nullptr;
    const SensitivityConstants sc = constants_for(p.cfg, p.env);
    return {{"source", p.cfg.env.constants ? "declared" : "certified"},
            {"sensitivity", to_json(sc)},
            {"theory", to_json(compute_constants(sc, p.env.base(), p.cfg.reg))}};
}

json base_summary(const Prepared& p, const char* command) {
    return {{"version", kVersion}, {"command", command}, {"config", p.cfg.raw}, {"threads", max_threads()}};
}

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

RunResult run_retraining(const Prepared& p) {
    return repeated_retraining(p.env, p.cfg.reg, p.cfg.algorithm.retraining, p.init);
}

} // namespace

int cmd_run(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const bool zfw = p.cfg.algorithm.run == "zfw";
        const FwConfig fw = zfw ? prepared_fw(p) : FwConfig{};
        const json constants = as_config_error("env.constants", [&] { return constants_json(p); });

        const auto start = Clock::now();
        const RunResult result = zfw ? run_zfw(p.env, p.cfg.reg, fw, p.init) : run_retraining(p);
        const double wall = ms_since(start);

        const fs::path csv = output_file(p, "_trace.csv");
        write_trace(csv, result.trace);
        json summary = base_summary(p, "run");
        summary["algorithm"] = p.cfg.algorithm.run;
        summary["resolved"] = zfw ? fw_json(fw) : retraining_json(p.cfg.algorithm.retraining);
        summary["result"] = result_json(p.env, p.cfg.reg, result);
        summary["wall_time_ms"] = wall;
        summary["constants"] = constants;
        if (zfw && p.cfg.algorithm.theory) {
            const SensitivityConstants sc = constants_for(p.cfg, p.env);
            const TheoryConstants tc = compute_constants(sc, p.env.base(), p.cfg.reg);
            summary["schedule"] = to_json(theory_hyperparams(tc, sc, p.env.base(), p.cfg.reg,
                                                             p.cfg.algorithm.theory->target_eps,
                                                             p.cfg.algorithm.theory->fail_prob));
        }
        const fs::path json_path = output_file(p, "_summary.json");
        write_text(json_path, summary.dump(2) + "\n");
        out << "trace: " << csv.string() << "\nsummary: " << json_path.string() << '\n';
        return int(kExitOk);
    });
}

int cmd_constants(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        json doc = {{"version", kVersion}, {"command", "constants"}};
        as_config_error("reg", [&] {
            const SensitivityConstants sc = constants_for(p.cfg, p.env);
            const TheoryConstants tc = compute_constants(sc, p.env.base(), p.cfg.reg);
            doc["source"] = p.cfg.env.constants ? "declared" : "certified";
            doc["sensitivity"] = to_json(sc);
            doc["theory"] = to_json(tc);
            if (p.cfg.algorithm.theory)
                doc["schedule"] = to_json(theory_hyperparams(tc, sc, p.env.base(), p.cfg.reg,
                                                             p.cfg.algorithm.theory->target_eps,
                                                             p.cfg.algorithm.theory->fail_prob));
            return 0;
        });
        if (p.cfg.env.estimate_pairs > 0) {
            const SeededRng rng(p.cfg.seed);
            SensitivityConstants est = estimate_sensitivity(p.env, p.cfg.env.estimate_pairs, rng.stream(0));
            est.d_min = estimate_d_min(p.env, p.cfg.env.estimate_samples, rng.stream(1));
            json e = {{"estimated", true},
                      {"eps_p", est.eps_p},
                      {"eps_r", est.eps_r},
                      {"d_min", est.d_min},
                      {"pairs", p.cfg.env.estimate_pairs},
                      {"samples", p.cfg.env.estimate_samples}};
            doc["estimated"] = e;
        }
        out << doc.dump(2) << '\n';
        return int(kExitOk);
    });
}

namespace {

bool grid_feasible(const MdpBase& base) { return base.n_states * (base.n_actions - 1) <= 3; }

void merge(ViolationReport& into, const ViolationReport& part, const std::string& label) {
    into.n_checked += part.n_checked;
    into.n_skipped += part.n_skipped;
    into.n_violations += part.n_violations;
    if (part.n_checked)
        into.max_excess = std::max(into.max_excess, part.max_excess);
    for (Violation v : part.violations) {
        v.where = label + " " + v.where;
        into.violations.push_back(std::move(v));
    }
    for (const std::string& note : part.notes)
        into.notes.push_back(label + ": " + note);
}

/// Smallest floor a candidate run uses; below it the probe radius drowns in round-off.
constexpr double kCandidateFloorMin = 1e-6;

/// Near-stationary candidates: a 0-FW run on floor `floor`, every iterate kept.
RunResult stationary_candidates(const Prepared& p, double floor) {
    FwConfig fw;
    fw.iterations = 100;
    fw.batch = 100;
    fw.step = 0.01;
    if (p.cfg.algorithm.has_zfw)
        fw = p.cfg.algorithm.zfw;
    else if (p.cfg.algorithm.theory)
        fw = resolve_fw_config(p.cfg, p.env);
    fw.floor = std::min(floor, 1.0 / static_cast<double>(p.env.base().n_actions));
    fw.probe = std::min(fw.probe, 0.5 * fw.floor);
    fw.keep_iterates = true;
    fw.record_timing = false;
    return run_zfw(p.env, p.cfg.reg, fw, Policy::uniform(p.env.base().n_states, p.env.base().n_actions));
}

} // namespace

int cmd_check(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const MdpBase& base = p.env.base();
        if (p.cfg.reg.kind != RegKind::entropy || !(p.cfg.reg.lambda > 0.0))
            throw ConfigError("reg.lambda", "checkers need entropy regularization with lambda > 0");
        std::vector<std::string> suites = p.cfg.checks.suites;
        if (suites.empty()) {
            suites = {"dominance", "lower_bound", "prop2"};
            if (grid_feasible(base))
                suites.push_back("po_gap");
        }
        const bool needs_run = std::ranges::any_of(suites, [](const std::string& s) { return s != "dominance"; });
        const bool has_run = p.cfg.algorithm.has_zfw || p.cfg.algorithm.theory.has_value();
        if (needs_run && has_run)
            (void)prepared_fw(p);
        if (std::ranges::find(suites, "po_gap") != suites.end() && !grid_feasible(base))
            throw ConfigError("checks.suites", "po_gap needs |S|(|A|-1) <= 3");

        const SensitivityConstants sc = constants_for(p.cfg, p.env);
        TheoryConstants tc = as_config_error("reg", [&] { return compute_constants(sc, base, p.cfg.reg); });
        json doc = base_summary(p, "check");
        doc["constants"] = {{"sensitivity", to_json(sc)}, {"theory", to_json(tc)}};
        if (p.cfg.checks.debug_mu) {
            tc.mu = *p.cfg.checks.debug_mu;
            doc["debug_mu"] = tc.mu;
        }
        if (!tc.pi_min)
            throw ConfigError("reg.lambda", "checkers need pi_min");
        const double pi_min = *tc.pi_min;
        const SeededRng rng(p.cfg.seed);
        const auto n_policies = p.cfg.checks.policies;

        json reports = json::array();
        std::size_t total = 0;
        for (const std::string& suite : suites) {
            ViolationReport report;
            report.check = suite;
            if (suite == "dominance") {
                report = check_gradient_dominance(p.env, p.cfg.reg, tc, p.cfg.checks.pairs, rng.stream(1));
            } else if (suite == "lower_bound") {
                merge(report, check_policy_lower_bound(p.env, p.cfg.reg, tc, Policy::uniform(base.n_states, base.n_actions)),
                      "uniform");
                const SeededRng sub = rng.stream(2);
                for (std::size_t i = 0; i < n_policies; ++i) {
                    SeededRng local = sub.stream(i);
                    const Policy pi = sample_policy(base.n_states, base.n_actions, local, 1e-4);
                    merge(report, check_policy_lower_bound(p.env, p.cfg.reg, tc, pi), "random " + std::to_string(i));
                }
                if (has_run) {
                    const RunResult r = run_zfw(p.env, p.cfg.reg, prepared_fw(p), p.init);
                    merge(report, check_policy_lower_bound(p.env, p.cfg.reg, tc, r.output_policy), "zfw output");
                    merge(report, check_policy_lower_bound(p.env, p.cfg.reg, tc, r.final_policy), "zfw final");
                }
            } else if (suite == "prop2") {
                const double floor = pi_min / 3.0;
                RunResult r;
                if (floor > 0.0 || !has_run) {
                    r = stationary_candidates(p, std::max(floor, kCandidateFloorMin));
                } else {
                    report.notes.push_back("pi_min underflows; the floored domain is the full simplex and "
                                           "candidates come from the configured run");
                    FwConfig fw = prepared_fw(p);
                    fw.keep_iterates = true;
                    r = run_zfw(p.env, p.cfg.reg, fw, p.init);
                }
                for (std::size_t t = 0; t < r.iterates.size(); ++t)
                    merge(report, check_prop2(p.env, p.cfg.reg, tc, r.iterates[t], floor),
                          "iterate " + std::to_string(t));
            } else if (suite == "po_gap") {
                double best = 0.0;
                const Policy opt = grid_optimum(p.env, p.cfg.reg, &best);
                std::vector<std::pair<std::string, Policy>> candidates = {
                    {"uniform", Policy::uniform(base.n_states, base.n_actions)}};
                if (has_run) {
                    const RunResult r = run_zfw(p.env, p.cfg.reg, prepared_fw(p), p.init);
                    candidates.emplace_back("zfw output", r.output_policy);
                    candidates.emplace_back("zfw final", r.final_policy);
                }
                const SeededRng sub = rng.stream(3);
                for (std::size_t i = 0; i < std::min<std::size_t>(n_policies, 20); ++i) {
                    SeededRng local = sub.stream(i);
                    candidates.emplace_back("random " + std::to_string(i),
                                            sample_policy(base.n_states, base.n_actions, local, 1e-3));
                }
                for (const auto& [label, pi] : candidates) {
                    const PoGapReport po = check_stationary_to_po(p.env, p.cfg.reg, tc, pi, opt, best);
                    merge(report, po.report, label);
                }
                report.notes.push_back("grid optimum value " + format_number(best));
            }
            total += report.n_violations;
            reports.push_back(to_json(report));
        }
        doc["reports"] = reports;
        doc["total_violations"] = total;
        doc["ok"] = total == 0;
        const std::string text = doc.dump(2) + "\n";
        write_text(output_file(p, "_check.json"), text);
        out << text;
        return total == 0 ? int(kExitOk) : int(kExitViolations);
    });
}

int cmd_compare(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const Prepared p = prepare(opts);
        const json& algo = p.cfg.raw.contains("algorithm") ? p.cfg.raw.at("algorithm") : json::object();
        if (!algo.contains("retraining"))
            throw ConfigError("algorithm.retraining", "compare needs a retraining block");
        if (!algo.contains("zfw") && !algo.contains("theory"))
            throw ConfigError("algorithm.zfw", "compare needs a zfw or theory block");
        if (p.cfg.reg.kind != RegKind::entropy)
            throw ConfigError("reg.kind", "repeated retraining needs the entropy regularizer");
        const FwConfig fw = prepared_fw(p);

        auto start = Clock::now();
        const RunResult zfw = run_zfw(p.env, p.cfg.reg, fw, p.init);
        const double zfw_ms = ms_since(start);
        start = Clock::now();
        const RunResult retrain = run_retraining(p);
        const double retrain_ms = ms_since(start);

        const fs::path zfw_csv = output_file(p, "_zfw.csv");
        const fs::path retrain_csv = output_file(p, "_retraining.csv");
        write_trace(zfw_csv, zfw.trace);
        write_trace(retrain_csv, retrain.trace);

        const Policy uniform = Policy::uniform(p.env.base().n_states, p.env.base().n_actions);
        json zj = result_json(p.env, p.cfg.reg, zfw);
        zj["config"] = algo.contains("zfw") ? algo.at("zfw") : algo.at("theory");
        zj["resolved"] = fw_json(fw);
        zj["wall_time_ms"] = zfw_ms;
        zj["trace"] = zfw_csv.filename().string();
        json rj = result_json(p.env, p.cfg.reg, retrain);
        rj["config"] = algo.at("retraining");
        rj["distance_to_uniform"] = distance(retrain.final_policy.table(), uniform.table());
        rj["wall_time_ms"] = retrain_ms;
        rj["trace"] = retrain_csv.filename().string();

        json doc = base_summary(p, "compare");
        doc["zfw"] = zj;
        doc["retraining"] = rj;
        doc["zfw_minus_retraining_v_reg"] = zj["final_v_reg"].get<double>() - rj["final_v_reg"].get<double>();
        const fs::path json_path = output_file(p, "_comparison.json");
        write_text(json_path, doc.dump(2) + "\n");
        out << "zfw trace: " << zfw_csv.string() << "\nretraining trace: " << retrain_csv.string()
            << "\ncomparison: " << json_path.string() << '\n';
        return int(kExitOk);
    });
}

} // namespace perfrl
