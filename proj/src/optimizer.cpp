#include "perfrl/optimizer.hpp"

#include "perfrl/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace perfrl {

void FwConfig::validate(std::size_t n_actions) const {
    if (iterations == 0)
        throw PreconditionError("iterations must be at least 1");
    if (batch == 0)
        throw PreconditionError("batch must be at least 1");
    if (!(floor > 0.0 && floor * static_cast<double>(n_actions) <= 1.0))
        throw PreconditionError("floor must lie in (0, 1/|A|]");
    if (!(probe > 0.0 && probe < floor))
        throw PreconditionError("probe radius must lie in (0, floor)");
    if (!(step > 0.0 && step <= 1.0))
        throw PreconditionError("step must lie in (0, 1]");
    if (!(eval_noise >= 0.0))
        throw PreconditionError("eval_noise must be nonnegative");
}

Policy lmo(const Table& grad, double floor, const MdpBase& base) {
    if (grad.rows() != base.n_states || grad.cols() != base.n_actions)
        throw PreconditionError("gradient shape does not match the MDP");
    const auto na = static_cast<double>(base.n_actions);
    if (!(floor >= 0.0 && floor * na <= 1.0))
        throw PreconditionError("floor must lie in [0, 1/|A|]");
    Table out(base.n_states, base.n_actions, floor);
    for (std::size_t s = 0; s < base.n_states; ++s) {
        auto row = grad.row(s);
        const auto best = static_cast<std::size_t>(std::ranges::max_element(row) - row.begin());
        out(s, best) = 1.0 - floor * (na - 1.0);
    }
    return Policy(std::move(out));
}

Policy fw_step(const Policy& pi, const Policy& target, double step) {
    if (!pi.table().same_shape(target.table()))
        throw PreconditionError("policies differ in shape");
    if (!(step >= 0.0 && step <= 1.0))
        throw PreconditionError("step must lie in [0, 1]");
    Table out(pi.n_states(), pi.n_actions());
    auto o = out.flat();
    auto a = pi.table().flat();
    auto b = target.table().flat();
    for (std::size_t k = 0; k < o.size(); ++k)
        o[k] = (1.0 - step) * a[k] + step * b[k];
    return Policy(std::move(out));
}

double stationarity_gap(const Table& grad, const Policy& pi, GapDomain domain, double floor) {
    if (!grad.same_shape(pi.table()))
        throw PreconditionError("gradient and policy differ in shape");
    if (domain == GapDomain::floored) {
        const MdpBase shape{pi.n_states(), pi.n_actions(), 0.0, {}};
        const Policy target = lmo(grad, floor, shape);
        return dot(grad, axpy(target.table(), -1.0, pi.table()));
    }
    double gap = 0.0;
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        auto g = grad.row(s);
        double mean = 0.0;
        for (std::size_t a = 0; a < g.size(); ++a)
            mean += pi(s, a) * g[a];
        gap += *std::ranges::max_element(g) - mean;
    }
    return gap;
}

double stationarity_gap(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg, GapDomain domain,
                        double floor, double h) {
    return stationarity_gap(fd_performative_gradient(env, pi, reg, h), pi, domain, floor);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// FD oracle gap with the step shrunk for policies close to the boundary.
double oracle_gap(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg) {
    const double h = std::min(kFdOracleStep, 0.5 * min_policy_mass(pi));
    if (!(h > 0.0))
        throw DomainError("oracle gap needs a strictly positive policy");
    return stationarity_gap(env, pi, reg, GapDomain::full, 0.0, h);
}

IterationRecord evaluate_iterate(const PerformativeEnv& env, const RegCoefficient& reg, const Policy& pi,
                                 std::size_t t) {
    IterationRecord rec;
    rec.t = t;
    rec.v_reg = performative_value(env, pi, reg);
    rec.v_unreg = reg.lambda == 0.0 ? rec.v_reg : performative_value(env, pi, reg.unregularized());
    rec.min_mass = min_policy_mass(pi);
    return rec;
}

} // namespace

RunResult run_zfw(const PerformativeEnv& env, const RegCoefficient& reg, const FwConfig& cfg, const Policy& init) {
    const MdpBase& base = env.base();
    cfg.validate(base.n_actions);
    check_compatible(init, base);
    if (!init.in_floored(cfg.floor - kFloorTol))
        throw PreconditionError("initial policy lies outside the floored simplex");

    const auto start = Clock::now();
    SeededRng rng(cfg.seed);
    const ZoOptions opts{cfg.probe, cfg.batch, cfg.eval_noise, cfg.sampler};

    RunResult out;
    out.trace.reserve(cfg.iterations);
    Policy pi = init;
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        IterationRecord rec = evaluate_iterate(env, reg, pi, t);
        if (rec.min_mass < cfg.floor - kFloorTol)
            throw InternalError("iterate left the floored simplex at t = " + std::to_string(t));
        const Table grad = zo_gradient(env, pi, reg, opts, rng);
        const Policy target = lmo(grad, cfg.floor, base);
        rec.fw_gap = dot(grad, axpy(target.table(), -1.0, pi.table()));
        if (cfg.record_oracle_gap)
            out.oracle_gaps.push_back(oracle_gap(env, pi, reg));
        if (cfg.record_timing)
            rec.elapsed_ms = ms_since(start);
        out.trace.push_back(rec);
        if (cfg.keep_iterates)
            out.iterates.push_back(pi);
        if (t == 0 || rec.fw_gap < out.trace[out.output_index].fw_gap) {
            out.output_index = t;
            out.output_policy = pi;
        }
        pi = fw_step(pi, target, cfg.step);
    }
    out.final_policy = std::move(pi);
    return out;
}

Policy npg_solve(const Policy& init, const TransitionKernel& p, const RewardTable& r, const MdpBase& base,
                 double lambda, std::size_t iters, double eta) {
    check_compatible(init, base);
    if (!(eta > 0.0))
        throw PreconditionError("NPG step must be positive");
    const double keep = 1.0 - eta * lambda / (1.0 - base.gamma);
    if (!(keep > 0.0))
        throw PreconditionError("NPG step must satisfy eta * lambda / (1 - gamma) < 1");
    if (lambda > 0.0 && min_policy_mass(init) <= 0.0)
        throw DomainError("regularized NPG needs a strictly positive initial policy");

    const RegCoefficient reg = RegCoefficient::entropy(lambda);
    const double scale = eta / (1.0 - base.gamma);
    Policy pi = init;
    Table logits(base.n_states, base.n_actions);
    for (std::size_t k = 0; k < iters; ++k) {
        const ValueDecomposition vd = eval_decomposition(pi, pi, p, r, base, reg);
        Table next(base.n_states, base.n_actions);
        for (std::size_t s = 0; s < base.n_states; ++s) {
            auto row = logits.row(s);
            for (std::size_t a = 0; a < base.n_actions; ++a) {
                const double log_pi = std::log(pi(s, a));
                // Q_soft = Q + lambda log pi
                const double q_soft = vd.q_values(s, a) + lambda * log_pi;
                row[a] = keep * log_pi + scale * q_soft;
            }
            const double top = *std::ranges::max_element(row);
            double total = 0.0;
            for (std::size_t a = 0; a < base.n_actions; ++a) {
                next(s, a) = std::exp(row[a] - top);
                total += next(s, a);
            }
            for (double& x : next.row(s))
                x /= total;
        }
        pi = Policy(std::move(next));
    }
    return pi;
}

RunResult repeated_retraining(const PerformativeEnv& env, const RegCoefficient& reg, const RetrainingConfig& cfg,
                              const Policy& init) {
    if (reg.kind != RegKind::entropy)
        throw PreconditionError("repeated retraining supports the entropy regularizer only");
    if (cfg.inner_iters == 0)
        throw PreconditionError("inner_iters must be at least 1");
    const MdpBase& base = env.base();
    check_compatible(init, base);

    const auto start = Clock::now();
    RunResult out;
    out.trace.reserve(cfg.outer_iters + 1);
    Policy pi = init;
    for (std::size_t t = 0;; ++t) {
        IterationRecord rec = evaluate_iterate(env, reg, pi, t);
        rec.fw_gap = oracle_gap(env, pi, reg);
        out.oracle_gaps.push_back(rec.fw_gap);
        if (cfg.record_timing)
            rec.elapsed_ms = ms_since(start);
        out.trace.push_back(rec);
        if (t == cfg.outer_iters)
            break;
        const Dynamics dyn = env.dynamics(pi);
        pi = npg_solve(pi, dyn.kernel, dyn.reward, base, reg.lambda, cfg.inner_iters, cfg.inner_step);
    }
    out.output_index = cfg.outer_iters;
    out.output_policy = pi;
    out.final_policy = std::move(pi);
    return out;
}

} // namespace perfrl
