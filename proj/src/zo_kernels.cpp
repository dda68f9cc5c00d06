// Two-point zeroth-order gradient kernels: an OpenMP version and the serial
// reference it is tested against. Both walk the same per-pair computation;
// only the scheduling differs.

#include "perfrl/grad_est.hpp"

#include "perfrl/errors.hpp"

#include <exception>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace perfrl {

namespace {

struct PairSample {
    Table direction;
    double diff = 0.0; // V(pi + delta u) - V(pi - delta u)
};

void check_zo_preconditions(const PerformativeEnv& env, const Policy& pi, const ZoOptions& opts) {
    check_compatible(pi, env.base());
    if (opts.batch == 0)
        throw PreconditionError("zo_gradient batch must be at least 1");
    if (!(opts.delta > 0.0))
        throw PreconditionError("zo_gradient probe radius must be positive");
    if (opts.eps_v < 0.0)
        throw PreconditionError("zo_gradient eps_v must be nonnegative");
    if (min_policy_mass(pi) <= opts.delta)
        throw PreconditionError("zo_gradient needs min policy mass > delta");
}

PairSample evaluate_pair(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                         const ZoOptions& opts, const SeededRng& root, std::size_t i) {
    SeededRng local = root.stream(i);
    PairSample out{sample_direction(env.base(), local, opts.sampler)};
    const Policy plus(axpy(pi.table(), opts.delta, out.direction));
    const Policy minus(axpy(pi.table(), -opts.delta, out.direction));
    const double v_plus = noisy_value(env, plus, reg, opts.eps_v, local);
    const double v_minus = noisy_value(env, minus, reg, opts.eps_v, local);
    out.diff = v_plus - v_minus;
    return out;
}

/// Index-ordered weighted sum, shared by both kernels so results match bitwise.
Table reduce_pairs(const std::vector<PairSample>& pairs, const MdpBase& base, const ZoOptions& opts) {
    Table g(base.n_states, base.n_actions);
    auto acc = g.flat();
    for (const PairSample& p : pairs) {
        auto u = p.direction.flat();
        for (std::size_t k = 0; k < acc.size(); ++k)
            acc[k] += p.diff * u[k];
    }
    const double scale = static_cast<double>(base.n_states * (base.n_actions - 1)) /
                         (2.0 * static_cast<double>(opts.batch) * opts.delta);
    for (double& x : acc)
        x *= scale;
    return g;
}

} // namespace

Table zo_gradient_serial(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                         const ZoOptions& opts, SeededRng& rng) {
    check_zo_preconditions(env, pi, opts);
    const SeededRng root(rng.next_u64());
    std::vector<PairSample> pairs;
    pairs.reserve(opts.batch);
    for (std::size_t i = 0; i < opts.batch; ++i)
        pairs.push_back(evaluate_pair(env, pi, reg, opts, root, i));
    return reduce_pairs(pairs, env.base(), opts);
}

Table zo_gradient_parallel(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                           const ZoOptions& opts, SeededRng& rng) {
    check_zo_preconditions(env, pi, opts);
    const SeededRng root(rng.next_u64());
    std::vector<PairSample> pairs(opts.batch);
    std::exception_ptr failure;
    const auto n = static_cast<long long>(opts.batch);

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        try {
            pairs[static_cast<std::size_t>(i)] = evaluate_pair(env, pi, reg, opts, root, static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(perfrl_zo_failure)
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return reduce_pairs(pairs, env.base(), opts);
}

Table zo_gradient(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg, const ZoOptions& opts,
                  SeededRng& rng) {
    return zo_gradient_parallel(env, pi, reg, opts, rng);
}

} // namespace perfrl
