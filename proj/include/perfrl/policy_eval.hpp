#pragma once

#include "perfrl/mdp.hpp"
#include "perfrl/perf_env.hpp"
#include "perfrl/rng.hpp"

#include <vector>

namespace perfrl {

enum class RegKind { entropy, quadratic };

struct RegCoefficient {
    double lambda = 0.0;
    RegKind kind = RegKind::entropy;

    static RegCoefficient entropy(double lambda);
    static RegCoefficient quadratic(double lambda);
    RegCoefficient unregularized() const { return {0.0, kind}; }
};

/// J, V(s) and Q(s,a) of the entropy-regularized objective where actions are
/// sampled from one policy and the log-penalty is taken under another.
struct ValueDecomposition {
    double scalar_value = 0.0;
    std::vector<double> state_values;
    Table q_values; // +inf where pi_log(a|s) = 0 and lambda > 0
};

ValueDecomposition eval_decomposition(const Policy& pi_sample, const Policy& pi_log,
                                      const TransitionKernel& p, const RewardTable& r,
                                      const MdpBase& base, const RegCoefficient& reg);

/// J computed through the occupancy route, (1/(1-g)) sum d(s,a)[r - lambda log pi_log].
/// Independent of eval_decomposition's value-equation route.
double value_via_occupancy(const Policy& pi_sample, const Policy& pi_log, const TransitionKernel& p,
                           const RewardTable& r, const MdpBase& base, double lambda);

/// V_{lambda,pi}^{pi}: the value of pi deployed in the environment it induces.
/// Quadratic kind returns <d, r_pi> - lambda ||d||^2 on the joint occupancy.
double performative_value(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg);

/// Performative value plus bounded uniform noise on [-eps_v, eps_v].
/// eps_v = 0 consumes no randomness and returns the exact value.
double noisy_value(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                   double eps_v, SeededRng& rng);

/// The noise term of noisy_value on its own.
double draw_eval_noise(double eps_v, SeededRng& rng);

/// Gradient of J(pi, pi, p, r) w.r.t. pi(a|s) for fixed (p, r):
/// d(s) [Q(s,a) - lambda] / (1 - g).
Table analytic_grad_fixed(const Policy& pi, const TransitionKernel& p, const RewardTable& r,
                          const MdpBase& base, const RegCoefficient& reg);

/// Upper end of the value range [0, (1 + lambda log|A|)/(1 - g)].
double value_upper_bound(const MdpBase& base, double lambda);

} // namespace perfrl
