#include "perfrl/policy_eval.hpp"

#include "perfrl/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace perfrl {

RegCoefficient RegCoefficient::entropy(double lambda) {
    if (!(lambda >= 0.0))
        throw PreconditionError("lambda must be nonnegative");
    return {lambda, RegKind::entropy};
}

RegCoefficient RegCoefficient::quadratic(double lambda) {
    if (!(lambda >= 0.0))
        throw PreconditionError("lambda must be nonnegative");
    return {lambda, RegKind::quadratic};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// r(s,a) - lambda log pi_log(a|s); +inf where the log is undefined.
Table penalized_reward(const Policy& pi_sample, const Policy& pi_log, const RewardTable& r, double lambda) {
    Table out(pi_log.n_states(), pi_log.n_actions());
    for (std::size_t s = 0; s < out.rows(); ++s)
        for (std::size_t a = 0; a < out.cols(); ++a) {
            if (lambda == 0.0) {
                out(s, a) = r(s, a);
                continue;
            }
            if (pi_log(s, a) <= 0.0) {
                if (pi_sample(s, a) > 0.0)
                    throw DomainError("log of a zero policy entry on an action with positive probability");
                out(s, a) = kInf;
                continue;
            }
            out(s, a) = r(s, a) - lambda * std::log(pi_log(s, a));
        }
    return out;
}

/// Expected per-state reward sum_a pi(a|s) reward(s,a), skipping zero-probability actions.
std::vector<double> expected_reward(const Policy& pi, const Table& reward) {
    std::vector<double> out(pi.n_states(), 0.0);
    for (std::size_t s = 0; s < pi.n_states(); ++s)
        for (std::size_t a = 0; a < pi.n_actions(); ++a)
            if (pi(s, a) > 0.0)
                out[s] += pi(s, a) * reward(s, a);
    return out;
}

/// Solves V = r_pi + g P_pi V.
std::vector<double> solve_state_values(const Policy& pi, const TransitionKernel& p, const MdpBase& base,
                                       const std::vector<double>& r_pi) {
    const auto n = static_cast<Eigen::Index>(base.n_states);
    const Table trans = state_transition_matrix(pi, p);
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index s = 0; s < n; ++s) {
        rhs(s) = r_pi[static_cast<std::size_t>(s)];
        for (Eigen::Index s2 = 0; s2 < n; ++s2)
            lhs(s, s2) -= base.gamma * trans(static_cast<std::size_t>(s), static_cast<std::size_t>(s2));
    }
    const Eigen::VectorXd v = Eigen::PartialPivLU<Eigen::MatrixXd>(lhs).solve(rhs);
    if (!v.allFinite())
        throw InternalError("policy evaluation system could not be solved");
    return {v.data(), v.data() + n};
}

void require_entropy(const RegCoefficient& reg) {
    if (reg.kind != RegKind::entropy)
        throw PreconditionError("operation requires the entropy regularizer");
}

} // namespace

ValueDecomposition eval_decomposition(const Policy& pi_sample, const Policy& pi_log, const TransitionKernel& p,
                                      const RewardTable& r, const MdpBase& base, const RegCoefficient& reg) {
    require_entropy(reg);
    check_compatible(pi_sample, base);
    check_compatible(pi_log, base);
    check_compatible(p, base);
    const Table reward = penalized_reward(pi_sample, pi_log, r, reg.lambda);

    ValueDecomposition out;
    out.state_values = solve_state_values(pi_sample, p, base, expected_reward(pi_sample, reward));
    out.q_values = Table(base.n_states, base.n_actions);
    for (std::size_t s = 0; s < base.n_states; ++s)
        for (std::size_t a = 0; a < base.n_actions; ++a) {
            double next = 0.0;
            auto row = p.slice(s, a);
            for (std::size_t s2 = 0; s2 < base.n_states; ++s2)
                next += row[s2] * out.state_values[s2];
            out.q_values(s, a) = reward(s, a) + base.gamma * next;
        }
    for (std::size_t s = 0; s < base.n_states; ++s)
        out.scalar_value += base.rho[s] * out.state_values[s];
    return out;
}

double value_via_occupancy(const Policy& pi_sample, const Policy& pi_log, const TransitionKernel& p,
                           const RewardTable& r, const MdpBase& base, double lambda) {
    const Table reward = penalized_reward(pi_sample, pi_log, r, lambda);
    const OccupancyMeasure d = occupancy_measure(pi_sample, p, base);
    double acc = 0.0;
    for (std::size_t s = 0; s < base.n_states; ++s)
        for (std::size_t a = 0; a < base.n_actions; ++a)
            if (d.joint(s, a) > 0.0)
                acc += d.joint(s, a) * reward(s, a);
    return acc / (1.0 - base.gamma);
}

double performative_value(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg) {
    const MdpBase& base = env.base();
    const Dynamics dyn = env.dynamics(pi);
    if (reg.kind == RegKind::quadratic) {
        const OccupancyMeasure d = occupancy_measure(pi, dyn.kernel, base);
        double linear = 0.0;
        double square = 0.0;
        for (std::size_t s = 0; s < base.n_states; ++s)
            for (std::size_t a = 0; a < base.n_actions; ++a) {
                linear += d.joint(s, a) * dyn.reward(s, a);
                square += d.joint(s, a) * d.joint(s, a);
            }
        return linear - reg.lambda * square;
    }
    const Table reward = penalized_reward(pi, pi, dyn.reward, reg.lambda);
    const std::vector<double> v = solve_state_values(pi, dyn.kernel, base, expected_reward(pi, reward));
    double j = 0.0;
    for (std::size_t s = 0; s < base.n_states; ++s)
        j += base.rho[s] * v[s];
    return j;
}

double draw_eval_noise(double eps_v, SeededRng& rng) {
    if (eps_v < 0.0)
        throw PreconditionError("eps_v must be nonnegative");
    return eps_v == 0.0 ? 0.0 : rng.uniform(-eps_v, eps_v);
}

double noisy_value(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg, double eps_v,
                   SeededRng& rng) {
    const double noise = draw_eval_noise(eps_v, rng);
    const double exact = performative_value(env, pi, reg);
    return eps_v == 0.0 ? exact : exact + noise;
}

Table analytic_grad_fixed(const Policy& pi, const TransitionKernel& p, const RewardTable& r, const MdpBase& base,
                          const RegCoefficient& reg) {
    require_entropy(reg);
    if (min_policy_mass(pi) <= 0.0)
        throw DomainError("analytic gradient needs a strictly positive policy");
    const ValueDecomposition vd = eval_decomposition(pi, pi, p, r, base, reg);
    const OccupancyMeasure d = occupancy_measure(pi, p, base);
    Table grad(base.n_states, base.n_actions);
    for (std::size_t s = 0; s < base.n_states; ++s)
        for (std::size_t a = 0; a < base.n_actions; ++a)
            grad(s, a) = d.marginal[s] * (vd.q_values(s, a) - reg.lambda) / (1.0 - base.gamma);
    return grad;
}

double value_upper_bound(const MdpBase& base, double lambda) {
    return (1.0 + lambda * std::log(static_cast<double>(base.n_actions))) / (1.0 - base.gamma);
}

} // namespace perfrl
