#pragma once

#include "perfrl/mdp.hpp"
#include "perfrl/rng.hpp"

#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace perfrl {

/// Sensitivity of the environment to the deployed policy, plus the
/// state-visitation floor D.
struct SensitivityConstants {
    double eps_p = 0.0; // ||p_pi' - p_pi|| <= eps_p ||pi' - pi||
    double eps_r = 0.0; // ||r_pi' - r_pi|| <= eps_r ||pi' - pi||
    double s_p = 0.0;   // Lipschitz modulus of grad_pi p_pi(s'|s,a)
    double s_r = 0.0;   // Lipschitz modulus of grad_pi r_pi(s,a)
    double d_min = 1.0; // inf d_{pi,p}(s)

    void validate() const;
};

namespace rules {

/// Dynamics independent of the policy.
struct Fixed {
    TransitionKernel kernel;
    RewardTable reward;
};

/// p(s'|s,a) = (pi(a|s) + pi(a|s') + 1) / sum_s'' (pi(a|s) + pi(a|s'') + 1),
/// r(s,a) = pi(a|s).
struct AffineMix {};

/// (1 - kappa) * (p0, r0) + kappa * AffineMix(pi).
struct Interpolated {
    TransitionKernel kernel;
    RewardTable reward;
    double kappa = 0.0;
};

} // namespace rules

using DynamicsRule = std::variant<rules::Fixed, rules::AffineMix, rules::Interpolated>;

struct Dynamics {
    TransitionKernel kernel;
    RewardTable reward;
};

/// Maps a deployed policy to the environment (p_pi, r_pi) it induces.
class PerformativeEnv {
public:
    PerformativeEnv(MdpBase base, DynamicsRule rule,
                    std::optional<SensitivityConstants> declared = std::nullopt);

    static PerformativeEnv fixed(MdpBase base, TransitionKernel kernel, RewardTable reward);
    static PerformativeEnv affine_mix(MdpBase base);
    static PerformativeEnv interpolated(MdpBase base, TransitionKernel kernel, RewardTable reward,
                                        double kappa);

    const MdpBase& base() const noexcept { return base_; }
    const DynamicsRule& rule() const noexcept { return rule_; }
    const std::optional<SensitivityConstants>& declared_constants() const noexcept { return declared_; }
    std::string rule_name() const;

    Dynamics dynamics(const Policy& pi) const;

private:
    MdpBase base_;
    DynamicsRule rule_;
    std::optional<SensitivityConstants> declared_;
};

/// Max over sampled policy pairs of the observed sensitivity ratios. Pair i is
/// drawn from rng.stream(i), so a larger n_pairs extends the same sample set.
/// The result lower-bounds the true eps_p, eps_r; other fields are left default.
SensitivityConstants estimate_sensitivity(const PerformativeEnv& env, std::size_t n_pairs,
                                          const SeededRng& rng);

/// Min over sampled policies and states of d_{pi,p_pi}(s). Upper-bounds the true D.
double estimate_d_min(const PerformativeEnv& env, std::size_t n_samples, const SeededRng& rng);

/// Certified lower bound on d_{pi,p}(s) valid for every pi:
/// min_s' [(1 - g) rho(s') + g min_{s,a} p(s'|s,a)].
double occupancy_floor(const TransitionKernel& p, const MdpBase& base);

/// Certified lower bound on d_{pi,p_pi}(s) over all pi for the env's rule.
double certified_d_min(const PerformativeEnv& env);

/// Certified upper bounds (eps_p, s_p) for the affine-mix kernel on |S| states,
/// from elementwise bounds on its Jacobian and Hessian over the unit box.
std::pair<double, double> affine_mix_sensitivity_bound(std::size_t n_states);

/// Certified constants for the env's rule (eps_r exact for the reward part).
/// d_min is filled with certified_d_min.
SensitivityConstants certified_constants(const PerformativeEnv& env);

} // namespace perfrl
