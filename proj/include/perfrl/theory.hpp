#pragma once

#include "perfrl/mdp.hpp"
#include "perfrl/perf_env.hpp"
#include "perfrl/policy_eval.hpp"
#include "perfrl/rng.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace perfrl {

struct TheoryConstants {
    double mu = 0.0;  // gradient-dominance modulus, mu1 - mu2
    double mu1 = 0.0;
    double mu2 = 0.0;
    std::optional<double> pi_min; // absent when lambda = 0; may underflow to 0
    std::optional<double> log_pi_min;
    double l_lambda = 0.0;   // Lipschitz constant of V on Pi_Delta (times Delta)
    double ell_lambda = 0.0; // smoothness constant of V on Pi_Delta (times Delta)
    double l_pi = 0.0;
    double l_p = 0.0;
    double ell_pi = 0.0;
    double ell_p = 0.0;
    double d_min = 1.0; // the D these were computed with

    /// pi_min, or DomainError when it is undefined or underflows.
    double require_pi_min() const;
};

TheoryConstants compute_constants(const SensitivityConstants& consts, const MdpBase& base,
                                  const RegCoefficient& reg);

struct TheorySchedule {
    double floor = 0.0;      // Delta
    double step = 0.0;       // beta
    std::size_t iterations = 0;
    double probe = 0.0;      // delta
    double eval_noise = 0.0; // eps_V
    std::size_t batch = 0;   // N
    double target_eps = 0.0;
    double fail_prob = 0.0;
    double iterations_exact = 0.0;
    double batch_exact = 0.0;
    std::array<double, 3> eps_ceilings{}; // the three terms of the admissible-eps bound
    std::size_t binding_ceiling = 0;
};

/// Names of the three ceiling terms, in eps_ceilings order.
extern const std::array<const char*, 3> kCeilingNames;

TheorySchedule theory_hyperparams(const TheoryConstants& tc, const SensitivityConstants& consts,
                                  const MdpBase& base, const RegCoefficient& reg, double target_eps,
                                  double fail_prob);

struct Violation {
    std::string where;
    double lhs = 0.0;
    double rhs = 0.0;
    double excess = 0.0; // lhs - rhs - slack, positive when violated
};

struct ViolationReport {
    std::string check;
    std::size_t n_checked = 0;
    std::size_t n_skipped = 0; // premise not met
    std::size_t n_violations = 0;
    double max_excess = -1e300;
    std::vector<Violation> violations;
    std::vector<std::string> notes;

    void record(const std::string& where, double lhs, double rhs, double slack);
    bool ok() const { return n_violations == 0; }
};

inline constexpr double kDominanceSlack = 1e-8;
inline constexpr double kLowerBoundSlack = 1e-9;
inline constexpr double kProp2Slack = 1e-10;
inline constexpr double kOracleStep = 1e-5;

/// V(pi1) <= V(pi0) + gap_full(pi0)/D - (mu/2) ||pi1 - pi0||^2 over sampled
/// pairs from Pi_{0.01}. Pair 0 uses pi1 = pi0.
ViolationReport check_gradient_dominance(const PerformativeEnv& env, const RegCoefficient& reg,
                                         const TheoryConstants& tc, std::size_t n_pairs,
                                         const SeededRng& rng);

/// The swap policy: masses of the per-state argmax and argmin actions exchanged.
Policy swap_extremes(const Policy& pi);

/// pi(a|s) >= pi_min exp(-(2|A|/lambda)(1-g) <grad V, pi' - pi>) for every (s,a).
ViolationReport check_policy_lower_bound(const PerformativeEnv& env, const RegCoefficient& reg,
                                         const TheoryConstants& tc, const Policy& pi);

/// If gap_floored <= D lambda / (5|A|(1-g)), then gap_full <= 2 gap_floored.
/// floor may be 0 when pi_min underflows; the floored domain is then the full simplex.
ViolationReport check_prop2(const PerformativeEnv& env, const RegCoefficient& reg,
                            const TheoryConstants& tc, const Policy& pi, double floor);

struct PoGapReport {
    double best_value = 0.0;  // grid maximum of V
    double value = 0.0;       // V(pi)
    double gap = 0.0;         // best_value - value
    double bound = 0.0;       // gap_full(pi)/D + |mu||S|
    Policy best_policy;
    ViolationReport report;
};

/// Brute-force grid search of the performative optimum (step 1e-2 refined to
/// 1e-4) and the stationary-to-optimal bound. Needs |S|(|A|-1) <= 3.
PoGapReport check_stationary_to_po(const PerformativeEnv& env, const RegCoefficient& reg,
                                   const TheoryConstants& tc, const Policy& pi);

/// Same against a grid optimum computed once by the caller.
PoGapReport check_stationary_to_po(const PerformativeEnv& env, const RegCoefficient& reg,
                                   const TheoryConstants& tc, const Policy& pi, const Policy& best_policy,
                                   double best_value);

/// Grid maximizer of the performative value alone.
Policy grid_optimum(const PerformativeEnv& env, const RegCoefficient& reg, double* best_value = nullptr);

} // namespace perfrl
