#pragma once

#include "perfrl/grad_est.hpp"
#include "perfrl/mdp.hpp"
#include "perfrl/perf_env.hpp"
#include "perfrl/policy_eval.hpp"

#include <cstdint>
#include <vector>

namespace perfrl {

/// Slack on the floor constraint when checking iterates.
inline constexpr double kFloorTol = 1e-9;
/// Default finite-difference step of the oracle gap.
inline constexpr double kFdOracleStep = 1e-5;

struct FwConfig {
    std::size_t iterations = 1; // T
    std::size_t batch = 1;      // N
    double floor = 1e-3;        // Delta
    double probe = 1e-4;        // delta
    double step = 0.01;         // beta
    double eval_noise = 0.0;    // eps_V
    std::uint64_t seed = 0;
    DirectionSampler sampler = DirectionSampler::gaussian;
    bool record_oracle_gap = false;
    bool record_timing = false;
    bool keep_iterates = false; // fills RunResult::iterates

    /// Throws PreconditionError unless 0 < probe < floor <= 1/|A|, 0 < step <= 1,
    /// iterations >= 1, batch >= 1, eval_noise >= 0.
    void validate(std::size_t n_actions) const;
};

struct IterationRecord {
    std::size_t t = 0;
    double v_reg = 0.0;
    double v_unreg = 0.0;
    double fw_gap = 0.0;
    double min_mass = 0.0;
    double elapsed_ms = 0.0;
};

struct RunResult {
    std::vector<IterationRecord> trace;
    std::size_t output_index = 0;
    Policy output_policy;
    Policy final_policy; // pi_T for zfw, the last trace entry for retraining
    /// Full-domain oracle gap per iteration; empty unless requested.
    std::vector<double> oracle_gaps;
    /// pi_0 .. pi_{T-1}; empty unless requested.
    std::vector<Policy> iterates;
};

/// Frank-Wolfe subproblem over Pi_floor: per state, floor everywhere except
/// 1 - floor (|A| - 1) on the largest gradient entry (lowest index on ties).
Policy lmo(const Table& grad, double floor, const MdpBase& base);

/// pi + step (target - pi).
Policy fw_step(const Policy& pi, const Policy& target, double step);

/// Zeroth-order Frank-Wolfe. Records one IterationRecord per iterate
/// pi_0 .. pi_{T-1}; the output is the iterate with the smallest estimated gap
/// (earliest on ties).
RunResult run_zfw(const PerformativeEnv& env, const RegCoefficient& reg, const FwConfig& cfg,
                  const Policy& init);

enum class GapDomain { full, floored };

/// Stationarity gap max over the domain of <grad, target - pi>.
/// Full domain: sum_s [max_a g(a|s) - sum_a pi(a|s) g(a|s)].
/// Floored domain: <grad, lmo(grad, floor) - pi>.
double stationarity_gap(const Table& grad, const Policy& pi, GapDomain domain, double floor = 0.0);

/// Same with the finite-difference oracle gradient of the performative value.
double stationarity_gap(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                        GapDomain domain, double floor = 0.0, double h = 1e-5);

struct RetrainingConfig {
    std::size_t outer_iters = 0;
    std::size_t inner_iters = 1;
    double inner_step = 0.01;
    bool record_timing = false;
};

/// One inner solve: `iters` entropy-regularized NPG steps on the frozen MDP (p, r):
/// pi'(a|s) ∝ pi(a|s)^{1 - eta lambda/(1-g)} exp(eta Q_soft(s,a)/(1-g)),
/// with Q_soft(s,a) = r(s,a) + g sum_s' p(s'|s,a) V(s').
Policy npg_solve(const Policy& init, const TransitionKernel& p, const RewardTable& r, const MdpBase& base,
                 double lambda, std::size_t iters, double eta);

/// Repeated retraining: pi_{t+1} = npg_solve(pi_t) on (p_{pi_t}, r_{pi_t}).
/// The trace has outer_iters + 1 records (pi_0 .. pi_outer); fw_gap holds the
/// full-domain oracle gap and the output is the last iterate.
RunResult repeated_retraining(const PerformativeEnv& env, const RegCoefficient& reg,
                              const RetrainingConfig& cfg, const Policy& init);

} // namespace perfrl
