#pragma once

#include "perfrl/rng.hpp"
#include "perfrl/table.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace perfrl {

/// Tolerance for row sums of probability tables at construction.
inline constexpr double kRowSumTol = 1e-12;

/// State/action counts, discount factor and initial distribution.
struct MdpBase {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double gamma = 0.0;
    std::vector<double> rho;

    /// Validates and builds. gamma must lie in [0, 1); rho must be a
    /// probability vector of length n_states.
    static MdpBase make(std::size_t n_states, std::size_t n_actions, double gamma,
                        std::vector<double> rho);
    /// Same with a uniform initial distribution.
    static MdpBase make(std::size_t n_states, std::size_t n_actions, double gamma);
};

/// Row-stochastic |S| x |A| table pi(a|s).
class Policy {
public:
    Policy() = default;
    /// Throws PreconditionError unless every entry is >= 0 and every row sums
    /// to 1 within kRowSumTol. Inputs are never renormalized.
    explicit Policy(Table probs);

    static Policy uniform(std::size_t n_states, std::size_t n_actions);

    double operator()(std::size_t s, std::size_t a) const { return probs_(s, a); }
    std::size_t n_states() const noexcept { return probs_.rows(); }
    std::size_t n_actions() const noexcept { return probs_.cols(); }
    const Table& table() const noexcept { return probs_; }
    std::span<const double> row(std::size_t s) const { return probs_.row(s); }

    /// True when every entry is at least `floor`.
    bool in_floored(double floor) const;

    friend bool operator==(const Policy&, const Policy&) = default;

private:
    Table probs_;
};

/// p(s'|s,a), stored dense with s' fastest.
class TransitionKernel {
public:
    TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs);

    /// Kernel whose every (s,a) slice is uniform over next states.
    static TransitionKernel uniform(std::size_t n_states, std::size_t n_actions);

    double operator()(std::size_t s, std::size_t a, std::size_t next) const {
        return probs_[(s * n_actions_ + a) * n_states_ + next];
    }
    std::span<const double> slice(std::size_t s, std::size_t a) const {
        return {probs_.data() + (s * n_actions_ + a) * n_states_, n_states_};
    }
    std::size_t n_states() const noexcept { return n_states_; }
    std::size_t n_actions() const noexcept { return n_actions_; }
    std::span<const double> flat() const noexcept { return probs_; }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<double> probs_;
};

/// r(s,a) in [0, 1].
class RewardTable {
public:
    explicit RewardTable(Table values);

    double operator()(std::size_t s, std::size_t a) const { return values_(s, a); }
    const Table& table() const noexcept { return values_; }

private:
    Table values_;
};

struct OccupancyMeasure {
    Table joint;                  // d(s,a)
    std::vector<double> marginal; // d(s)
};

/// Discounted state-action occupancy, obtained by solving the |S|-dimensional
/// flow equation d(s') = (1-g) rho(s') + g sum_{s,a} d(s) pi(a|s) p(s'|s,a).
OccupancyMeasure occupancy_measure(const Policy& pi, const TransitionKernel& p, const MdpBase& base);

/// max_s |flow equation residual| for a candidate occupancy.
double bellman_flow_residual(const OccupancyMeasure& d, const Policy& pi, const TransitionKernel& p,
                             const MdpBase& base);

double min_policy_mass(const Policy& pi);

/// Row-wise Dirichlet(1, ..., 1) draw, mixed toward `floor` so every entry is
/// at least `floor`. Requires floor * n_actions < 1.
Policy sample_policy(std::size_t n_states, std::size_t n_actions, SeededRng& rng, double floor = 0.0);

/// Random valid kernel with Dirichlet(1) rows.
TransitionKernel sample_kernel(std::size_t n_states, std::size_t n_actions, SeededRng& rng);

/// Random reward table with entries uniform in [0, 1].
RewardTable sample_reward(std::size_t n_states, std::size_t n_actions, SeededRng& rng);

/// Probability vector of length n with Dirichlet(1) law.
std::vector<double> sample_simplex(std::size_t n, SeededRng& rng);

/// P_pi(s, s') = sum_a pi(a|s) p(s'|s,a).
Table state_transition_matrix(const Policy& pi, const TransitionKernel& p);

void check_compatible(const Policy& pi, const MdpBase& base);
void check_compatible(const TransitionKernel& p, const MdpBase& base);

} // namespace perfrl
