#include "perfrl/mdp.hpp"

#include "perfrl/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace perfrl {

namespace {

void check_probability_vector(std::span<const double> v, const char* what) {
    double sum = 0.0;
    for (double x : v) {
        if (!(x >= 0.0) || !std::isfinite(x))
            throw PreconditionError(std::string(what) + " has a negative or non-finite entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw PreconditionError(std::string(what) + " does not sum to 1");
}

} // namespace

MdpBase MdpBase::make(std::size_t n_states, std::size_t n_actions, double gamma, std::vector<double> rho) {
    if (n_states == 0 || n_actions == 0)
        throw PreconditionError("state and action counts must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw PreconditionError("gamma must lie in [0, 1)");
    if (rho.size() != n_states)
        throw PreconditionError("rho length differs from the number of states");
    check_probability_vector(rho, "rho");
    return MdpBase{n_states, n_actions, gamma, std::move(rho)};
}

MdpBase MdpBase::make(std::size_t n_states, std::size_t n_actions, double gamma) {
    return make(n_states, n_actions, gamma,
                std::vector<double>(n_states, n_states ? 1.0 / static_cast<double>(n_states) : 0.0));
}

Policy::Policy(Table probs) : probs_(std::move(probs)) {
    for (std::size_t s = 0; s < probs_.rows(); ++s)
        check_probability_vector(probs_.row(s), "policy row");
}

Policy Policy::uniform(std::size_t n_states, std::size_t n_actions) {
    return Policy(Table(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
}

bool Policy::in_floored(double floor) const {
    return std::ranges::all_of(probs_.flat(), [floor](double x) { return x >= floor; });
}

TransitionKernel::TransitionKernel(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
    if (probs_.size() != n_states_ * n_actions_ * n_states_)
        throw PreconditionError("kernel size must be |S| * |A| * |S|");
    for (std::size_t s = 0; s < n_states_; ++s)
        for (std::size_t a = 0; a < n_actions_; ++a)
            check_probability_vector(slice(s, a), "kernel slice");
}

TransitionKernel TransitionKernel::uniform(std::size_t n_states, std::size_t n_actions) {
    return TransitionKernel(n_states, n_actions,
                            std::vector<double>(n_states * n_actions * n_states, 1.0 / static_cast<double>(n_states)));
}

RewardTable::RewardTable(Table values) : values_(std::move(values)) {
    for (double x : values_.flat())
        if (!(x >= 0.0 && x <= 1.0))
            throw PreconditionError("reward entries must lie in [0, 1]");
}

void check_compatible(const Policy& pi, const MdpBase& base) {
    if (pi.n_states() != base.n_states || pi.n_actions() != base.n_actions)
        throw PreconditionError("policy shape does not match the MDP");
}

void check_compatible(const TransitionKernel& p, const MdpBase& base) {
    if (p.n_states() != base.n_states || p.n_actions() != base.n_actions)
        throw PreconditionError("kernel shape does not match the MDP");
}

Table state_transition_matrix(const Policy& pi, const TransitionKernel& p) {
    const std::size_t n = p.n_states();
    Table out(n, n);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < p.n_actions(); ++a) {
            const double w = pi(s, a);
            if (w == 0.0)
                continue;
            auto next = p.slice(s, a);
            for (std::size_t s2 = 0; s2 < n; ++s2)
                out(s, s2) += w * next[s2];
        }
    return out;
}

OccupancyMeasure occupancy_measure(const Policy& pi, const TransitionKernel& p, const MdpBase& base) {
    check_compatible(pi, base);
    check_compatible(p, base);
    const auto n = static_cast<Eigen::Index>(base.n_states);
    const Table trans = state_transition_matrix(pi, p);

    // (I - g P^T) d = (1 - g) rho
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index s2 = 0; s2 < n; ++s2) {
        rhs(s2) = (1.0 - base.gamma) * base.rho[static_cast<std::size_t>(s2)];
        for (Eigen::Index s = 0; s < n; ++s)
            lhs(s2, s) -= base.gamma * trans(static_cast<std::size_t>(s), static_cast<std::size_t>(s2));
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite())
        throw InternalError("occupancy flow system could not be solved");

    OccupancyMeasure d{Table(base.n_states, base.n_actions), std::vector<double>(base.n_states)};
    for (std::size_t s = 0; s < base.n_states; ++s) {
        // Negative round-off on states with zero inflow is clipped to zero.
        d.marginal[s] = std::max(0.0, sol(static_cast<Eigen::Index>(s)));
        for (std::size_t a = 0; a < base.n_actions; ++a)
            d.joint(s, a) = d.marginal[s] * pi(s, a);
    }
    return d;
}

double bellman_flow_residual(const OccupancyMeasure& d, const Policy& pi, const TransitionKernel& p,
                             const MdpBase& base) {
    const std::size_t n = base.n_states;
    std::vector<double> inflow(n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < base.n_actions; ++a) {
            auto next = p.slice(s, a);
            for (std::size_t s2 = 0; s2 < n; ++s2)
                inflow[s2] += d.marginal[s] * pi(s, a) * next[s2];
        }
    double worst = 0.0;
    for (std::size_t s2 = 0; s2 < n; ++s2) {
        const double rhs = (1.0 - base.gamma) * base.rho[s2] + base.gamma * inflow[s2];
        worst = std::max(worst, std::abs(d.marginal[s2] - rhs));
    }
    return worst;
}

double min_policy_mass(const Policy& pi) {
    auto flat = pi.table().flat();
    return flat.empty() ? 0.0 : *std::ranges::min_element(flat);
}

std::vector<double> sample_simplex(std::size_t n, SeededRng& rng) {
    std::vector<double> w(n);
    for (auto& x : w)
        x = rng.exponential();
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& x : w)
        x /= total;
    // Push the rounding residue onto the largest entry so the row sums to 1.
    const double residue = 1.0 - std::accumulate(w.begin(), w.end(), 0.0);
    *std::ranges::max_element(w) += residue;
    return w;
}

Policy sample_policy(std::size_t n_states, std::size_t n_actions, SeededRng& rng, double floor) {
    if (floor < 0.0 || floor * static_cast<double>(n_actions) >= 1.0)
        throw PreconditionError("sample_policy floor must satisfy 0 <= floor < 1/|A|");
    Table t(n_states, n_actions);
    const double free_mass = 1.0 - floor * static_cast<double>(n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        auto w = sample_simplex(n_actions, rng);
        for (std::size_t a = 0; a < n_actions; ++a)
            t(s, a) = floor + free_mass * w[a];
    }
    return Policy(std::move(t));
}

TransitionKernel sample_kernel(std::size_t n_states, std::size_t n_actions, SeededRng& rng) {
    std::vector<double> probs;
    probs.reserve(n_states * n_actions * n_states);
    for (std::size_t i = 0; i < n_states * n_actions; ++i) {
        auto w = sample_simplex(n_states, rng);
        probs.insert(probs.end(), w.begin(), w.end());
    }
    return TransitionKernel(n_states, n_actions, std::move(probs));
}

RewardTable sample_reward(std::size_t n_states, std::size_t n_actions, SeededRng& rng) {
    Table t(n_states, n_actions);
    for (auto& x : t.flat())
        x = rng.uniform(0.0, 1.0);
    return RewardTable(std::move(t));
}

} // namespace perfrl
