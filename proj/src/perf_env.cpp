#include "perfrl/perf_env.hpp"

#include "perfrl/errors.hpp"

#include <algorithm>
#include <cmath>

namespace perfrl {

void SensitivityConstants::validate() const {
    if (eps_p < 0.0 || eps_r < 0.0 || s_p < 0.0 || s_r < 0.0)
        throw PreconditionError("sensitivity constants must be nonnegative");
    if (!(d_min > 0.0 && d_min <= 1.0))
        throw PreconditionError("d_min must lie in (0, 1]");
}

PerformativeEnv::PerformativeEnv(MdpBase base, DynamicsRule rule, std::optional<SensitivityConstants> declared)
    : base_(std::move(base)), rule_(std::move(rule)), declared_(std::move(declared)) {
    if (declared_)
        declared_->validate();
    auto check_tables = [this](const TransitionKernel& k, const RewardTable& r) {
        check_compatible(k, base_);
        if (r.table().rows() != base_.n_states || r.table().cols() != base_.n_actions)
            throw PreconditionError("reward shape does not match the MDP");
    };
    if (const auto* f = std::get_if<rules::Fixed>(&rule_))
        check_tables(f->kernel, f->reward);
    if (const auto* m = std::get_if<rules::Interpolated>(&rule_)) {
        check_tables(m->kernel, m->reward);
        if (!(m->kappa >= 0.0 && m->kappa <= 1.0))
            throw PreconditionError("kappa must lie in [0, 1]");
    }
}

PerformativeEnv PerformativeEnv::fixed(MdpBase base, TransitionKernel kernel, RewardTable reward) {
    return PerformativeEnv(std::move(base), rules::Fixed{std::move(kernel), std::move(reward)});
}

PerformativeEnv PerformativeEnv::affine_mix(MdpBase base) {
    return PerformativeEnv(std::move(base), rules::AffineMix{});
}

PerformativeEnv PerformativeEnv::interpolated(MdpBase base, TransitionKernel kernel, RewardTable reward,
                                              double kappa) {
    return PerformativeEnv(std::move(base), rules::Interpolated{std::move(kernel), std::move(reward), kappa});
}

std::string PerformativeEnv::rule_name() const {
    struct Namer {
        std::string operator()(const rules::Fixed&) const { return "fixed"; }
        std::string operator()(const rules::AffineMix&) const { return "affine_mix"; }
        std::string operator()(const rules::Interpolated&) const { return "interpolated"; }
    };
    return std::visit(Namer{}, rule_);
}

namespace {

std::vector<double> affine_mix_kernel(const Policy& pi) {
    const std::size_t ns = pi.n_states();
    const std::size_t na = pi.n_actions();
    std::vector<double> probs(ns * na * ns);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            double* out = probs.data() + (s * na + a) * ns;
            double total = 0.0;
            for (std::size_t s2 = 0; s2 < ns; ++s2) {
                out[s2] = pi(s, a) + pi(s2, a) + 1.0;
                total += out[s2];
            }
            for (std::size_t s2 = 0; s2 < ns; ++s2)
                out[s2] /= total;
        }
    return probs;
}

} // namespace

Dynamics PerformativeEnv::dynamics(const Policy& pi) const {
    check_compatible(pi, base_);
    const std::size_t ns = base_.n_states;
    const std::size_t na = base_.n_actions;
    if (const auto* f = std::get_if<rules::Fixed>(&rule_))
        return {f->kernel, f->reward};
    if (std::holds_alternative<rules::AffineMix>(rule_))
        return {TransitionKernel(ns, na, affine_mix_kernel(pi)), RewardTable(pi.table())};

    const auto& m = std::get<rules::Interpolated>(rule_);
    std::vector<double> probs = affine_mix_kernel(pi);
    auto base_kernel = m.kernel.flat();
    for (std::size_t i = 0; i < probs.size(); ++i)
        probs[i] = (1.0 - m.kappa) * base_kernel[i] + m.kappa * probs[i];
    Table reward(ns, na);
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a)
            reward(s, a) = std::clamp((1.0 - m.kappa) * m.reward(s, a) + m.kappa * pi(s, a), 0.0, 1.0);
    return {TransitionKernel(ns, na, std::move(probs)), RewardTable(std::move(reward))};
}

SensitivityConstants estimate_sensitivity(const PerformativeEnv& env, std::size_t n_pairs, const SeededRng& rng) {
    if (n_pairs == 0)
        throw PreconditionError("n_pairs must be at least 1");
    const auto& base = env.base();
    SensitivityConstants out;
    for (std::size_t i = 0; i < n_pairs; ++i) {
        SeededRng local = rng.stream(i);
        Policy a = sample_policy(base.n_states, base.n_actions, local);
        Policy b = sample_policy(base.n_states, base.n_actions, local);
        double gap = distance(a.table(), b.table());
        while (gap < 1e-12) {
            b = sample_policy(base.n_states, base.n_actions, local);
            gap = distance(a.table(), b.table());
        }
        const Dynamics da = env.dynamics(a);
        const Dynamics db = env.dynamics(b);
        double dp = 0.0;
        auto ka = da.kernel.flat();
        auto kb = db.kernel.flat();
        for (std::size_t k = 0; k < ka.size(); ++k)
            dp += (ka[k] - kb[k]) * (ka[k] - kb[k]);
        const double dr = distance(da.reward.table(), db.reward.table());
        out.eps_p = std::max(out.eps_p, std::sqrt(dp) / gap);
        out.eps_r = std::max(out.eps_r, dr / gap);
    }
    return out;
}

double estimate_d_min(const PerformativeEnv& env, std::size_t n_samples, const SeededRng& rng) {
    if (n_samples == 0)
        throw PreconditionError("n_samples must be at least 1");
    const auto& base = env.base();
    double best = 1.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
        SeededRng local = rng.stream(i);
        const Policy pi = sample_policy(base.n_states, base.n_actions, local);
        const Dynamics dyn = env.dynamics(pi);
        const OccupancyMeasure d = occupancy_measure(pi, dyn.kernel, base);
        best = std::min(best, *std::ranges::min_element(d.marginal));
    }
    return best;
}

double occupancy_floor(const TransitionKernel& p, const MdpBase& base) {
    check_compatible(p, base);
    double best = 1.0;
    for (std::size_t s2 = 0; s2 < base.n_states; ++s2) {
        double inflow = 1.0;
        for (std::size_t s = 0; s < base.n_states; ++s)
            for (std::size_t a = 0; a < base.n_actions; ++a)
                inflow = std::min(inflow, p(s, a, s2));
        best = std::min(best, (1.0 - base.gamma) * base.rho[s2] + base.gamma * inflow);
    }
    return best;
}

double certified_d_min(const PerformativeEnv& env) {
    const auto& base = env.base();
    const double mix_floor = 1.0 / (3.0 * static_cast<double>(base.n_states));
    if (const auto* f = std::get_if<rules::Fixed>(&env.rule()))
        return occupancy_floor(f->kernel, base);
    double kappa = 1.0;
    const TransitionKernel* p0 = nullptr;
    if (const auto* m = std::get_if<rules::Interpolated>(&env.rule())) {
        kappa = m->kappa;
        p0 = &m->kernel;
    }
    double best = 1.0;
    for (std::size_t s2 = 0; s2 < base.n_states; ++s2) {
        double inflow = 1.0;
        for (std::size_t s = 0; s < base.n_states; ++s)
            for (std::size_t a = 0; a < base.n_actions; ++a) {
                const double fixed_part = p0 ? (*p0)(s, a, s2) : 0.0;
                inflow = std::min(inflow, (1.0 - kappa) * fixed_part + kappa * mix_floor);
            }
        best = std::min(best, (1.0 - base.gamma) * base.rho[s2] + base.gamma * inflow);
    }
    return best;
}

std::pair<double, double> affine_mix_sensitivity_bound(std::size_t n_states) {
    // For a fixed (s, a) the kernel row depends only on y = pi(a|.), y in [0,1]^S:
    //   n_k = y_s + y_k + 1 in [1, 3],  m = S y_s + sum_j y_j + S in [S, 3S],
    //   dn_k/dy_j = c_kj = [j == s] + [j == k],  dm/dy_j = b_j = 1 + S [j == s].
    // Each derivative term is bounded separately using n <= 3 and m >= S.
    const auto ns = static_cast<double>(n_states);
    const std::size_t s = 0;
    auto c = [s](std::size_t k, std::size_t j) { return double(j == s) + double(j == k); };
    auto b = [s, ns](std::size_t j) { return 1.0 + ns * double(j == s); };

    double jac_sq = 0.0;
    for (std::size_t k = 0; k < n_states; ++k)
        for (std::size_t j = 0; j < n_states; ++j) {
            const double bound = c(k, j) / ns + 3.0 * b(j) / (ns * ns);
            jac_sq += bound * bound;
        }
    // Block-diagonal over actions; identical blocks over source states.
    const double eps_p = std::sqrt(ns * jac_sq);

    double s_p = 0.0;
    for (std::size_t k = 0; k < n_states; ++k) {
        double hess_sq = 0.0;
        for (std::size_t j = 0; j < n_states; ++j)
            for (std::size_t l = 0; l < n_states; ++l) {
                const double bound = (c(k, j) * b(l) + c(k, l) * b(j)) / (ns * ns) + 6.0 * b(j) * b(l) / (ns * ns * ns);
                hess_sq += bound * bound;
            }
        s_p = std::max(s_p, std::sqrt(hess_sq));
    }
    return {eps_p, s_p};
}

SensitivityConstants certified_constants(const PerformativeEnv& env) {
    SensitivityConstants out;
    out.d_min = certified_d_min(env);
    if (std::holds_alternative<rules::Fixed>(env.rule()))
        return out;
    const auto [eps_p, s_p] = affine_mix_sensitivity_bound(env.base().n_states);
    double kappa = 1.0;
    if (const auto* m = std::get_if<rules::Interpolated>(&env.rule()))
        kappa = m->kappa;
    out.eps_p = kappa * eps_p;
    out.s_p = kappa * s_p;
    out.eps_r = kappa;
    out.s_r = 0.0;
    return out;
}

} // namespace perfrl
