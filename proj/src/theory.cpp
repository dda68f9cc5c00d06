#include "perfrl/theory.hpp"

#include "perfrl/errors.hpp"
#include "perfrl/grad_est.hpp"
#include "perfrl/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

namespace perfrl {

double TheoryConstants::require_pi_min() const {
    if (!pi_min)
        throw DomainError("pi_min is undefined without entropy regularization (lambda = 0)");
    if (!(*pi_min > 0.0))
        throw DomainError("pi_min underflows double precision (log pi_min = " + std::to_string(*log_pi_min) + ")");
    return *pi_min;
}

TheoryConstants compute_constants(const SensitivityConstants& consts, const MdpBase& base, const RegCoefficient& reg) {
    if (reg.kind != RegKind::entropy)
        throw PreconditionError("theory constants are defined for the entropy regularizer");
    consts.validate();
    const double ns = static_cast<double>(base.n_states);
    const double na = static_cast<double>(base.n_actions);
    const double g = base.gamma;
    const double lam = reg.lambda;
    const double d = consts.d_min;
    const double om = 1.0 - g;
    const double log_a = std::log(na);
    const double c = 1.0 + lam * log_a;
    const double ep = consts.eps_p, er = consts.eps_r, sp = consts.s_p, sr = consts.s_r;
    const double rs = std::sqrt(ns), ra = std::sqrt(na);

    TheoryConstants tc;
    tc.d_min = d;
    tc.mu1 = d * lam / om -
             6.0 * g * ns * c / (d * om * om * om) * (ep * (ra + g * ep * rs) + sp * om);
    tc.mu2 = (4.0 * er * (ra + ep * rs) + sr * om) / (d * d * om * om);
    tc.mu = tc.mu1 - tc.mu2;
    if (lam > 0.0) {
        const double expo = -1.0 / (lam * om) -
                            (2.0 * na * std::sqrt(2.0 * ns) / lam) * (ep * rs * c / om + er);
        tc.log_pi_min = expo - std::log(2.0) - log_a / om;
        tc.pi_min = std::exp(*tc.log_pi_min);
    }
    tc.l_lambda = (ra * (2.0 - g + g * lam * log_a) + ep * rs * c) / (om * om) + er / om;
    tc.ell_lambda = 3.0 * na * c / (om * om) + ep * std::sqrt(ns * na) * (5.0 + 6.0 * lam * log_a) / (om * om * om) +
                    er * (ra * om + rs * (g + 2.0 * ep)) / (na * om * om) +
                    (sp * rs * c + sr * om) / (na * om * om);
    tc.l_pi = ra * (2.0 - g + g * lam * log_a) / (om * om);
    tc.l_p = rs * c / (om * om);
    tc.ell_pi = std::sqrt(ns * na) * (2.0 + 3.0 * g * lam * log_a) / (om * om * om);
    tc.ell_p = 2.0 * g * ns * c / (om * om * om);
    return tc;
}

const std::array<const char*, 3> kCeilingNames = {"probe_inside_floor", "regularization", "batch_concentration"};

namespace {

std::size_t saturating_ceil(double x) {
    constexpr auto cap = static_cast<double>(std::numeric_limits<std::size_t>::max() / 2);
    return x >= cap ? static_cast<std::size_t>(cap) : static_cast<std::size_t>(std::ceil(x));
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

} // namespace

TheorySchedule theory_hyperparams(const TheoryConstants& tc, const SensitivityConstants& consts, const MdpBase& base,
                                  const RegCoefficient& reg, double target_eps, double fail_prob) {
    if (!(fail_prob > 0.0 && fail_prob < 1.0))
        throw PreconditionError("fail_prob must lie in (0, 1)");
    if (!(target_eps > 0.0))
        throw PreconditionError("target_eps must be positive");
    const double pm = tc.require_pi_min();
    const double ns = static_cast<double>(base.n_states);
    const double na = static_cast<double>(base.n_actions);
    const double om = 1.0 - base.gamma;
    const double d = consts.d_min;
    const double ell = tc.ell_lambda;
    const double big_l = tc.l_lambda;
    const double c = 1.0 + reg.lambda * std::log(na);
    const double eps = target_eps;

    TheorySchedule out;
    out.target_eps = eps;
    out.fail_prob = fail_prob;
    out.eps_ceilings = {24.0 * std::sqrt(2.0 * ns) * ell / d, 2.0 * reg.lambda / (5.0 * na * d * d * om),
                        288.0 * big_l * std::pow(ns, 1.5) * na / (d * pm)};
    out.binding_ceiling = static_cast<std::size_t>(std::ranges::min_element(out.eps_ceilings) - out.eps_ceilings.begin());
    if (eps > out.eps_ceilings[out.binding_ceiling])
        throw DomainError("target_eps " + fmt(eps) + " exceeds the admissible ceiling " +
                          fmt(out.eps_ceilings[out.binding_ceiling]) + " (binding: " +
                          kCeilingNames[out.binding_ceiling] + ")");

    const double eps2 = eps * eps;
    out.floor = pm / 3.0;
    out.step = d * pm * eps / (36.0 * ell * ns);
    out.iterations_exact = 432.0 * ell * ns * c / (pm * d * d * om * eps2);
    out.iterations = saturating_ceil(out.iterations_exact);
    out.probe = d * pm * eps / (144.0 * std::sqrt(2.0 * ns) * ell);
    out.eval_noise = pm * d * d * eps2 / (13824.0 * ell * ns * ns * na);
    const double lead = big_l * big_l * ns * ns * ns * na * na / (d * d * pm * pm * eps2);
    const double second = 1296.0 * ell * ns * ns * na * c / (d * d * fail_prob * pm * om * eps2);
    out.batch_exact = 663552.0 * lead * std::log(std::max(165888.0 * lead, second)) +
                      2.0 * std::log(3.0 * ns * na / fail_prob) + 3.0;
    out.batch = saturating_ceil(out.batch_exact);
    return out;
}

void ViolationReport::record(const std::string& where, double lhs, double rhs, double slack) {
    ++n_checked;
    const double excess = lhs - rhs - slack;
    max_excess = std::max(max_excess, excess);
    if (excess > 0.0 || !std::isfinite(excess)) {
        ++n_violations;
        violations.push_back({where, lhs, rhs, excess});
    }
}

namespace {

void require_positive_lambda(const RegCoefficient& reg, const char* check) {
    if (reg.kind != RegKind::entropy || !(reg.lambda > 0.0))
        throw PreconditionError(std::string(check) + " needs entropy regularization with lambda > 0");
}

/// Oracle gradient with the step shrunk near the boundary.
Table oracle_gradient(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg) {
    const double h = std::min(kOracleStep, 0.5 * min_policy_mass(pi));
    if (!(h > 0.0))
        throw PreconditionError("oracle gradient needs a strictly positive policy");
    return fd_performative_gradient(env, pi, reg, h);
}

} // namespace

ViolationReport check_gradient_dominance(const PerformativeEnv& env, const RegCoefficient& reg,
                                         const TheoryConstants& tc, std::size_t n_pairs, const SeededRng& rng) {
    require_positive_lambda(reg, "gradient dominance check");
    const MdpBase& base = env.base();
    ViolationReport report;
    report.check = "gradient_dominance";
    for (std::size_t i = 0; i < n_pairs; ++i) {
        SeededRng local = rng.stream(i);
        const Policy pi0 = sample_policy(base.n_states, base.n_actions, local, 0.01);
        const Policy pi1 = i == 0 ? pi0 : sample_policy(base.n_states, base.n_actions, local, 0.01);
        const double v0 = performative_value(env, pi0, reg);
        const double v1 = performative_value(env, pi1, reg);
        const double gap = stationarity_gap(oracle_gradient(env, pi0, reg), pi0, GapDomain::full);
        const double dist = distance(pi1.table(), pi0.table());
        const double rhs = v0 + gap / tc.d_min - 0.5 * tc.mu * dist * dist;
        report.record("pair " + std::to_string(i), v1, rhs, kDominanceSlack);
    }
    return report;
}

Policy swap_extremes(const Policy& pi) {
    Table out = pi.table();
    for (std::size_t s = 0; s < out.rows(); ++s) {
        auto row = out.row(s);
        const auto hi = std::ranges::max_element(row);
        const auto lo = std::ranges::min_element(row);
        std::iter_swap(hi, lo);
    }
    return Policy(std::move(out));
}

ViolationReport check_policy_lower_bound(const PerformativeEnv& env, const RegCoefficient& reg,
                                         const TheoryConstants& tc, const Policy& pi) {
    require_positive_lambda(reg, "policy lower bound check");
    check_compatible(pi, env.base());
    if (!tc.log_pi_min)
        throw DomainError("policy lower bound check needs pi_min");
    const MdpBase& base = env.base();
    const Table grad = oracle_gradient(env, pi, reg);
    const Policy swapped = swap_extremes(pi);
    const double inner = dot(grad, axpy(swapped.table(), -1.0, pi.table()));
    // Evaluated in log space: pi_min alone can underflow.
    const double bound = std::exp(*tc.log_pi_min - (2.0 * static_cast<double>(base.n_actions) / reg.lambda) *
                                                       (1.0 - base.gamma) * inner);

    ViolationReport report;
    report.check = "policy_lower_bound";
    for (std::size_t s = 0; s < base.n_states; ++s)
        for (std::size_t a = 0; a < base.n_actions; ++a)
            report.record("(" + std::to_string(s) + "," + std::to_string(a) + ")", bound, pi(s, a),
                          kLowerBoundSlack);
    report.notes.push_back("inner product <grad, pi' - pi> = " + fmt(inner));
    return report;
}

ViolationReport check_prop2(const PerformativeEnv& env, const RegCoefficient& reg, const TheoryConstants& tc,
                            const Policy& pi, double floor) {
    require_positive_lambda(reg, "floored gap check");
    check_compatible(pi, env.base());
    if (!tc.pi_min)
        throw DomainError("floored gap check needs pi_min");
    if (!(floor >= 0.0 && floor <= *tc.pi_min / 3.0 * (1.0 + 1e-12)))
        throw PreconditionError("floor must lie in [0, pi_min/3]");
    if (!pi.in_floored(floor - kFloorTol))
        throw PreconditionError("policy lies outside the floored simplex");
    const MdpBase& base = env.base();
    const Table grad = oracle_gradient(env, pi, reg);
    const double gap_floored = stationarity_gap(grad, pi, GapDomain::floored, floor);
    const double gap_full = stationarity_gap(grad, pi, GapDomain::full);
    const double premise = tc.d_min * reg.lambda / (5.0 * static_cast<double>(base.n_actions) * (1.0 - base.gamma));

    ViolationReport report;
    report.check = "floored_gap";
    report.notes.push_back("gap_floored = " + fmt(gap_floored) + ", gap_full = " + fmt(gap_full));
    if (gap_floored > premise) {
        ++report.n_skipped;
        report.notes.push_back("premise not met: gap_floored " + fmt(gap_floored) + " > " + fmt(premise));
        return report;
    }
    report.record("pi", gap_full, 2.0 * gap_floored, kProp2Slack);
    return report;
}

namespace {

constexpr std::size_t kGridUnits = 100; // resolution 1e-2
constexpr double kGridSlack = 1e-8;

/// All interior rows on the simplex with entries in multiples of 1/units.
std::vector<std::vector<double>> grid_rows(std::size_t n_actions, std::size_t units) {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> parts(n_actions, 1);
    auto emit = [&](auto&& self, std::size_t a, std::size_t left) -> void {
        if (a + 1 == n_actions) {
            parts[a] = left;
            std::vector<double> row(n_actions);
            for (std::size_t k = 0; k < n_actions; ++k)
                row[k] = static_cast<double>(parts[k]) / static_cast<double>(units);
            rows.push_back(std::move(row));
            return;
        }
        const std::size_t later = n_actions - a - 1;
        for (std::size_t q = 1; q + later <= left; ++q) {
            parts[a] = q;
            self(self, a + 1, left - q);
        }
    };
    emit(emit, 0, units);
    return rows;
}

/// Rebuilds a row so it sums to exactly 1 by assigning the residue to the last entry.
void close_row(std::span<double> row) {
    double head = 0.0;
    for (std::size_t a = 0; a + 1 < row.size(); ++a)
        head += row[a];
    row[row.size() - 1] = 1.0 - head;
}

Policy coarse_grid_max(const PerformativeEnv& env, const RegCoefficient& reg, double& best) {
    const MdpBase& base = env.base();
    const auto rows = grid_rows(base.n_actions, kGridUnits);
    std::size_t total = 1;
    for (std::size_t s = 0; s < base.n_states; ++s)
        total *= rows.size();

    auto policy_at = [&](std::size_t index) {
        Table t(base.n_states, base.n_actions);
        for (std::size_t s = 0; s < base.n_states; ++s) {
            const auto& r = rows[index % rows.size()];
            index /= rows.size();
            std::ranges::copy(r, t.row(s).begin());
            close_row(t.row(s));
        }
        return Policy(std::move(t));
    };

    std::vector<double> values(total);
    const auto n = static_cast<long long>(total);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i)
        values[static_cast<std::size_t>(i)] = performative_value(env, policy_at(static_cast<std::size_t>(i)), reg);

    const auto top = static_cast<std::size_t>(std::ranges::max_element(values) - values.begin());
    best = values[top];
    return policy_at(top);
}

/// Pairwise mass transfers within each state, shrinking the step to 1e-4.
Policy refine(const PerformativeEnv& env, const RegCoefficient& reg, Policy pi, double& best) {
    const MdpBase& base = env.base();
    for (double step : {1e-3, 1e-4}) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t s = 0; s < base.n_states; ++s)
                for (std::size_t to = 0; to < base.n_actions; ++to)
                    for (std::size_t from = 0; from < base.n_actions; ++from) {
                        if (to == from || pi(s, from) - step <= 0.0)
                            continue;
                        Table t = pi.table();
                        t(s, to) += step;
                        t(s, from) -= step;
                        close_row(t.row(s));
                        Policy candidate(std::move(t));
                        const double v = performative_value(env, candidate, reg);
                        if (v > best) {
                            best = v;
                            pi = std::move(candidate);
                            improved = true;
                        }
                    }
        }
    }
    return pi;
}

} // namespace

Policy grid_optimum(const PerformativeEnv& env, const RegCoefficient& reg, double* best_value) {
    const MdpBase& base = env.base();
    if (base.n_actions < 2 || base.n_states * (base.n_actions - 1) > 3)
        throw DomainError("grid search needs 1 <= |S|(|A|-1) <= 3, got |S| = " + std::to_string(base.n_states) +
                          ", |A| = " + std::to_string(base.n_actions));
    double best = 0.0;
    Policy pi = coarse_grid_max(env, reg, best);
    pi = refine(env, reg, std::move(pi), best);
    if (best_value)
        *best_value = best;
    return pi;
}

PoGapReport check_stationary_to_po(const PerformativeEnv& env, const RegCoefficient& reg, const TheoryConstants& tc,
                                   const Policy& pi, const Policy& best_policy, double best_value) {
    check_compatible(pi, env.base());
    PoGapReport out;
    out.best_policy = best_policy;
    out.best_value = best_value;
    out.value = performative_value(env, pi, reg);
    out.gap = out.best_value - out.value;
    const double gap_full = stationarity_gap(oracle_gradient(env, pi, reg), pi, GapDomain::full);
    out.bound = gap_full / tc.d_min + std::abs(tc.mu) * static_cast<double>(env.base().n_states);
    out.report.check = "stationary_to_optimal";
    out.report.record("pi", out.gap, out.bound, kGridSlack);
    return out;
}

PoGapReport check_stationary_to_po(const PerformativeEnv& env, const RegCoefficient& reg, const TheoryConstants& tc,
                                   const Policy& pi) {
    double best = 0.0;
    const Policy opt = grid_optimum(env, reg, &best);
    return check_stationary_to_po(env, reg, tc, pi, opt, best);
}

} // namespace perfrl
