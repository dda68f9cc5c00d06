#include "oracles.hpp"

#include "perfrl/errors.hpp"
#include "perfrl/optimizer.hpp"

#include <doctest.h>

#include <cmath>

using namespace perfrl;

namespace {

/// Optimal entropy-regularized policy of a fixed MDP by soft value iteration.
Policy soft_value_iteration(const TransitionKernel& p, const RewardTable& r, const MdpBase& base, double lambda) {
    const std::size_t ns = base.n_states, na = base.n_actions;
    std::vector<double> v(ns, 0.0);
    Table q(ns, na);
    for (int it = 0; it < 5000; ++it) {
        for (std::size_t s = 0; s < ns; ++s)
            for (std::size_t a = 0; a < na; ++a) {
                double next = 0.0;
                for (std::size_t s2 = 0; s2 < ns; ++s2)
                    next += p(s, a, s2) * v[s2];
                q(s, a) = r(s, a) + base.gamma * next;
            }
        for (std::size_t s = 0; s < ns; ++s) {
            double m = q(s, 0);
            for (std::size_t a = 1; a < na; ++a)
                m = std::max(m, q(s, a));
            double z = 0.0;
            for (std::size_t a = 0; a < na; ++a)
                z += std::exp((q(s, a) - m) / lambda);
            v[s] = m + lambda * std::log(z);
        }
    }
    Table pi(ns, na);
    for (std::size_t s = 0; s < ns; ++s) {
        double z = 0.0;
        for (std::size_t a = 0; a < na; ++a)
            z += std::exp((q(s, a) - v[s]) / lambda);
        for (std::size_t a = 0; a < na; ++a)
            pi(s, a) = std::exp((q(s, a) - v[s]) / lambda) / z;
    }
    return Policy(pi);
}

FwConfig small_config(std::size_t iterations) {
    FwConfig cfg;
    cfg.iterations = iterations;
    cfg.batch = 20;
    cfg.floor = 1e-2;
    cfg.probe = 1e-3;
    cfg.step = 0.1;
    cfg.seed = 5;
    return cfg;
}

} // namespace

TEST_CASE("lmo places the heavy mass on the argmax") {
    const MdpBase base = MdpBase::make(2, 3, 0.9);
    Table g(2, 3);
    g(0, 0) = 0.1; g(0, 1) = 0.7; g(0, 2) = -1.0;
    g(1, 0) = 2.0; g(1, 1) = 2.0; g(1, 2) = 1.0;
    const Policy out = lmo(g, 0.1, base);
    CHECK(out(0, 0) == doctest::Approx(0.1));
    CHECK(out(0, 1) == doctest::Approx(0.8));
    CHECK(out(0, 2) == doctest::Approx(0.1));
    // Tie between actions 0 and 1: lowest index wins.
    CHECK(out(1, 0) == doctest::Approx(0.8));
    CHECK(out(1, 1) == doctest::Approx(0.1));
}

TEST_CASE("lmo matches brute-force vertex enumeration") {
    SeededRng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t ns = 1 + rng.index(4), na = 2 + rng.index(3);
        const MdpBase base = MdpBase::make(ns, na, 0.9);
        const double floor = rng.uniform(0.0, 1.0 / static_cast<double>(na));
        Table g(ns, na);
        for (double& x : g.flat())
            x = rng.normal();
        const Policy out = lmo(g, floor, base);
        CHECK(out.table() == oracle::brute_force_lmo(g, floor));
        // <g, lmo> >= <g, pi> for floored policies.
        for (int k = 0; k < 5; ++k) {
            const Policy other = sample_policy(ns, na, rng, floor);
            CHECK(dot(g, out.table()) >= dot(g, other.table()) - 1e-12);
        }
    }
}

TEST_CASE("fw_step is a convex combination") {
    Table a(1, 2), b(1, 2);
    a(0, 0) = 1.0; a(0, 1) = 0.0;
    b(0, 0) = 0.0; b(0, 1) = 1.0;
    const Policy mid = fw_step(Policy(a), Policy(b), 0.25);
    CHECK(mid(0, 0) == doctest::Approx(0.75));
    CHECK(mid(0, 1) == doctest::Approx(0.25));
    CHECK(fw_step(Policy(a), Policy(b), 1.0) == Policy(b));
}

TEST_CASE("stationarity gaps") {
    Table g(1, 3);
    g(0, 0) = 1.0; g(0, 1) = 2.0; g(0, 2) = 4.0;
    const Policy pi = Policy::uniform(1, 3);
    CHECK(stationarity_gap(g, pi, GapDomain::full) == doctest::Approx(4.0 - 7.0 / 3.0));
    // Floored target (0.1, 0.1, 0.8): 0.1 + 0.2 + 3.2 = 3.5.
    CHECK(stationarity_gap(g, pi, GapDomain::floored, 0.1) == doctest::Approx(3.5 - 7.0 / 3.0));
    CHECK(stationarity_gap(g, pi, GapDomain::floored, 0.1) <= stationarity_gap(g, pi, GapDomain::full));
    CHECK(stationarity_gap(Table(2, 3, 1.5), Policy::uniform(2, 3), GapDomain::full) == 0.0);
}

TEST_CASE("run_zfw") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(3, 3, 0.9));
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    SeededRng prng(3);
    const Policy init = sample_policy(3, 3, prng, 0.05);

    SUBCASE("a single iteration returns the initial policy") {
        const RunResult res = run_zfw(env, reg, small_config(1), init);
        REQUIRE(res.trace.size() == 1);
        CHECK(res.output_policy == init);
        CHECK(res.output_index == 0);
        CHECK(res.trace[0].v_reg == doctest::Approx(performative_value(env, init, reg)).epsilon(1e-14));
    }
    SUBCASE("iterates stay in the floored set and runs repeat exactly") {
        FwConfig cfg = small_config(30);
        cfg.keep_iterates = true;
        cfg.record_oracle_gap = true;
        const RunResult a = run_zfw(env, reg, cfg, init);
        const RunResult b = run_zfw(env, reg, cfg, init);
        REQUIRE(a.iterates.size() == 30);
        REQUIRE(a.oracle_gaps.size() == 30);
        for (std::size_t t = 0; t < a.iterates.size(); ++t) {
            CHECK(a.iterates[t].in_floored(cfg.floor - kFloorTol));
            CHECK(a.trace[t].min_mass >= cfg.floor - kFloorTol);
            CHECK(a.trace[t].t == t);
        }
        CHECK(a.final_policy == b.final_policy);
        CHECK(a.output_index == b.output_index);
        for (std::size_t t = 0; t < 30; ++t)
            CHECK(a.trace[t].fw_gap == b.trace[t].fw_gap);
        for (const IterationRecord& r : a.trace)
            CHECK(r.fw_gap >= a.trace[a.output_index].fw_gap);
        CHECK(a.output_policy == a.iterates[a.output_index]);
    }
    SUBCASE("value improves on average") {
        const RunResult res = run_zfw(env, reg, small_config(60), Policy::uniform(3, 3));
        CHECK(res.trace.back().v_reg > res.trace.front().v_reg);
    }
    SUBCASE("an initial policy below the floor is rejected") {
        FwConfig cfg = small_config(5);
        cfg.floor = 0.2;
        cfg.probe = 0.01;
        Table t(3, 3, 1.0 / 3.0);
        t(0, 0) = 0.9; t(0, 1) = 0.05; t(0, 2) = 0.05;
        CHECK_THROWS_AS(run_zfw(env, reg, cfg, Policy(t)), PreconditionError);
    }
    SUBCASE("invalid configurations") {
        FwConfig cfg = small_config(5);
        cfg.probe = cfg.floor;
        CHECK_THROWS_AS(cfg.validate(3), PreconditionError);
        cfg = small_config(5);
        cfg.floor = 0.5;
        CHECK_THROWS_AS(cfg.validate(3), PreconditionError);
        cfg = small_config(0);
        CHECK_THROWS_AS(cfg.validate(3), PreconditionError);
    }
}

TEST_CASE("repeated retraining on a fixed env reaches the soft-optimal policy") {
    SeededRng rng(13);
    const MdpBase base = MdpBase::make(3, 2, 0.8);
    const TransitionKernel p = sample_kernel(3, 2, rng);
    const RewardTable r = sample_reward(3, 2, rng);
    const PerformativeEnv env = PerformativeEnv::fixed(base, p, r);
    const double lambda = 0.5;
    const Policy target = soft_value_iteration(p, r, base, lambda);
    const RunResult res = repeated_retraining(env, RegCoefficient::entropy(lambda), {20, 50, 0.3, false},
                                              Policy::uniform(3, 2));
    REQUIRE(res.trace.size() == 21);
    CHECK(distance(res.final_policy.table(), target.table()) < 1e-9);
    CHECK(res.output_policy == res.final_policy);
    CHECK(res.trace.back().fw_gap < 1e-6);
}

TEST_CASE("repeated retraining on the affine-mix env stays at the uniform policy") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(5, 4, 0.95));
    const RunResult res = repeated_retraining(env, RegCoefficient::entropy(0.5), {10, 20, 0.01, false},
                                              Policy::uniform(5, 4));
    CHECK(distance(res.final_policy.table(), Policy::uniform(5, 4).table()) < 1e-12);
    CHECK(res.trace.back().v_reg == doctest::Approx(18.8629436112).epsilon(1e-10));
}

TEST_CASE("repeated retraining edge cases") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(2, 2, 0.9));
    const RunResult none = repeated_retraining(env, RegCoefficient::entropy(0.5), {0, 10, 0.01, false},
                                               Policy::uniform(2, 2));
    CHECK(none.trace.size() == 1);
    CHECK(none.final_policy == Policy::uniform(2, 2));
    // eta lambda / (1 - g) = 0.5 * 0.5 / 0.1 >= 1.
    CHECK_THROWS_AS(repeated_retraining(env, RegCoefficient::entropy(0.5), {2, 10, 0.5, false}, Policy::uniform(2, 2)),
                    PreconditionError);
}
