#include "oracles.hpp"

#include "perfrl/errors.hpp"
#include "perfrl/mdp.hpp"

#include <doctest.h>

#include <array>
#include <numeric>

using namespace perfrl;

TEST_CASE("single state occupancy is the policy row") {
    const MdpBase base = MdpBase::make(1, 2, 0.9);
    const Policy mixed = [] {
        Table t(1, 2);
        t(0, 0) = 0.3;
        t(0, 1) = 0.7;
        return Policy(t);
    }();
    SeededRng rng(3);
    const TransitionKernel p = sample_kernel(1, 2, rng);
    const OccupancyMeasure d = occupancy_measure(mixed, p, base);
    CHECK(d.joint(0, 0) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(d.joint(0, 1) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("two state chain matches the truncated horizon sum") {
    const MdpBase base = MdpBase::make(2, 1, 0.5, {1.0, 0.0});
    const TransitionKernel p(2, 1, {0.0, 1.0, 0.0, 1.0});
    const Policy pi = Policy::uniform(2, 1);
    const OccupancyMeasure d = occupancy_measure(pi, p, base);
    const auto ref = oracle::truncated_occupancy(pi, p, base, 100);
    CHECK(ref[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ref[1] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(d.marginal[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(d.marginal[1] == doctest::Approx(ref[1]).epsilon(1e-12));
}

TEST_CASE("random occupancies: mass, flow residual and horizon oracle") {
    SeededRng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t ns = 1 + rng.index(6);
        const std::size_t na = 1 + rng.index(5);
        const double gamma = std::array{0.5, 0.9, 0.95}[rng.index(3)];
        const MdpBase base = MdpBase::make(ns, na, gamma, sample_simplex(ns, rng));
        const Policy pi = sample_policy(ns, na, rng);
        const TransitionKernel p = sample_kernel(ns, na, rng);
        const OccupancyMeasure d = occupancy_measure(pi, p, base);

        const auto flat = d.joint.flat();
        CHECK(std::accumulate(flat.begin(), flat.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(bellman_flow_residual(d, pi, p, base) <= 1e-12);
        const auto ref = oracle::truncated_occupancy(pi, p, base, 1000);
        for (std::size_t s = 0; s < ns; ++s)
            CHECK(std::abs(d.marginal[s] - ref[s]) <= 1e-12);
    }
}

TEST_CASE("min_policy_mass") {
    CHECK(min_policy_mass(Policy::uniform(3, 4)) == 0.25);
    Table det(2, 2);
    det(0, 0) = 1.0;
    det(1, 1) = 1.0;
    CHECK(min_policy_mass(Policy(det)) == 0.0);
    Table t(2, 2);
    t(0, 0) = 0.1;
    t(0, 1) = 0.9;
    t(1, 0) = 0.3;
    t(1, 1) = 0.7;
    CHECK(min_policy_mass(Policy(t)) == 0.1);
}

TEST_CASE("policy validation rejects bad rows and never renormalizes") {
    Table t(1, 2);
    t(0, 0) = 0.5;
    t(0, 1) = 0.6;
    CHECK_THROWS_AS(Policy{t}, PreconditionError);
    t(0, 1) = 0.5 + 1e-13;
    const Policy close(t);
    CHECK(close(0, 1) == 0.5 + 1e-13);
    t(0, 0) = -0.1;
    t(0, 1) = 1.1;
    CHECK_THROWS_AS(Policy{t}, PreconditionError);
}

TEST_CASE("kernel, reward and base validation") {
    CHECK_THROWS_AS(TransitionKernel(2, 1, {0.5, 0.5, 0.2}), PreconditionError);
    CHECK_THROWS_AS(TransitionKernel(2, 1, {0.5, 0.6, 0.5, 0.5}), PreconditionError);
    CHECK_THROWS_AS(RewardTable(Table(1, 1, 1.5)), PreconditionError);
    CHECK_THROWS_AS(MdpBase::make(2, 2, 1.0), PreconditionError);
    CHECK_THROWS_AS(MdpBase::make(2, 2, 0.5, {0.4, 0.4}), PreconditionError);
    CHECK_NOTHROW(MdpBase::make(2, 2, 0.0));
}

TEST_CASE("sample_policy respects the floor") {
    SeededRng rng(5);
    for (int i = 0; i < 20; ++i) {
        const Policy pi = sample_policy(4, 5, rng, 0.05);
        CHECK(pi.in_floored(0.05 - 1e-15));
    }
    CHECK_THROWS_AS(sample_policy(2, 4, rng, 0.25), PreconditionError);
}

TEST_CASE("rng streams are deterministic and distinct") {
    const SeededRng root(42);
    SeededRng a = root.stream(3);
    SeededRng b = root.stream(3);
    SeededRng c = root.stream(4);
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
}
