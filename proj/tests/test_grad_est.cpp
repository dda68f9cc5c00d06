#include "oracles.hpp"

#include "perfrl/errors.hpp"
#include "perfrl/grad_est.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <cstring>

using namespace perfrl;

namespace {

double max_abs_diff(const Table& a, const Table& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        worst = std::max(worst, std::abs(a.flat()[k] - b.flat()[k]));
    return worst;
}

bool bit_equal(const Table& a, const Table& b) {
    return a.same_shape(b) && std::memcmp(a.flat().data(), b.flat().data(), a.size() * sizeof(double)) == 0;
}

PerformativeEnv random_fixed(std::size_t ns, std::size_t na, double gamma, std::uint64_t seed) {
    SeededRng rng(seed);
    return PerformativeEnv::fixed(MdpBase::make(ns, na, gamma), sample_kernel(ns, na, rng), sample_reward(ns, na, rng));
}

} // namespace

TEST_CASE("project_l0") {
    Table v(2, 3);
    v(0, 0) = 1.0; v(0, 1) = 2.0; v(0, 2) = 3.0;
    v(1, 0) = 5.0; v(1, 1) = 5.0; v(1, 2) = 5.0;
    const Table p = project_l0(v);
    CHECK(p(0, 0) == doctest::Approx(-1.0));
    CHECK(p(0, 1) == doctest::Approx(0.0));
    CHECK(p(0, 2) == doctest::Approx(1.0));
    for (std::size_t a = 0; a < 3; ++a)
        CHECK(p(1, a) == 0.0);
    CHECK(max_abs_diff(project_l0(p), p) < 1e-15);
}

TEST_CASE("l0_basis is orthonormal and zero-sum") {
    const auto two = l0_basis(2);
    REQUIRE(two.size() == 1);
    CHECK(two[0][0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(two[0][1] == doctest::Approx(-1.0 / std::sqrt(2.0)));
    for (std::size_t n : {2u, 3u, 5u, 8u}) {
        const auto basis = l0_basis(n);
        REQUIRE(basis.size() == n - 1);
        for (std::size_t i = 0; i < basis.size(); ++i) {
            double sum = 0.0;
            for (double x : basis[i])
                sum += x;
            CHECK(std::abs(sum) < 1e-14);
            for (std::size_t j = 0; j < basis.size(); ++j) {
                double g = 0.0;
                for (std::size_t a = 0; a < n; ++a)
                    g += basis[i][a] * basis[j][a];
                CHECK(std::abs(g - (i == j ? 1.0 : 0.0)) < 1e-14);
            }
        }
    }
}

TEST_CASE("sampled directions lie on the unit sphere of L0") {
    const MdpBase base = MdpBase::make(4, 3, 0.9);
    SeededRng rng(5);
    for (DirectionSampler sampler : {DirectionSampler::gaussian, DirectionSampler::sphere})
        for (int i = 0; i < 200; ++i) {
            const Table u = sample_direction(base, rng, sampler);
            CHECK(frobenius_norm(u) == doctest::Approx(1.0).epsilon(1e-13));
            for (std::size_t s = 0; s < 4; ++s)
                CHECK(std::abs(u(s, 0) + u(s, 1) + u(s, 2)) < 1e-14);
        }
    CHECK_THROWS_AS(sample_direction(MdpBase::make(2, 1, 0.5), rng), PreconditionError);
}

TEST_CASE("direction law is isotropic and both samplers agree") {
    // E[u u^T] = P_L0 / dim(L0) for the uniform law on the unit sphere of L0.
    const std::size_t ns = 2, na = 3, n = ns * na;
    const double dim = static_cast<double>(ns * (na - 1));
    const MdpBase base = MdpBase::make(ns, na, 0.9);
    const std::size_t draws = 100000;
    SeededRng rng(21);
    std::vector<double> second(n * n, 0.0);
    std::vector<double> first_coord_g, first_coord_s;
    for (std::size_t i = 0; i < draws; ++i) {
        const Table u = sample_direction(base, rng, DirectionSampler::gaussian);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                second[j * n + k] += u.flat()[j] * u.flat()[k];
        first_coord_g.push_back(u.flat()[0]);
        first_coord_s.push_back(sample_direction(base, rng, DirectionSampler::sphere).flat()[0]);
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
            const bool same_state = j / na == k / na;
            const double proj = same_state ? (j == k ? 1.0 : 0.0) - 1.0 / static_cast<double>(na) : 0.0;
            worst = std::max(worst, std::abs(second[j * n + k] / static_cast<double>(draws) - proj / dim));
        }
    CHECK(worst < 0.02 / dim);
    // KS critical value at alpha = 0.001 for two samples of 1e5 is about 0.0087.
    CHECK(oracle::ks_statistic(first_coord_g, first_coord_s) < 0.0087);
}

TEST_CASE("zo_gradient preconditions") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(3, 2, 0.9));
    const Policy pi = Policy::uniform(3, 2);
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    SeededRng rng(1);
    ZoOptions opts;
    opts.delta = 0.5;
    opts.batch = 4;
    CHECK_THROWS_AS(zo_gradient(env, pi, reg, opts, rng), PreconditionError);
    opts.delta = 0.0;
    CHECK_THROWS_AS(zo_gradient(env, pi, reg, opts, rng), PreconditionError);
    opts.delta = 1e-3;
    opts.batch = 0;
    CHECK_THROWS_AS(zo_gradient(env, pi, reg, opts, rng), PreconditionError);
}

TEST_CASE("zo_gradient consumes exactly one draw") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(3, 2, 0.9));
    ZoOptions opts;
    opts.delta = 1e-3;
    opts.batch = 16;
    opts.eps_v = 1e-3;
    SeededRng used(99), reference(99);
    (void)zo_gradient(env, Policy::uniform(3, 2), RegCoefficient::entropy(0.5), opts, used);
    reference.next_u64();
    CHECK(used.next_u64() == reference.next_u64());
}

TEST_CASE("serial and parallel kernels are bit-identical") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(5, 4, 0.95));
    SeededRng prng(8);
    const Policy pi = sample_policy(5, 4, prng, 0.01);
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    ZoOptions opts;
    opts.delta = 1e-3;
    opts.batch = 64;
    opts.eps_v = 1e-4;
    SeededRng serial_rng(123);
    const Table reference = zo_gradient_serial(env, pi, reg, opts, serial_rng);
    const int saved = omp_get_max_threads();
    for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        SeededRng rng(123);
        CHECK(bit_equal(zo_gradient_parallel(env, pi, reg, opts, rng), reference));
        SeededRng rng2(123);
        CHECK(bit_equal(zo_gradient(env, pi, reg, opts, rng2), reference));
    }
    omp_set_num_threads(saved);
}

TEST_CASE("zo_gradient approximates the projected gradient") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(5, 4, 0.95));
    SeededRng prng(31);
    const Policy pi = sample_policy(5, 4, prng, 0.05);
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    const Table truth = fd_performative_gradient(env, pi, reg);
    ZoOptions opts;
    opts.delta = 1e-3;
    opts.batch = 4000;
    SeededRng rng(77);
    const Table est = zo_gradient(env, pi, reg, opts, rng);
    for (std::size_t s = 0; s < 5; ++s)
        CHECK(std::abs(est(s, 0) + est(s, 1) + est(s, 2) + est(s, 3)) < 1e-10);
    const double rel = distance(est, truth) / frobenius_norm(truth);
    INFO("relative error " << rel);
    CHECK(rel < 0.1);
}

TEST_CASE("finite-difference gradient matches the projected analytic gradient on a fixed env") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PerformativeEnv env = random_fixed(4, 3, 0.8, seed);
        const auto& fixed = std::get<rules::Fixed>(env.rule());
        SeededRng prng(seed + 100);
        const Policy pi = sample_policy(4, 3, prng, 0.05);
        const RegCoefficient reg = RegCoefficient::entropy(0.3);
        const Table analytic = project_l0(analytic_grad_fixed(pi, fixed.kernel, fixed.reward, env.base(), reg));
        const Table fd = fd_performative_gradient(env, pi, reg);
        CHECK(max_abs_diff(analytic, fd) < 1e-5);
    }
}

TEST_CASE("finite-difference error shrinks quadratically") {
    const PerformativeEnv env = PerformativeEnv::affine_mix(MdpBase::make(3, 3, 0.9));
    SeededRng prng(4);
    const Policy pi = sample_policy(3, 3, prng, 0.1);
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    const Table fine = fd_performative_gradient(env, pi, reg, 1e-4);
    const double e1 = distance(fd_performative_gradient(env, pi, reg, 2e-2), fine);
    const double e2 = distance(fd_performative_gradient(env, pi, reg, 1e-2), fine);
    INFO("errors " << e1 << " " << e2);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("fd gradient precondition and interpolated kappa 0") {
    const PerformativeEnv env = random_fixed(3, 2, 0.7, 9);
    const auto& fixed = std::get<rules::Fixed>(env.rule());
    const PerformativeEnv mixed = PerformativeEnv::interpolated(env.base(), fixed.kernel, fixed.reward, 0.0);
    SeededRng prng(2);
    const Policy pi = sample_policy(3, 2, prng, 0.1);
    const RegCoefficient reg = RegCoefficient::entropy(0.2);
    CHECK(fd_performative_gradient(env, pi, reg) == fd_performative_gradient(mixed, pi, reg));
    Table t(3, 2, 0.5);
    t(0, 0) = 1.0;
    t(0, 1) = 0.0;
    CHECK_THROWS_AS(fd_performative_gradient(env, Policy(t), reg), PreconditionError);
}
