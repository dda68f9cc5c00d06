#pragma once

#include "perfrl/mdp.hpp"
#include "perfrl/perf_env.hpp"
#include "perfrl/policy_eval.hpp"
#include "perfrl/rng.hpp"

#include <vector>

namespace perfrl {

/// Row-wise mean removal: the orthogonal projection onto
/// L0 = { u : sum_a u(a|s) = 0 for all s }.
Table project_l0(const Table& v);

/// How unit directions on the sphere of L0 are drawn. Both give the uniform law.
enum class DirectionSampler {
    gaussian, // project a standard normal table, normalize
    sphere,   // draw uniformly on the full unit sphere, project, normalize again
};

/// Unit-norm table with zero row sums, uniform on the unit sphere of L0.
Table sample_direction(const MdpBase& base, SeededRng& rng,
                       DirectionSampler sampler = DirectionSampler::gaussian);

/// Orthonormal basis of the zero-sum subspace of R^n_actions:
/// e_k = [1, ..., 1 (k times), -k, 0, ..., 0] / sqrt(k (k + 1)), k = 1..n-1.
std::vector<std::vector<double>> l0_basis(std::size_t n_actions);

struct ZoOptions {
    double delta = 1e-4;   // probe radius
    std::size_t batch = 1; // N direction pairs
    double eps_v = 0.0;    // evaluation noise bound
    DirectionSampler sampler = DirectionSampler::gaussian;
};

/// Two-point zeroth-order estimate of the projected performative gradient:
/// (|S|(|A|-1) / (2 N delta)) sum_i (V(pi + delta u_i) - V(pi - delta u_i)) u_i.
///
/// Consumes exactly one draw from `rng`; pair i then uses the child stream
/// derived from that draw and i, so the result does not depend on thread
/// count. Dispatches to the OpenMP kernel.
Table zo_gradient(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                  const ZoOptions& opts, SeededRng& rng);

/// Serial reference kernel. Bit-identical to zo_gradient_parallel.
Table zo_gradient_serial(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                         const ZoOptions& opts, SeededRng& rng);

/// OpenMP kernel: the 2N evaluations run concurrently, the weighted sum is
/// reduced in index order.
Table zo_gradient_parallel(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                           const ZoOptions& opts, SeededRng& rng);

/// Central differences of the performative value along each orthonormal basis
/// direction of L0, reassembled. Approximates proj_L0(grad V) to O(h^2).
Table fd_performative_gradient(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg,
                               double h = 1e-5);

/// Caps the OpenMP thread count from PERFRL_THREADS when set. Returns the cap in effect.
int configure_threads_from_env();

} // namespace perfrl
