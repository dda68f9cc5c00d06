#include "perfrl/grad_est.hpp"

#include "perfrl/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace perfrl {

Table project_l0(const Table& v) {
    Table out = v;
    const auto n = static_cast<double>(v.cols());
    for (std::size_t s = 0; s < v.rows(); ++s) {
        double mean = 0.0;
        for (double x : v.row(s))
            mean += x;
        mean /= n;
        for (double& x : out.row(s))
            x -= mean;
    }
    return out;
}

namespace {

Table gaussian_table(const MdpBase& base, SeededRng& rng) {
    Table t(base.n_states, base.n_actions);
    for (double& x : t.flat())
        x = rng.normal();
    return t;
}

void scale_in_place(Table& t, double factor) {
    for (double& x : t.flat())
        x *= factor;
}

} // namespace

Table sample_direction(const MdpBase& base, SeededRng& rng, DirectionSampler sampler) {
    if (base.n_actions < 2)
        throw PreconditionError("direction sampling needs at least two actions");
    for (;;) {
        Table v = gaussian_table(base, rng);
        if (sampler == DirectionSampler::sphere) {
            const double full = frobenius_norm(v);
            if (full < 1e-12)
                continue;
            scale_in_place(v, 1.0 / full);
        }
        Table u = project_l0(v);
        const double norm = frobenius_norm(u);
        if (norm < 1e-12)
            continue;
        scale_in_place(u, 1.0 / norm);
        return u;
    }
}

std::vector<std::vector<double>> l0_basis(std::size_t n_actions) {
    if (n_actions < 2)
        throw PreconditionError("the zero-sum basis needs at least two actions");
    std::vector<std::vector<double>> basis;
    basis.reserve(n_actions - 1);
    for (std::size_t k = 1; k < n_actions; ++k) {
        const auto kd = static_cast<double>(k);
        const double c = 1.0 / std::sqrt(kd * (kd + 1.0));
        std::vector<double> e(n_actions, 0.0);
        for (std::size_t i = 0; i < k; ++i)
            e[i] = c;
        e[k] = -kd * c;
        basis.push_back(std::move(e));
    }
    return basis;
}

Table fd_performative_gradient(const PerformativeEnv& env, const Policy& pi, const RegCoefficient& reg, double h) {
    const MdpBase& base = env.base();
    check_compatible(pi, base);
    if (!(h > 0.0) || min_policy_mass(pi) <= h)
        throw PreconditionError("finite-difference step must be positive and below the minimum policy mass");
    const auto basis = l0_basis(base.n_actions);
    Table grad(base.n_states, base.n_actions);
    for (std::size_t s = 0; s < base.n_states; ++s)
        for (const auto& e : basis) {
            Table plus = pi.table();
            Table minus = pi.table();
            for (std::size_t a = 0; a < base.n_actions; ++a) {
                plus(s, a) += h * e[a];
                minus(s, a) -= h * e[a];
            }
            const double slope = (performative_value(env, Policy(std::move(plus)), reg) -
                                  performative_value(env, Policy(std::move(minus)), reg)) /
                                 (2.0 * h);
            for (std::size_t a = 0; a < base.n_actions; ++a)
                grad(s, a) += slope * e[a];
        }
    return grad;
}

int configure_threads_from_env() {
#ifdef _OPENMP
    if (const char* raw = std::getenv("PERFRL_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(raw, &end, 10);
        if (end != raw && n >= 1)
            omp_set_num_threads(static_cast<int>(n));
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace perfrl
