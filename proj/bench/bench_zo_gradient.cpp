// Serial reference vs OpenMP kernel for the two-point gradient estimator.
// Run with PERFRL_THREADS (or OMP_NUM_THREADS) set to compare thread counts.

#include "perfrl/grad_est.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace perfrl;

PerformativeEnv builtin(std::size_t n_states, std::size_t n_actions) {
    return PerformativeEnv::affine_mix(MdpBase::make(n_states, n_actions, 0.95));
}

template <Table (*Kernel)(const PerformativeEnv&, const Policy&, const RegCoefficient&, const ZoOptions&, SeededRng&)>
void run_kernel(benchmark::State& state) {
    const auto n_states = static_cast<std::size_t>(state.range(0));
    const auto batch = static_cast<std::size_t>(state.range(1));
    const PerformativeEnv env = builtin(n_states, 4);
    const RegCoefficient reg = RegCoefficient::entropy(0.5);
    const Policy pi = Policy::uniform(n_states, 4);
    const ZoOptions opts{1e-4, batch, 0.0, DirectionSampler::gaussian};
    SeededRng rng(1);
    for (auto _ : state)
        benchmark::DoNotOptimize(Kernel(env, pi, reg, opts, rng));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * 2));
}

void sizes(benchmark::internal::Benchmark* b) {
    for (std::int64_t s : {5, 20, 50})
        for (std::int64_t n : {300, 1000})
            b->Args({s, n});
    b->ArgNames({"states", "batch"})->Unit(benchmark::kMillisecond);
}

BENCHMARK(run_kernel<zo_gradient_serial>)->Name("zo_gradient/serial")->Apply(sizes);
BENCHMARK(run_kernel<zo_gradient_parallel>)->Name("zo_gradient/openmp")->Apply(sizes);

} // namespace

int main(int argc, char** argv) {
    configure_threads_from_env();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv))
        return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
