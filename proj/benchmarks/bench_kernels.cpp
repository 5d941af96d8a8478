#include <benchmark/benchmark.h>

#include <random>

#include "ntkw/network.hpp"
#include "ntkw/ntk.hpp"
#include "ntkw/rng.hpp"

namespace {

Eigen::MatrixXd sphere_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    auto rng = ntkw::make_rng(seed, "bench");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = gauss(rng);
        x.row(i) /= x.row(i).norm();
    }
    return x;
}

void BM_KernelStack(benchmark::State& state) {
    Eigen::MatrixXd x = sphere_rows(state.range(0), 32, 1);
    for (auto _ : state) {
        ntkw::KernelStack stack = ntkw::kernel_stack(x, 5);
        benchmark::DoNotOptimize(stack.theta.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KernelStack)->Arg(64)->Arg(128)->Arg(256)->Complexity();

void BM_EmpiricalGram(benchmark::State& state) {
    const Eigen::Index m = state.range(0);
    Eigen::MatrixXd x = sphere_rows(16, 32, 2);
    ntkw::NetParams params = ntkw::init_params(m, 32, 3, 2);
    for (auto _ : state) {
        ntkw::GramMatrix gram = ntkw::empirical_gram(params, x);
        benchmark::DoNotOptimize(gram.values.data());
    }
}
BENCHMARK(BM_EmpiricalGram)->Arg(256)->Arg(1024)->Arg(4096);

void BM_ForwardBackward(benchmark::State& state) {
    const Eigen::Index m = state.range(0);
    ntkw::NetParams params = ntkw::init_params(m, 32, 3, 3);
    Eigen::MatrixXd x = sphere_rows(1, 32, 3);
    Eigen::VectorXd input = x.row(0).transpose();
    for (auto _ : state) {
        ntkw::ActivationTrace trace = ntkw::forward(params, input);
        benchmark::DoNotOptimize(trace.output);
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(512)->Arg(2048)->Arg(8192);

}  // namespace

BENCHMARK_MAIN();
