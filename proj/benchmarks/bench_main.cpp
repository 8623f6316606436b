#include <benchmark/benchmark.h>

#include "olm/csv.hpp"
#include "olm/gbt.hpp"
#include "olm/matrix.hpp"
#include "olm/rng.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace {

// Draw a synthetic count regression problem: y ~ Poisson(exp(x1 + 0.5*x2)).
void make_problem(std::size_t n, olm::Matrix& X, std::vector<double>& y,
                  std::uint64_t seed) {
    olm::Rng rng(seed);
    X = olm::Matrix(n, 3);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) X.at(i, c) = rng.uniform(-1.5, 1.5);
        y[i] = static_cast<double>(rng.poisson(std::exp(X.at(i, 0) + 0.5 * X.at(i, 1))));
    }
}

void BM_BestSplit(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    olm::Matrix X;
    std::vector<double> y;
    make_problem(n, X, y, 11);

    std::vector<std::size_t> rows(n);
    std::vector<double> grad(n), hess(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = i;
        olm::gbt::GradHess gh = olm::gbt::poisson_grad_hess(0.0, y[i]);
        grad[i] = gh.grad;
        hess[i] = gh.hess;
    }
    olm::gbt::Hyperparams hp;
    for (auto _ : state) {
        auto split = olm::gbt::best_split(X, rows, grad, hess, hp);
        benchmark::DoNotOptimize(split);
    }
}
BENCHMARK(BM_BestSplit)->Arg(64)->Arg(256)->Arg(1024);

void BM_Fit(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    olm::Matrix X;
    std::vector<double> y;
    make_problem(n, X, y, 12);

    olm::gbt::Hyperparams hp;
    hp.max_depth = 3;
    hp.num_rounds = 50;
    for (auto _ : state) {
        olm::gbt::GbtModel model = olm::gbt::fit(X, y, hp, 1);
        benchmark::DoNotOptimize(model);
    }
}
BENCHMARK(BM_Fit)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
    const std::size_t n = 512;
    olm::Matrix X;
    std::vector<double> y;
    make_problem(n, X, y, 13);
    olm::gbt::Hyperparams hp;
    hp.num_rounds = 100;
    olm::gbt::GbtModel model = olm::gbt::fit(X, y, hp, 1);
    for (auto _ : state) {
        std::vector<double> pred = olm::gbt::predict(model, X);
        benchmark::DoNotOptimize(pred);
    }
}
BENCHMARK(BM_Predict);

void BM_CsvRead(benchmark::State& state) {
    std::ostringstream build;
    build << "a,b,c,d\n";
    for (int i = 0; i < 2000; ++i) build << i << ",text value," << i * 0.5 << ",\"q,uoted\"\n";
    const std::string text = build.str();
    for (auto _ : state) {
        std::istringstream in(text);
        olm::CsvTable t = olm::read_csv(in);
        benchmark::DoNotOptimize(t);
    }
}
BENCHMARK(BM_CsvRead)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
