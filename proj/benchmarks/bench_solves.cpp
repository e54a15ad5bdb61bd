// Microbenchmarks for the structured solves against their dense equivalents.
// The point of the factored paths is asymptotic, so each benchmark pairs a
// structured routine with the dense computation it replaces at the same size.
#include <benchmark/benchmark.h>

#include <cmath>

#include "s2qn/linalg.hpp"
#include "s2qn/refinement.hpp"
#include "s2qn/rng.hpp"
#include "s2qn/solver.hpp"

using namespace s2qn;

namespace {

Vector randn(rng::Stream& s, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = s.next_gaussian();
  return v;
}

Matrix randn_matrix(rng::Stream& s, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = s.next_gaussian();
  return m;
}

Matrix make_spd(rng::Stream& s, Eigen::Index n) {
  const Matrix a = randn_matrix(s, n, n);
  return a * a.transpose() / static_cast<double>(n) +
         0.5 * Matrix::Identity(n, n);
}

// A five-pair window with consistent positive curvature.
refinement::PairBuffer window_of_pairs(rng::Stream& s, Eigen::Index n) {
  const Matrix target = make_spd(s, n);
  refinement::PairBuffer buffer;
  for (int i = 0; i < 5; ++i) {
    refinement::CurvaturePair pair;
    pair.u = randn(s, n);
    pair.v = target * pair.u;
    buffer.push(std::move(pair));
  }
  return buffer;
}

void bench_smw_direction(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  rng::Stream s(1);
  const Matrix h = make_spd(s, n);
  const auto lam = refinement::build_compact(window_of_pairs(s, n), 1.0, n);
  const Vector g = randn(s, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver::direction_smw(h, lam, 0.1, g));
  }
}
BENCHMARK(bench_smw_direction)->Arg(64)->Arg(128)->Arg(256);

void bench_smw_direction_dense(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  rng::Stream s(1);
  const Matrix h = make_spd(s, n);
  const auto lam = refinement::build_compact(window_of_pairs(s, n), 1.0, n);
  const Vector g = randn(s, n);
  const Matrix lam_dense = lam.materialize();
  for (auto _ : state) {
    const Matrix b = h + lam_dense + 0.1 * Matrix::Identity(n, n);
    benchmark::DoNotOptimize(Vector(-linalg::SymCholesky(b).solve(g)));
  }
}
BENCHMARK(bench_smw_direction_dense)->Arg(64)->Arg(128)->Arg(256);

void bench_lowrank_direction(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  rng::Stream s(2);
  linalg::LowRankFactor q{randn_matrix(s, n, 8) / std::sqrt(double(n))};
  const auto lam = refinement::build_compact(window_of_pairs(s, n), 1.0, n);
  const Vector g = randn(s, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(solver::direction_lowrank(q, lam, 0.1, g));
  }
}
BENCHMARK(bench_lowrank_direction)->Arg(64)->Arg(256)->Arg(1024);

void bench_lowrank_direction_dense(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  rng::Stream s(2);
  linalg::LowRankFactor q{randn_matrix(s, n, 8) / std::sqrt(double(n))};
  const auto lam = refinement::build_compact(window_of_pairs(s, n), 1.0, n);
  const Vector g = randn(s, n);
  const Matrix lam_dense = lam.materialize();
  for (auto _ : state) {
    const Matrix b = q.materialize() + lam_dense + 0.1 * Matrix::Identity(n, n);
    benchmark::DoNotOptimize(Vector(-linalg::SymCholesky(b).solve(g)));
  }
}
BENCHMARK(bench_lowrank_direction_dense)->Arg(64)->Arg(256)->Arg(1024);

void bench_kron_apply(benchmark::State& state) {
  const Eigen::Index m = state.range(0);
  rng::Stream s(3);
  const Matrix a = make_spd(s, m);
  const Matrix g = make_spd(s, m);
  const Vector x = randn(s, m * m);
  for (auto _ : state) {
    benchmark::DoNotOptimize(linalg::kron_apply(a, g, x));
  }
}
BENCHMARK(bench_kron_apply)->Arg(16)->Arg(32)->Arg(64);

void bench_kron_apply_materialized(benchmark::State& state) {
  const Eigen::Index m = state.range(0);
  rng::Stream s(3);
  const Matrix a = make_spd(s, m);
  const Matrix g = make_spd(s, m);
  const Vector x = randn(s, m * m);
  const Matrix full = linalg::KroneckerOperator(a, g).materialize();
  for (auto _ : state) {
    benchmark::DoNotOptimize(Vector(full * x));
  }
}
BENCHMARK(bench_kron_apply_materialized)->Arg(16)->Arg(32)->Arg(64);

void bench_build_compact(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  rng::Stream s(4);
  const auto buffer = window_of_pairs(s, n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(refinement::build_compact(buffer, 1.0, n));
  }
}
BENCHMARK(bench_build_compact)->Arg(64)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
