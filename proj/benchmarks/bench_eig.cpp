// Microbenchmarks for the per-position eigendecomposition stage: one full
// m x m decomposition versus the same locations split into diagonal blocks,
// plus the end-to-end occurrence solve and a whole model forward for scale.
#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "vdyn/linalg.hpp"
#include "vdyn/model.hpp"
#include "vdyn/ode.hpp"
#include "vdyn/rng.hpp"

namespace {

std::vector<double> random_symmetric(vdyn::Rng& rng, std::size_t m) {
  std::vector<double> a(m * m);
  for (std::size_t i = 0; i < m; i++) {
    for (std::size_t j = i; j < m; j++) {
      const double v = rng.uniform();
      a[i * m + j] = v;
      a[j * m + i] = v;
    }
  }
  return a;
}

std::vector<std::vector<double>> matrix_pool(std::size_t m, int count) {
  vdyn::Rng rng(7);
  std::vector<std::vector<double>> pool;
  for (int i = 0; i < count; i++) pool.push_back(random_symmetric(rng, m));
  return pool;
}

void BM_FullEig(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const auto pool = matrix_pool(m, 32);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(vdyn::jacobi_sym_eig(pool[i++ % 32], m).lambda[0]);
  }
}

// Same total dimension cut into diagonal blocks of size block, the shape the
// grouped model decomposes per position.
void BM_BlockEig(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const std::size_t block = static_cast<std::size_t>(state.range(1));
  const std::size_t n_blocks = m / block;
  const auto pool = matrix_pool(m, 32);
  std::size_t i = 0;
  std::vector<double> sub(block * block);
  for (auto _ : state) {
    const auto& a = pool[i++ % 32];
    for (std::size_t b = 0; b < n_blocks; b++) {
      for (std::size_t r = 0; r < block; r++)
        for (std::size_t c = 0; c < block; c++)
          sub[r * block + c] = a[(b * block + r) * m + (b * block + c)];
      benchmark::DoNotOptimize(vdyn::jacobi_sym_eig(sub, block).lambda[0]);
    }
  }
}

void BM_SolveOccurrence(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const auto pool = matrix_pool(m, 32);
  vdyn::Rng rng(11);
  std::vector<double> n0(m);
  for (auto& v : n0) v = 0.1 + rng.uniform();
  std::size_t i = 0;
  for (auto _ : state) {
    const vdyn::EigenSystem eig = vdyn::decompose_sym(pool[i++ % 32], m);
    benchmark::DoNotOptimize(vdyn::solve_occurrence(eig, n0, 3.0, true)[0]);
  }
}

void BM_NextTokenLogProbs(benchmark::State& state) {
  vdyn::Vocabulary vocab = vdyn::Vocabulary::from_residues("ACDE");
  vdyn::LocationRegistry reg;
  for (int i = 0; i < 6; i++) {
    vdyn::LocationInfo info;
    info.name = "L" + std::to_string(i);
    reg.add(std::move(info));
  }
  vdyn::ModelConfig cfg;
  cfg.encoder.embed_dim = 16;
  cfg.encoder.hidden_dim = 32;
  cfg.encoder.num_layers = 2;
  cfg.encoder.window = 8;
  cfg.encoder.max_positions = 16;
  vdyn::TransmissionModel model(vocab, reg, cfg, 21);
  const std::vector<int> prefix = {2, 4, 3, 5, 2};
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.next_token_log_probs(prefix, 2, 4.0)[0]);
  }
}

}  // namespace

BENCHMARK(BM_FullEig)->Arg(4)->Arg(8)->Arg(16)->Arg(32);
BENCHMARK(BM_BlockEig)->Args({16, 4})->Args({16, 8})->Args({32, 4})->Args({32, 8});
BENCHMARK(BM_SolveOccurrence)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_NextTokenLogProbs);

BENCHMARK_MAIN();
