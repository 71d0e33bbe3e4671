// Serial reference kernels against their OpenMP counterparts, plus one
// full training step so the kernel gains can be read in context.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sdre/harness.hpp"
#include "sdre/kernels.hpp"
#include "sdre/losses.hpp"

using namespace sdre;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{n, n, n};
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm(s, a.data(), b.data(), c.data(), false);
    } else {
      kernels::serial::gemm(s, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// Shapes met in the networks: a batch of 100 sequences against a weight matrix.
template <bool Parallel>
void BM_GemmTall(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{m, 128, 128};
  const auto a = random_values(m * 128, 3), b = random_values(128 * 128, 4);
  std::vector<double> c(m * 128);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm(s, a.data(), b.data(), c.data(), false);
    } else {
      kernels::serial::gemm(s, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
}

// Attention scores: [B, w, d] x [B, w, d]^T.
template <bool Parallel>
void BM_GemmBatched(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{20, 20, 32, false, true};
  const auto a = random_values(batch * 20 * 32, 5), b = random_values(batch * 20 * 32, 6);
  std::vector<double> c(batch * 400);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::gemm_batched(s, batch, a.data(), b.data(), c.data(), false);
    } else {
      kernels::serial::gemm_batched(s, batch, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(rows * 20, 7);
  std::vector<double> y(rows * 20);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::softmax_rows(x.data(), y.data(), rows, 20);
    } else {
      kernels::serial::softmax_rows(x.data(), y.data(), rows, 20);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto x = random_values(rows * 32, 8);
  std::vector<double> y(rows * 32), inv(rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::layernorm_rows(x.data(), y.data(), inv.data(), rows, 32, 1e-5);
    } else {
      kernels::serial::layernorm_rows(x.data(), y.data(), inv.data(), rows, 32, 1e-5);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  harness::ExperimentConfig c;
  c.model = static_cast<harness::ModelKind>(state.range(0));
  auto model = harness::make_model(c, 1);
  auto spec = harness::gaussian_spec(c, 1);
  spec.counts = {50, 50};
  const auto data = gauss::make_dataset(spec);
  std::vector<std::size_t> idx(100);
  for (std::size_t i = 0; i < 100; ++i) idx[i] = i;
  const Array frames = optim::stack_frames(data, idx);
  std::vector<std::size_t> labels;
  for (const auto& s : data.sequences) labels.push_back(s.label);
  const std::vector<double> priors{0.5, 0.5};
  for (auto _ : state) {
    ad::Tape tape;
    const auto w = nets::window_logits(tape, model, frames, c.order, c.prefix_windows);
    const auto loss = losses::lsel(tape, tandem::llr_scores(tape, w, tandem::Formula::Tandem, priors), labels);
    benchmark::DoNotOptimize(tape.backward(loss).size());
  }
  state.SetLabel(harness::to_string(c.model) + ", " + std::to_string(kernels::max_threads()) + " threads");
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_GemmTall<false>)->Name("gemm_tall/serial")->Arg(100)->Arg(2000);
BENCHMARK(BM_GemmTall<true>)->Name("gemm_tall/omp")->Arg(100)->Arg(2000);
BENCHMARK(BM_GemmBatched<false>)->Name("gemm_batched/serial")->Arg(100)->Arg(400);
BENCHMARK(BM_GemmBatched<true>)->Name("gemm_batched/omp")->Arg(100)->Arg(400);
BENCHMARK(BM_Softmax<false>)->Name("softmax_rows/serial")->Arg(2000)->Arg(40000);
BENCHMARK(BM_Softmax<true>)->Name("softmax_rows/omp")->Arg(2000)->Arg(40000);
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm_rows/serial")->Arg(2000)->Arg(40000);
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm_rows/omp")->Arg(2000)->Arg(40000);
BENCHMARK(BM_TrainStep)
    ->Name("train_step")
    ->Arg(static_cast<int>(harness::ModelKind::B2BsqrtTandem))
    ->Arg(static_cast<int>(harness::ModelKind::TandemformerNSP))
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
