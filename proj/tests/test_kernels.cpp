#include <omp.h>

#include <array>
#include <random>
#include <vector>

#include "doctest.h"
#include "sdre/kernels.hpp"
#include "testing.hpp"

using namespace sdre;

TEST_SUITE("kernels") {
  TEST_CASE("parallel gemm matches the serial reference for every transpose mode") {
    std::mt19937_64 rng(7);
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{{1, 1, 1}, {3, 5, 7}, {64, 33, 40}, {200, 17, 90}}) {
          kernels::GemmShape s{m, n, k, ta, tb};
          Array a = testing::random_array({s.m * s.k}, rng);
          Array b = testing::random_array({s.k * s.n}, rng);
          Array c0 = testing::random_array({s.m * s.n}, rng);
          Array c1 = c0;
          for (bool acc : {false, true}) {
            kernels::serial::gemm(s, a.data(), b.data(), c0.data(), acc);
            kernels::gemm(s, a.data(), b.data(), c1.data(), acc);
            for (std::size_t i = 0; i < c0.size(); ++i) {
              CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-12));
            }
          }
        }
      }
    }
  }

  TEST_CASE("batched gemm matches the serial reference") {
    std::mt19937_64 rng(8);
    for (bool tb : {false, true}) {
      kernels::GemmShape s{20, 20, 8, false, tb};
      const std::size_t batch = 37;
      Array a = testing::random_array({batch * s.m * s.k}, rng);
      Array b = testing::random_array({batch * s.k * s.n}, rng);
      Array c0 = testing::random_array({batch * s.m * s.n}, rng);
      Array c1 = c0;
      for (bool acc : {false, true}) {
        kernels::serial::gemm_batched(s, batch, a.data(), b.data(), c0.data(), acc);
        kernels::gemm_batched(s, batch, a.data(), b.data(), c1.data(), acc);
        for (std::size_t i = 0; i < c0.size(); ++i) {
          CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("parallel kernels give bit-identical results for any thread count") {
    std::mt19937_64 rng(9);
    kernels::GemmShape s{300, 64, 128};
    Array a = testing::random_array({s.m * s.k}, rng);
    Array b = testing::random_array({s.k * s.n}, rng);
    Array x = testing::random_array({4000 * 20}, rng);
    auto run = [&](int threads) {
      omp_set_num_threads(threads);
      std::vector<double> c(s.m * s.n), y(x.size()), lse(4000);
      kernels::gemm(s, a.data(), b.data(), c.data(), false);
      kernels::softmax_rows(x.data(), y.data(), 4000, 20);
      kernels::logsumexp_rows(x.data(), lse.data(), 4000, 20);
      c.insert(c.end(), y.begin(), y.end());
      c.insert(c.end(), lse.begin(), lse.end());
      return c;
    };
    const int before = omp_get_max_threads();
    const auto one = run(1);
    CHECK(run(4) == one);
    CHECK(run(3) == one);
    omp_set_num_threads(before);
  }

  TEST_CASE("row kernels agree with the serial reference") {
    std::mt19937_64 rng(11);
    const std::size_t rows = 300, cols = 130;
    Array x = testing::random_array({rows, cols}, rng, -30, 30);
    Array y0(x.shape()), y1(x.shape());
    kernels::serial::softmax_rows(x.data(), y0.data(), rows, cols);
    kernels::softmax_rows(x.data(), y1.data(), rows, cols);
    CHECK(y0 == y1);

    std::vector<double> l0(rows), l1(rows);
    kernels::serial::logsumexp_rows(x.data(), l0.data(), rows, cols);
    kernels::logsumexp_rows(x.data(), l1.data(), rows, cols);
    CHECK(l0 == l1);

    std::vector<double> s0(rows), s1(rows);
    kernels::serial::layernorm_rows(x.data(), y0.data(), s0.data(), rows, cols, 1e-5);
    kernels::layernorm_rows(x.data(), y1.data(), s1.data(), rows, cols, 1e-5);
    CHECK(y0 == y1);
    Array d0(x.shape(), 0.0), d1(x.shape(), 0.0);
    kernels::serial::layernorm_rows_backward(y0.data(), s0.data(), x.data(), d0.data(), rows, cols);
    kernels::layernorm_rows_backward(y1.data(), s1.data(), x.data(), d1.data(), rows, cols);
    CHECK(d0 == d1);
  }

  TEST_CASE("softmax rows sum to one even for wide logits") {
    std::mt19937_64 rng(3);
    const std::size_t rows = 50, cols = 9;
    Array x = testing::random_array({rows, cols}, rng, -200, 200);
    Array y(x.shape());
    kernels::softmax_rows(x.data(), y.data(), rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < cols; ++j) s += y[r * cols + j];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  TEST_CASE("logsumexp survives large magnitudes") {
    const double x[2] = {1000.0, 1000.0};
    double out = 0;
    kernels::logsumexp_rows(x, &out, 1, 2);
    CHECK(out == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  }
}
