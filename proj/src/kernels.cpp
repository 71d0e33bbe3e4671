#include "sdre/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdre::kernels {

namespace {

// Row kernels shared by both variants; only the loop over rows differs.
inline void softmax_row(const double* x, double* y, std::size_t cols) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    z += y[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline double logsumexp_row(const double* x, std::size_t cols) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
  return mx + std::log(z);
}

inline void layernorm_row(const double* x, double* y, double* inv_std, std::size_t cols,
                          double eps) {
  double mean = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(cols);
  const double is = 1.0 / std::sqrt(var + eps);
  *inv_std = is;
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * is;
}

// dx = inv_std * (dy - mean(dy) - y * mean(dy * y))
inline void layernorm_row_backward(const double* y, double inv_std, const double* dy,
                                   double* dx, std::size_t cols) {
  double mdy = 0.0;
  double mdyy = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    mdy += dy[j];
    mdyy += dy[j] * y[j];
  }
  mdy /= static_cast<double>(cols);
  mdyy /= static_cast<double>(cols);
  for (std::size_t j = 0; j < cols; ++j) dx[j] += inv_std * (dy[j] - mdy - y[j] * mdyy);
}

inline double load_a(const GemmShape& s, const double* a, std::size_t i, std::size_t p) {
  return s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
}

inline double load_b(const GemmShape& s, const double* b, std::size_t p, std::size_t j) {
  return s.trans_b ? b[j * s.k + p] : b[p * s.n + j];
}

// One output row of C with B in row-major k x n layout, so the inner loop is
// unit stride and vectorizes.
inline void gemm_row_nn(const GemmShape& s, const double* a, const double* b, double* c,
                        std::size_t i, bool accumulate) {
  double* crow = c + i * s.n;
  if (!accumulate) std::fill(crow, crow + s.n, 0.0);
  for (std::size_t p = 0; p < s.k; ++p) {
    const double av = load_a(s, a, i, p);
    if (av == 0.0) continue;
    const double* brow = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
  }
}

// Transposed B is copied to k x n first; the copy is O(nk) against O(mnk) work.
inline const double* untranspose_b(const GemmShape& s, const double* b, std::vector<double>& buf) {
  if (!s.trans_b) return b;
  buf.resize(s.k * s.n);
  for (std::size_t j = 0; j < s.n; ++j) {
    for (std::size_t p = 0; p < s.k; ++p) buf[p * s.n + j] = b[j * s.k + p];
  }
  return buf.data();
}

inline void gemm_serial_fast(const GemmShape& s, const double* a, const double* b, double* c,
                             bool accumulate, std::vector<double>& buf) {
  const double* bn = untranspose_b(s, b, buf);
  for (std::size_t i = 0; i < s.m; ++i) gemm_row_nn(s, a, bn, c, i, accumulate);
}

}  // namespace

namespace serial {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < s.m; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < s.k; ++p) acc += load_a(s, a, i, p) * load_b(s, b, p, j);
      c[i * s.n + j] = accumulate ? c[i * s.n + j] + acc : acc;
    }
  }
}

void gemm_batched(const GemmShape& s, std::size_t batch, const double* a, const double* b,
                  double* c, bool accumulate) {
  for (std::size_t q = 0; q < batch; ++q) {
    serial::gemm(s, a + q * s.m * s.k, b + q * s.k * s.n, c + q * s.m * s.n, accumulate);
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void logsumexp_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = logsumexp_row(x + r * cols, cols);
}

void layernorm_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    layernorm_row(x + r * cols, y + r * cols, inv_std + r, cols, eps);
  }
}

void layernorm_rows_backward(const double* y, const double* inv_std, const double* dy,
                             double* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    layernorm_row_backward(y + r * cols, inv_std[r], dy + r * cols, dx + r * cols, cols);
  }
}

}  // namespace serial

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelGrain = 1 << 15;

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate) {
  std::vector<double> buf;
  if (s.m * s.n * s.k < kParallelGrain || max_threads() == 1) {
    gemm_serial_fast(s, a, b, c, accumulate, buf);
    return;
  }
  const double* bn = untranspose_b(s, b, buf);
  const auto rows = static_cast<std::int64_t>(s.m);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_row_nn(s, a, bn, c, static_cast<std::size_t>(i), accumulate);
  }
}

void gemm_batched(const GemmShape& s, std::size_t batch, const double* a, const double* b,
                  double* c, bool accumulate) {
  const auto n = static_cast<std::int64_t>(batch);
  const bool big = batch * s.m * s.n * s.k >= kParallelGrain && max_threads() > 1;
#pragma omp parallel if (big)
  {
    std::vector<double> buf;
#pragma omp for schedule(static)
    for (std::int64_t q = 0; q < n; ++q) {
      gemm_serial_fast(s, a + q * s.m * s.k, b + q * s.k * s.n, c + q * s.m * s.n, accumulate,
                       buf);
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain && max_threads() > 1)
  for (std::int64_t r = 0; r < n; ++r) softmax_row(x + r * cols, y + r * cols, cols);
}

void logsumexp_rows(const double* x, double* out, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain && max_threads() > 1)
  for (std::int64_t r = 0; r < n; ++r) out[r] = logsumexp_row(x + r * cols, cols);
}

void layernorm_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain && max_threads() > 1)
  for (std::int64_t r = 0; r < n; ++r) {
    layernorm_row(x + r * cols, y + r * cols, inv_std + r, cols, eps);
  }
}

void layernorm_rows_backward(const double* y, const double* inv_std, const double* dy,
                             double* dx, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain && max_threads() > 1)
  for (std::int64_t r = 0; r < n; ++r) {
    layernorm_row_backward(y + r * cols, inv_std[r], dy + r * cols, dx + r * cols, cols);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sdre::kernels
