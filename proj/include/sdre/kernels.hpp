#pragma once

#include <cstddef>

// Dense compute kernels behind the autodiff layer.
//
// Every kernel exists twice: `kernels::serial` holds the straightforward
// reference loops and `kernels::` holds the OpenMP version the rest of the
// library calls. Parallel kernels split work over output rows only, so each
// output element is produced by exactly one thread in a fixed order and the
// results are reproducible run to run.
namespace sdre::kernels {

struct GemmShape {
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // inner dimension
  bool trans_a = false;  // A stored k x m
  bool trans_b = false;  // B stored n x k
};

namespace serial {

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
void gemm_batched(const GemmShape& s, std::size_t batch, const double* a, const double* b,
                  double* c, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void logsumexp_rows(const double* x, double* out, std::size_t rows, std::size_t cols);
void layernorm_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps);
void layernorm_rows_backward(const double* y, const double* inv_std, const double* dy,
                             double* dx, std::size_t rows, std::size_t cols);

}  // namespace serial

void gemm(const GemmShape& s, const double* a, const double* b, double* c, bool accumulate);
// `batch` independent products with contiguous operands of the sizes implied by s.
void gemm_batched(const GemmShape& s, std::size_t batch, const double* a, const double* b,
                  double* c, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void logsumexp_rows(const double* x, double* out, std::size_t rows, std::size_t cols);
void layernorm_rows(const double* x, double* y, double* inv_std, std::size_t rows,
                    std::size_t cols, double eps);
// Accumulates into dx.
void layernorm_rows_backward(const double* y, const double* inv_std, const double* dy,
                             double* dx, std::size_t rows, std::size_t cols);

int max_threads();

}  // namespace sdre::kernels
