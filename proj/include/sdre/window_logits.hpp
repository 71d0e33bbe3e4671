#pragma once

#include <cstddef>
#include <vector>

#include "sdre/autodiff.hpp"

namespace sdre {

// Posterior logits of every sliding window of a batch of sequences, one
// [batch, K] variable per window end. Full windows end at s = N+1..T, short
// windows at s = N+2..T, and (when enabled) prefix windows x^(1..t) cover the
// warm-up t = 1..N before the first full window exists.
struct WindowLogits {
  std::size_t batch = 0;
  std::size_t num_classes = 0;
  std::size_t order = 0;
  std::size_t horizon = 0;
  std::vector<ad::Var> prefix;
  std::vector<ad::Var> full;
  std::vector<ad::Var> shorts;
};

}  // namespace sdre
