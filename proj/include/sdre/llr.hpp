#pragma once

#include <cstddef>
#include <vector>

namespace sdre {

// K x K log-likelihood-ratio matrices for every timestep t in [first_t, horizon]
// (timesteps are 1-based). Antisymmetric with a zero diagonal by construction:
// writes go through set(), which fills (k, l) and (l, k) together.
class LLRMatrixTrajectory {
 public:
  LLRMatrixTrajectory() = default;
  LLRMatrixTrajectory(std::size_t num_classes, std::size_t first_t, std::size_t horizon,
                      std::size_t order);

  std::size_t num_classes() const noexcept { return k_; }
  std::size_t first_t() const noexcept { return first_t_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t length() const noexcept { return horizon_ + 1 - first_t_; }
  bool defined_at(std::size_t t) const noexcept { return t >= first_t_ && t <= horizon_; }

  double at(std::size_t t, std::size_t k, std::size_t l) const;
  void set(std::size_t t, std::size_t k, std::size_t l, double value);

  // From a per-class score vector s with lambda_kl = s_k - s_l.
  void set_from_scores(std::size_t t, const double* scores);

  // Copy restricted to [first_t, horizon].
  LLRMatrixTrajectory restricted(std::size_t first_t) const;

 private:
  std::size_t index(std::size_t t, std::size_t k, std::size_t l) const;

  std::size_t k_ = 0;
  std::size_t first_t_ = 1;
  std::size_t horizon_ = 0;
  std::size_t order_ = 0;
  std::vector<double> values_;
};

}  // namespace sdre
