#include "sdre/llr.hpp"

#include <stdexcept>
#include <string>

namespace sdre {

LLRMatrixTrajectory::LLRMatrixTrajectory(std::size_t num_classes, std::size_t first_t,
                                         std::size_t horizon, std::size_t order)
    : k_(num_classes), first_t_(first_t), horizon_(horizon), order_(order) {
  if (num_classes < 2) throw std::invalid_argument("LLRMatrixTrajectory: need at least 2 classes");
  if (first_t < 1 || first_t > horizon) {
    throw std::invalid_argument("LLRMatrixTrajectory: empty timestep range [" +
                                std::to_string(first_t) + ", " + std::to_string(horizon) + "]");
  }
  values_.assign(length() * k_ * k_, 0.0);
}

std::size_t LLRMatrixTrajectory::index(std::size_t t, std::size_t k, std::size_t l) const {
  if (!defined_at(t) || k >= k_ || l >= k_) {
    throw std::out_of_range("LLRMatrixTrajectory: (t=" + std::to_string(t) + ", k=" +
                            std::to_string(k) + ", l=" + std::to_string(l) + ") out of range");
  }
  return ((t - first_t_) * k_ + k) * k_ + l;
}

double LLRMatrixTrajectory::at(std::size_t t, std::size_t k, std::size_t l) const {
  return values_[index(t, k, l)];
}

void LLRMatrixTrajectory::set(std::size_t t, std::size_t k, std::size_t l, double value) {
  if (k == l) return;
  values_[index(t, k, l)] = value;
  values_[index(t, l, k)] = -value;
}

void LLRMatrixTrajectory::set_from_scores(std::size_t t, const double* scores) {
  for (std::size_t k = 0; k < k_; ++k) {
    for (std::size_t l = k + 1; l < k_; ++l) set(t, k, l, scores[k] - scores[l]);
  }
}

LLRMatrixTrajectory LLRMatrixTrajectory::restricted(std::size_t first_t) const {
  if (first_t < first_t_) {
    throw std::out_of_range("LLRMatrixTrajectory::restricted: t=" + std::to_string(first_t) +
                            " precedes the first defined timestep");
  }
  LLRMatrixTrajectory out(k_, first_t, horizon_, order_);
  for (std::size_t t = first_t; t <= horizon_; ++t) {
    for (std::size_t k = 0; k < k_; ++k) {
      for (std::size_t l = 0; l < k_; ++l) out.values_[out.index(t, k, l)] = at(t, k, l);
    }
  }
  return out;
}

}  // namespace sdre
