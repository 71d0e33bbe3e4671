#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdre/llr.hpp"

namespace sdre::sprt {

class ThresholdMatrix {
 public:
  explicit ThresholdMatrix(std::size_t num_classes, double value = 0.0);
  // Row-major K x K; the diagonal is ignored.
  ThresholdMatrix(std::size_t num_classes, std::vector<double> values);

  std::size_t num_classes() const noexcept { return k_; }
  double at(std::size_t k, std::size_t l) const { return values_.at(k * k_ + l); }
  ThresholdMatrix scaled(double c) const;

 private:
  std::size_t k_;
  std::vector<double> values_;
};

struct SPRTOutcome {
  std::size_t decided_class = 0;
  std::size_t stopping_time = 0;
  bool forced = false;
};

// Stops at the first t where some class k has min_{l != k} (lambda_kl(t) - a_kl) >= 0.
// Simultaneous crossings go to the larger min-margin, then the lower index. With no
// crossing by the horizon the decision is argmax_k min_l lambda_kl(T), flagged forced.
SPRTOutcome sprt_run(const LLRMatrixTrajectory& llrs, const ThresholdMatrix& thresholds);

struct SATPoint {
  double threshold = 0.0;
  double mean_hitting_time = 0.0;
  double mean_per_class_error = 0.0;
  double sem_hitting_time = 0.0;
  double sem_per_class_error = 0.0;
};

// One repetition of a dataset: trajectories and their labels.
struct LabeledTrajectories {
  std::span<const LLRMatrixTrajectory> llrs;
  std::span<const std::size_t> labels;
};

// Single-repetition point; the SEM fields are zero.
SATPoint sat_point(const LabeledTrajectories& data, double threshold);
// Mean over repetitions with SEM across them, one point per threshold.
std::vector<SATPoint> sat_curve(std::span<const LabeledTrajectories> repetitions,
                                std::span<const double> thresholds);

// Misclassification rate among non-forced decisions of a binary test with
// symmetric scalar threshold a.
double wald_error_probe(double a, const LabeledTrajectories& data);

}  // namespace sdre::sprt

namespace sdre::sprt::reference {

struct WaldOutcome {
  std::size_t decided_class = 0;
  std::size_t stopping_time = 0;
  bool forced = false;
};

// Classical two-boundary test on a scalar LLR path lambda_10(t), t = first_t..:
// stop at the first t with lambda >= a (class 1) or lambda <= -a (class 0); at
// the end of the path decide by the sign (ties to class 0).
WaldOutcome two_boundary(std::span<const double> lambda10, std::size_t first_t, double a);

}  // namespace sdre::sprt::reference
