#include "sdre/sprt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "sdre/stats.hpp"

namespace sdre::sprt {

ThresholdMatrix::ThresholdMatrix(std::size_t num_classes, double value)
    : k_(num_classes), values_(num_classes * num_classes, value) {
  if (num_classes < 2) throw std::invalid_argument("ThresholdMatrix: need at least 2 classes");
  if (!std::isfinite(value)) throw std::invalid_argument("ThresholdMatrix: non-finite threshold");
  for (std::size_t k = 0; k < k_; ++k) values_[k * k_ + k] = 0.0;
}

ThresholdMatrix::ThresholdMatrix(std::size_t num_classes, std::vector<double> values)
    : k_(num_classes), values_(std::move(values)) {
  if (num_classes < 2) throw std::invalid_argument("ThresholdMatrix: need at least 2 classes");
  if (values_.size() != k_ * k_) throw std::invalid_argument("ThresholdMatrix: need K*K entries");
  for (std::size_t k = 0; k < k_; ++k) {
    for (std::size_t l = 0; l < k_; ++l) {
      if (k != l && !std::isfinite(values_[k * k_ + l])) {
        throw std::invalid_argument("ThresholdMatrix: non-finite threshold");
      }
    }
    values_[k * k_ + k] = 0.0;
  }
}

ThresholdMatrix ThresholdMatrix::scaled(double c) const {
  std::vector<double> v(values_);
  for (double& x : v) x *= c;
  return ThresholdMatrix(k_, std::move(v));
}

SPRTOutcome sprt_run(const LLRMatrixTrajectory& llrs, const ThresholdMatrix& a) {
  const std::size_t k = llrs.num_classes();
  if (k == 0 || llrs.horizon() < llrs.first_t()) {
    throw std::invalid_argument("sprt_run: empty trajectory");
  }
  if (a.num_classes() != k) throw std::invalid_argument("sprt_run: threshold/class mismatch");
  for (std::size_t t = llrs.first_t(); t <= llrs.horizon(); ++t) {
    bool found = false;
    std::size_t best = 0;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      double margin = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < k; ++l) {
        if (l != c) margin = std::min(margin, llrs.at(t, c, l) - a.at(c, l));
      }
      if (margin >= 0.0 && (!found || margin > best_margin)) {
        found = true;
        best = c;
        best_margin = margin;
      }
    }
    if (found) return {best, t, false};
  }
  const std::size_t t = llrs.horizon();
  std::size_t best = 0;
  double best_min = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < k; ++l) {
      if (l != c) m = std::min(m, llrs.at(t, c, l));
    }
    if (m > best_min) {
      best = c;
      best_min = m;
    }
  }
  return {best, t, true};
}

SATPoint sat_point(const LabeledTrajectories& data, double threshold) {
  if (data.llrs.empty()) throw std::invalid_argument("sat_point: empty dataset");
  if (data.labels.size() != data.llrs.size()) {
    throw std::invalid_argument("sat_point: label count mismatch");
  }
  const std::size_t k = data.llrs.front().num_classes();
  const ThresholdMatrix a(k, threshold);
  std::vector<std::size_t> per_class(k, 0), wrong(k, 0);
  double time = 0.0;
  for (std::size_t i = 0; i < data.llrs.size(); ++i) {
    const std::size_t y = data.labels[i];
    if (y >= k) throw std::out_of_range("sat_point: label outside class range");
    const SPRTOutcome o = sprt_run(data.llrs[i], a);
    time += static_cast<double>(o.stopping_time);
    ++per_class[y];
    if (o.decided_class != y) ++wrong[y];
  }
  double err = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (per_class[c] == 0) {
      throw std::invalid_argument("sat_point: class " + std::to_string(c) + " absent from dataset");
    }
    err += static_cast<double>(wrong[c]) / static_cast<double>(per_class[c]);
  }
  SATPoint p;
  p.threshold = threshold;
  p.mean_hitting_time = time / static_cast<double>(data.llrs.size());
  p.mean_per_class_error = err / static_cast<double>(k);
  return p;
}

std::vector<SATPoint> sat_curve(std::span<const LabeledTrajectories> reps,
                                std::span<const double> thresholds) {
  if (reps.empty() || thresholds.empty()) {
    throw std::invalid_argument("sat_curve: need at least one repetition and one threshold");
  }
  std::vector<SATPoint> out;
  for (double th : thresholds) {
    std::vector<double> times, errs;
    for (const auto& r : reps) {
      const SATPoint p = sat_point(r, th);
      times.push_back(p.mean_hitting_time);
      errs.push_back(p.mean_per_class_error);
    }
    out.push_back({th, stats::mean(times), stats::mean(errs), stats::sem(times), stats::sem(errs)});
  }
  return out;
}

double wald_error_probe(double a, const LabeledTrajectories& data) {
  if (data.labels.size() != data.llrs.size()) {
    throw std::invalid_argument("wald_error_probe: label count mismatch");
  }
  std::size_t decided = 0, wrong = 0;
  for (std::size_t i = 0; i < data.llrs.size(); ++i) {
    if (data.llrs[i].num_classes() != 2) throw std::invalid_argument("wald_error_probe: binary only");
    const SPRTOutcome o = sprt_run(data.llrs[i], ThresholdMatrix(2, a));
    if (o.forced) continue;
    ++decided;
    if (o.decided_class != data.labels[i]) ++wrong;
  }
  return decided == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(decided);
}

}  // namespace sdre::sprt

namespace sdre::sprt::reference {

WaldOutcome two_boundary(std::span<const double> lambda10, std::size_t first_t, double a) {
  if (lambda10.empty()) throw std::invalid_argument("two_boundary: empty path");
  for (std::size_t i = 0; i < lambda10.size(); ++i) {
    const double v = lambda10[i];
    const bool up = v >= a;
    const bool down = -v >= a;
    if (up && down) return {v > 0.0 ? 1u : 0u, first_t + i, false};
    if (up) return {1, first_t + i, false};
    if (down) return {0, first_t + i, false};
  }
  return {lambda10.back() > 0.0 ? 1u : 0u, first_t + lambda10.size() - 1, true};
}

}  // namespace sdre::sprt::reference
