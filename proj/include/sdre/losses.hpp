#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdre/autodiff.hpp"
#include "sdre/llr.hpp"
#include "sdre/tandem.hpp"
#include "sdre/window_logits.hpp"

namespace sdre::losses {

struct LossBreakdown {
  double lsel = 0.0;
  double mce = 0.0;
  double total = 0.0;
  double llre_ratio = 1.0;
};

// Mean over samples and defined timesteps of log(1 + sum_{l != y} exp(-lambda_yl(t))).
double lsel(std::span<const LLRMatrixTrajectory> llrs, std::span<const std::size_t> labels);
// Mean over every window posterior (prefix, full and short) of -log p[y].
double mce(std::span<const tandem::PosteriorTrajectoryPair> posteriors,
           std::span<const std::size_t> labels);
double combine(double lsel, double mce, double llre_ratio);
LossBreakdown breakdown(double lsel, double mce, double llre_ratio);

// Graph versions used for training.
ad::Var lsel(ad::Tape& tape, const tandem::ScoreTrajectory& scores,
             std::span<const std::size_t> labels);
ad::Var mce(ad::Tape& tape, const WindowLogits& logits, std::span<const std::size_t> labels);
ad::Var combine(const ad::Var& lsel, const ad::Var& mce, double llre_ratio);

}  // namespace sdre::losses
