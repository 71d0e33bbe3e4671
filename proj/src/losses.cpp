#include "sdre/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sdre::losses {

namespace {

void check_labels(std::size_t n, std::span<const std::size_t> labels, std::size_t k,
                  const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
  if (labels.size() != n) {
    throw std::invalid_argument(std::string(what) + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " samples");
  }
  for (std::size_t y : labels) {
    if (y >= k) {
      throw std::out_of_range(std::string(what) + ": label " + std::to_string(y) +
                              " outside " + std::to_string(k) + " classes");
    }
  }
}

void check_ratio(double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw std::invalid_argument("combine: llre_ratio " + std::to_string(r) + " outside [0, 1]");
  }
}

// One-hot [B, K] mask repeated `reps` times along rows.
Array label_mask(std::span<const std::size_t> labels, std::size_t k, std::size_t reps) {
  const std::size_t b = labels.size();
  Array mask(Shape{reps * b, k});
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < b; ++i) mask[(r * b + i) * k + labels[i]] = 1.0;
  }
  return mask;
}

// mean over rows of logsumexp(z) - z[y] for z stacked as [reps * B, K].
ad::Var cross_entropy(ad::Tape& tape, const ad::Var& stacked, std::span<const std::size_t> labels,
                      std::size_t reps) {
  const std::size_t k = stacked.shape()[1];
  ad::Var mask = tape.constant(label_mask(labels, k, reps));
  ad::Var picked = ad::sum_axis(ad::multiply(stacked, mask), 1);
  return ad::mean_all(ad::sub(ad::logsumexp_last(stacked), picked));
}

}  // namespace

double lsel(std::span<const LLRMatrixTrajectory> llrs, std::span<const std::size_t> labels) {
  if (llrs.empty()) throw std::invalid_argument("lsel: empty batch");
  check_labels(llrs.size(), labels, llrs.front().num_classes(), "lsel");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    const auto& tr = llrs[i];
    const std::size_t y = labels[i];
    for (std::size_t t = tr.first_t(); t <= tr.horizon(); ++t) {
      // log(1 + sum exp(-lambda_yl)) = logsumexp over l of -lambda_yl, with lambda_yy = 0.
      double m = 0.0;
      for (std::size_t l = 0; l < tr.num_classes(); ++l) m = std::max(m, -tr.at(t, y, l));
      double s = 0.0;
      for (std::size_t l = 0; l < tr.num_classes(); ++l) s += std::exp(-tr.at(t, y, l) - m);
      total += m + std::log(s);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double mce(std::span<const tandem::PosteriorTrajectoryPair> posteriors,
           std::span<const std::size_t> labels) {
  if (posteriors.empty()) throw std::invalid_argument("mce: empty batch");
  check_labels(posteriors.size(), labels, posteriors.front().num_classes(), "mce");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const std::size_t y = labels[i];
    for (const auto* family : {&posteriors[i].prefix, &posteriors[i].full, &posteriors[i].shorts}) {
      for (const auto& p : *family) {
        total -= std::log(p.at(y));
        ++count;
      }
    }
  }
  if (count == 0) throw std::invalid_argument("mce: no windows");
  return total / static_cast<double>(count);
}

double combine(double lsel, double mce, double llre_ratio) {
  check_ratio(llre_ratio);
  if (llre_ratio == 1.0) return lsel;
  if (llre_ratio == 0.0) return mce;
  return llre_ratio * lsel + (1.0 - llre_ratio) * mce;
}

LossBreakdown breakdown(double lsel, double mce, double llre_ratio) {
  LossBreakdown b{lsel, mce, combine(lsel, mce, llre_ratio), llre_ratio};
  if (!std::isfinite(b.lsel) || !std::isfinite(b.mce) || !std::isfinite(b.total)) {
    throw std::domain_error("LossBreakdown: non-finite loss");
  }
  return b;
}

ad::Var lsel(ad::Tape& tape, const tandem::ScoreTrajectory& scores,
             std::span<const std::size_t> labels) {
  if (scores.scores.empty()) throw std::invalid_argument("lsel: empty score trajectory");
  const auto& shape = scores.scores.front().shape();
  check_labels(shape[0], labels, shape[1], "lsel");
  ad::Var stacked = ad::concat(scores.scores, 0);
  return cross_entropy(tape, stacked, labels, scores.scores.size());
}

ad::Var mce(ad::Tape& tape, const WindowLogits& logits, std::span<const std::size_t> labels) {
  std::vector<ad::Var> all;
  all.insert(all.end(), logits.prefix.begin(), logits.prefix.end());
  all.insert(all.end(), logits.full.begin(), logits.full.end());
  all.insert(all.end(), logits.shorts.begin(), logits.shorts.end());
  if (all.empty()) throw std::invalid_argument("mce: no windows");
  check_labels(logits.batch, labels, logits.num_classes, "mce");
  return cross_entropy(tape, ad::concat(all, 0), labels, all.size());
}

ad::Var combine(const ad::Var& lsel, const ad::Var& mce, double llre_ratio) {
  check_ratio(llre_ratio);
  if (llre_ratio == 1.0) return lsel;
  if (llre_ratio == 0.0) return mce;
  return ad::add(ad::scale(lsel, llre_ratio), ad::scale(mce, 1.0 - llre_ratio));
}

}  // namespace sdre::losses
