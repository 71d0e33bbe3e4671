#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdre/autodiff.hpp"
#include "sdre/llr.hpp"
#include "sdre/window_logits.hpp"

// Window posteriors -> LLR trajectories.
//
// TANDEM: lambda_kl(t) = sum_{s=N+1..t} log(p_s[k] / p_s[l])
//                      - sum_{s=N+2..t} log(q_s[k] / q_s[l])
// where p_s is the posterior of the full window x^(s-N..s) and q_s that of the
// short window x^(s-N..s-1). With N = 0 the short window is empty and the
// class prior stands in for q_s. Before the first full window (t <= N) the
// optional prefix posteriors of x^(1..t) give lambda_kl(t) = log(r_t[k] / r_t[l]).
namespace sdre::tandem {

struct WindowRange {
  std::size_t first = 0;  // 1-based, inclusive
  std::size_t last = 0;
  std::size_t length() const { return last + 1 - first; }
};

struct SlidingWindows {
  std::vector<WindowRange> prefix;  // ends t = 1..N
  std::vector<WindowRange> full;    // ends s = N+1..T
  std::vector<WindowRange> shorts;  // ends s = N+2..T (empty when N = 0)
};

SlidingWindows sliding_windows(std::size_t horizon, std::size_t order, bool prefix = false);

struct PosteriorTrajectoryPair {
  std::size_t order = 0;
  std::size_t horizon = 0;
  std::vector<std::vector<double>> prefix;  // empty, or one per t = 1..N
  std::vector<std::vector<double>> full;    // one per s = N+1..T
  std::vector<std::vector<double>> shorts;  // one per s = N+2..T
  std::vector<double> priors;               // used when N = 0

  std::size_t num_classes() const { return priors.size(); }
  std::size_t first_t() const { return prefix.empty() ? order + 1 : 1; }
};

void validate(const PosteriorTrajectoryPair& p);

LLRMatrixTrajectory tandem_llr(const PosteriorTrajectoryPair& p);
// Recomputes the trajectory value at one timestep from scratch.
std::vector<double> tandem_llr_at(const PosteriorTrajectoryPair& p, std::size_t t);
// Instantaneous log posterior ratio of the newest window only.
LLRMatrixTrajectory oblivion_llr(const PosteriorTrajectoryPair& p);

enum class Formula { Tandem, Oblivion };

// Differentiable counterpart: per-timestep class scores with
// lambda_kl(t) = score_t[k] - score_t[l]. Log-posterior ratios equal logit
// differences, so the scores are built from logits directly.
struct ScoreTrajectory {
  std::size_t first_t = 1;
  std::size_t horizon = 0;
  std::size_t order = 0;
  std::vector<ad::Var> scores;  // one [B, K] per t in [first_t, horizon]
};

ScoreTrajectory llr_scores(ad::Tape& tape, const WindowLogits& logits, Formula formula,
                           std::span<const double> priors);

// Per-sample trajectories read off the score values.
std::vector<LLRMatrixTrajectory> to_trajectories(const ScoreTrajectory& scores);

// Softmax of each window's logits for sample b.
PosteriorTrajectoryPair posteriors_of(const WindowLogits& logits, std::size_t b,
                                      std::span<const double> priors);

}  // namespace sdre::tandem
