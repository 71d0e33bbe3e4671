#include "sdre/tandem.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sdre/kernels.hpp"

namespace sdre::tandem {

SlidingWindows sliding_windows(std::size_t horizon, std::size_t order, bool prefix) {
  if (order >= horizon) {
    throw std::invalid_argument("sliding_windows: Markov order " + std::to_string(order) +
                                " must be below the horizon " + std::to_string(horizon));
  }
  SlidingWindows w;
  if (prefix) {
    for (std::size_t t = 1; t <= order; ++t) w.prefix.push_back({1, t});
  }
  for (std::size_t s = order + 1; s <= horizon; ++s) w.full.push_back({s - order, s});
  if (order > 0) {
    for (std::size_t s = order + 2; s <= horizon; ++s) w.shorts.push_back({s - order, s - 1});
  }
  return w;
}

namespace {

void check_simplex(const std::vector<double>& p, std::size_t k, const char* what) {
  if (p.size() != k) throw std::invalid_argument(std::string(what) + ": posterior of wrong size");
  double sum = 0.0;
  for (double v : p) {
    if (!(v > 0.0)) {
      throw std::domain_error(std::string(what) + ": posterior entry " + std::to_string(v) +
                              " is not positive");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": posterior sums to " + std::to_string(sum));
  }
}

// Running per-class evidence: log full posteriors in, log short posteriors out.
void add_log(std::vector<double>& score, const std::vector<double>& p, double sign) {
  for (std::size_t k = 0; k < score.size(); ++k) score[k] += sign * std::log(p[k]);
}

}  // namespace

void validate(const PosteriorTrajectoryPair& p) {
  const std::size_t k = p.priors.size();
  if (k < 2) throw std::invalid_argument("PosteriorTrajectoryPair: need at least 2 classes");
  if (p.order >= p.horizon) throw std::invalid_argument("PosteriorTrajectoryPair: N >= T");
  check_simplex(p.priors, k, "priors");
  if (p.full.size() != p.horizon - p.order) {
    throw std::invalid_argument("PosteriorTrajectoryPair: expected " +
                                std::to_string(p.horizon - p.order) + " full windows, got " +
                                std::to_string(p.full.size()));
  }
  const std::size_t n_short = p.order == 0 ? 0 : p.horizon - p.order - 1;
  if (p.shorts.size() != n_short) {
    throw std::invalid_argument("PosteriorTrajectoryPair: expected " + std::to_string(n_short) +
                                " short windows, got " + std::to_string(p.shorts.size()));
  }
  if (!p.prefix.empty() && p.prefix.size() != p.order) {
    throw std::invalid_argument("PosteriorTrajectoryPair: prefix must cover t = 1..N");
  }
  for (const auto& v : p.prefix) check_simplex(v, k, "prefix");
  for (const auto& v : p.full) check_simplex(v, k, "full");
  for (const auto& v : p.shorts) check_simplex(v, k, "short");
}

LLRMatrixTrajectory tandem_llr(const PosteriorTrajectoryPair& p) {
  validate(p);
  const std::size_t k = p.num_classes();
  LLRMatrixTrajectory out(k, p.first_t(), p.horizon, p.order);
  for (std::size_t t = 1; t <= p.prefix.size(); ++t) {
    std::vector<double> score(k, 0.0);
    add_log(score, p.prefix[t - 1], 1.0);
    out.set_from_scores(t, score.data());
  }
  std::vector<double> score(k, 0.0);
  for (std::size_t s = p.order + 1; s <= p.horizon; ++s) {
    add_log(score, p.full[s - p.order - 1], 1.0);
    if (s >= p.order + 2) add_log(score, p.order == 0 ? p.priors : p.shorts[s - p.order - 2], -1.0);
    out.set_from_scores(s, score.data());
  }
  return out;
}

std::vector<double> tandem_llr_at(const PosteriorTrajectoryPair& p, std::size_t t) {
  validate(p);
  const std::size_t k = p.num_classes();
  if (t < p.first_t() || t > p.horizon) throw std::out_of_range("tandem_llr_at: t out of range");
  std::vector<double> score(k, 0.0);
  if (t <= p.order) {
    add_log(score, p.prefix[t - 1], 1.0);
  } else {
    for (std::size_t s = p.order + 1; s <= t; ++s) {
      add_log(score, p.full[s - p.order - 1], 1.0);
      if (s >= p.order + 2) add_log(score, p.order == 0 ? p.priors : p.shorts[s - p.order - 2], -1.0);
    }
  }
  std::vector<double> m(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      m[a * k + b] = score[a] - score[b];
      m[b * k + a] = -(score[a] - score[b]);
    }
  }
  return m;
}

LLRMatrixTrajectory oblivion_llr(const PosteriorTrajectoryPair& p) {
  validate(p);
  const std::size_t k = p.num_classes();
  LLRMatrixTrajectory out(k, p.first_t(), p.horizon, p.order);
  std::vector<double> score(k);
  for (std::size_t t = p.first_t(); t <= p.horizon; ++t) {
    const auto& post = t <= p.order ? p.prefix[t - 1] : p.full[t - p.order - 1];
    for (std::size_t c = 0; c < k; ++c) score[c] = std::log(post[c]);
    out.set_from_scores(t, score.data());
  }
  return out;
}

ScoreTrajectory llr_scores(ad::Tape& tape, const WindowLogits& w, Formula formula,
                           std::span<const double> priors) {
  if (w.full.size() != w.horizon - w.order) {
    throw std::invalid_argument("llr_scores: window logits do not cover s = N+1..T");
  }
  if (priors.size() != w.num_classes) throw std::invalid_argument("llr_scores: one prior per class");
  ScoreTrajectory out;
  out.order = w.order;
  out.horizon = w.horizon;
  out.first_t = w.prefix.empty() ? w.order + 1 : 1;
  for (const ad::Var& v : w.prefix) out.scores.push_back(v);
  if (formula == Formula::Oblivion) {
    for (const ad::Var& v : w.full) out.scores.push_back(v);
    return out;
  }
  std::vector<double> log_prior(priors.size());
  for (std::size_t c = 0; c < priors.size(); ++c) log_prior[c] = std::log(priors[c]);
  ad::Var prior_term = tape.constant(Array(Shape{w.num_classes}, log_prior));
  ad::Var acc = w.full.front();
  out.scores.push_back(acc);
  for (std::size_t j = 1; j < w.full.size(); ++j) {
    ad::Var out_term = w.order == 0 ? prior_term : w.shorts.at(j - 1);
    acc = ad::sub(ad::add(acc, w.full[j]), out_term);
    out.scores.push_back(acc);
  }
  return out;
}

std::vector<LLRMatrixTrajectory> to_trajectories(const ScoreTrajectory& s) {
  if (s.scores.empty()) throw std::invalid_argument("to_trajectories: empty score trajectory");
  const std::size_t batch = s.scores.front().shape()[0];
  const std::size_t k = s.scores.front().shape()[1];
  std::vector<LLRMatrixTrajectory> out(batch, LLRMatrixTrajectory(k, s.first_t, s.horizon, s.order));
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const Array& v = s.scores[i].value();
    for (std::size_t b = 0; b < batch; ++b) out[b].set_from_scores(s.first_t + i, v.data() + b * k);
  }
  return out;
}

PosteriorTrajectoryPair posteriors_of(const WindowLogits& w, std::size_t b,
                                      std::span<const double> priors) {
  PosteriorTrajectoryPair p;
  p.order = w.order;
  p.horizon = w.horizon;
  p.priors.assign(priors.begin(), priors.end());
  const std::size_t k = w.num_classes;
  auto soft = [&](const ad::Var& v) {
    std::vector<double> out(k);
    kernels::softmax_rows(v.value().data() + b * k, out.data(), 1, k);
    return out;
  };
  for (const auto& v : w.prefix) p.prefix.push_back(soft(v));
  for (const auto& v : w.full) p.full.push_back(soft(v));
  for (const auto& v : w.shorts) p.shorts.push_back(soft(v));
  return p;
}

}  // namespace sdre::tandem
