#include "sdre/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "sdre/kernels.hpp"
#include "sdre/losses.hpp"

namespace sdre::optim {

AdamW::AdamW(std::vector<ad::Parameter*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw std::invalid_argument("AdamW: lr must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
  }
  if (!(config_.eps > 0.0)) throw std::invalid_argument("AdamW: eps must be positive");
  if (!(config_.weight_decay >= 0.0)) throw std::invalid_argument("AdamW: negative weight decay");
  for (auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(const ad::GradientMap& grads) {
  for (auto* p : params_) {
    if (grads.contains(*p) && !grads.at(*p).all_finite()) {
      throw std::domain_error("AdamW: non-finite gradient for parameter '" + p->name + "'");
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const double decay = config_.lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    // Parameters the graph never touched (e.g. layernorm gains with layernorm off) stay put.
    if (!grads.contains(*params_[i])) continue;
    Array& w = params_[i]->value;
    const Array& g = grads.at(*params_[i]);
    Array& m = m_[i];
    Array& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      w[j] -= decay * w[j];
      w[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
    }
  }
}

BalancedSampler::BalancedSampler(const std::vector<std::size_t>& labels, std::size_t num_classes,
                                 std::uint64_t seed)
    : by_class_(num_classes), rng_(seed) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw std::out_of_range("BalancedSampler: label out of range");
    by_class_[labels[i]].push_back(i);
  }
}

std::vector<std::vector<std::size_t>> BalancedSampler::epoch(std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("BalancedSampler: zero batch size");
  for (auto& c : by_class_) std::shuffle(c.begin(), c.end(), rng_);
  std::vector<std::size_t> order;
  std::size_t longest = 0;
  for (const auto& c : by_class_) longest = std::max(longest, c.size());
  for (std::size_t j = 0; j < longest; ++j) {
    for (const auto& c : by_class_) {
      if (j < c.size()) order.push_back(c[j]);
    }
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TrainingDiverged::TrainingDiverged(std::uint64_t seed_, std::uint64_t step_, const std::string& what)
    : std::runtime_error("training diverged (seed " + std::to_string(seed_) + ", step " +
                         std::to_string(step_) + "): " + what),
      seed(seed_),
      step(step_) {}

std::vector<double> resolved_priors(const TrainConfig& config, std::size_t k) {
  if (config.priors.empty()) return std::vector<double>(k, 1.0 / static_cast<double>(k));
  if (config.priors.size() != k) throw std::invalid_argument("TrainConfig: one prior per class");
  return config.priors;
}

Array stack_frames(const gauss::Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("stack_frames: empty batch");
  const std::size_t t = data.spec.horizon;
  const std::size_t d = data.spec.dim;
  Array out(Shape{indices.size(), t, d});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Array& f = data.sequences.at(indices[b]).frames;
    std::memcpy(out.data() + b * t * d, f.data(), t * d * sizeof(double));
  }
  return out;
}

double mae_final(const std::vector<LLRMatrixTrajectory>& est,
                 const std::vector<LLRMatrixTrajectory>& truth) {
  if (est.size() != truth.size() || est.empty()) {
    throw std::invalid_argument("mae_final: mismatched or empty trajectory sets");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const std::size_t t = est[i].horizon();
    if (truth[i].horizon() != t || truth[i].num_classes() != est[i].num_classes()) {
      throw std::invalid_argument("mae_final: trajectory shape mismatch");
    }
    for (std::size_t k = 0; k < est[i].num_classes(); ++k) {
      for (std::size_t l = k + 1; l < est[i].num_classes(); ++l) {
        total += std::abs(est[i].at(t, k, l) - truth[i].at(t, k, l));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

namespace {

std::vector<std::size_t> labels_of(const gauss::Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(data.sequences[i].label);
  return y;
}

// mCE over window logits computed from values alone.
double mce_value(const WindowLogits& w, const std::vector<std::size_t>& labels) {
  const std::size_t k = w.num_classes;
  std::vector<double> lse(w.batch);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto* family : {&w.prefix, &w.full, &w.shorts}) {
    for (const auto& v : *family) {
      const double* z = v.value().data();
      kernels::logsumexp_rows(z, lse.data(), w.batch, k);
      for (std::size_t b = 0; b < w.batch; ++b) total += lse[b] - z[b * k + labels[b]];
      count += w.batch;
    }
  }
  return total / static_cast<double>(count);
}

double lsel_value(const tandem::ScoreTrajectory& s, const std::vector<std::size_t>& labels) {
  const std::size_t b = labels.size();
  const std::size_t k = s.scores.front().shape()[1];
  std::vector<double> lse(b);
  double total = 0.0;
  for (const auto& v : s.scores) {
    const double* z = v.value().data();
    kernels::logsumexp_rows(z, lse.data(), b, k);
    for (std::size_t i = 0; i < b; ++i) total += lse[i] - z[i * k + labels[i]];
  }
  return total / static_cast<double>(b * s.scores.size());
}

}  // namespace

EvalResult evaluate(nets::Integrator& model, const gauss::Dataset& data, const TrainConfig& config,
                    bool keep) {
  const std::size_t k = nets::num_classes(model);
  const auto priors = resolved_priors(config, k);
  const std::size_t n = data.sequences.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty dataset");
  EvalResult r;
  double lsel_sum = 0.0, mce_sum = 0.0;
  std::vector<LLRMatrixTrajectory> est_all, truth_all;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) idx.push_back(i);
    const auto y = labels_of(data, idx);
    ad::Tape tape;
    const WindowLogits w =
        nets::window_logits(tape, model, stack_frames(data, idx), config.order, config.prefix_windows);
    const auto scores = tandem::llr_scores(tape, w, config.formula, priors);
    lsel_sum += lsel_value(scores, y) * static_cast<double>(idx.size());
    mce_sum += mce_value(w, y) * static_cast<double>(idx.size());
    auto est = tandem::to_trajectories(scores);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      est_all.push_back(std::move(est[b]));
      truth_all.push_back(gauss::true_llr(data.sequences[idx[b]], data.spec)
                              .restricted(est_all.back().first_t()));
    }
  }
  r.lsel = lsel_sum / static_cast<double>(n);
  r.mce = mce_sum / static_cast<double>(n);
  r.total_loss = losses::combine(r.lsel, r.mce, config.llre_ratio);
  r.mae_final_t = mae_final(est_all, truth_all);
  if (keep) {
    r.estimated = std::move(est_all);
    r.truth = std::move(truth_all);
  }
  return r;
}

TrainResult train(nets::Integrator model, const gauss::Dataset& train_set,
                  const gauss::Dataset& val_set, const TrainConfig& config) {
  if (train_set.sequences.empty()) throw std::invalid_argument("train: empty training set");
  if (config.batch_size == 0) throw std::invalid_argument("train: zero batch size");
  if (config.order >= train_set.spec.horizon) throw std::invalid_argument("train: N must be below T");
  const std::size_t k = nets::num_classes(model);
  const auto priors = resolved_priors(config, k);

  std::vector<std::size_t> labels;
  for (const auto& s : train_set.sequences) labels.push_back(s.label);
  BalancedSampler sampler(labels, k, config.seed ^ 0x5eedULL);

  const std::size_t per_epoch = (train_set.sequences.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t epochs =
      config.total_steps > 0 ? (config.total_steps + per_epoch - 1) / per_epoch : config.epochs;

  TrainResult result{model, {}, 0, 0.0, 0, 0};
  AdamW opt(nets::parameters(model), config.adam);
  double best = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    double lsel_sum = 0.0, mce_sum = 0.0, total_sum = 0.0, mae_sum = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : sampler.epoch(config.batch_size)) {
      if (config.total_steps > 0 && opt.steps() >= config.total_steps) break;
      const auto y = labels_of(train_set, batch);
      ad::Tape tape;
      const WindowLogits w = nets::window_logits(tape, model, stack_frames(train_set, batch),
                                                 config.order, config.prefix_windows);
      const auto scores = tandem::llr_scores(tape, w, config.formula, priors);
      ad::Var lsel = losses::lsel(tape, scores, y);
      ad::Var loss = lsel;
      double mce = 0.0;
      if (config.llre_ratio < 1.0) {
        ad::Var mce_var = losses::mce(tape, w, y);
        ++result.mce_in_update_path;
        mce = mce_var.value().item();
        loss = losses::combine(lsel, mce_var, config.llre_ratio);
      } else {
        mce = mce_value(w, y);
      }
      if (!std::isfinite(loss.value().item())) {
        throw TrainingDiverged(config.seed, opt.steps(), "non-finite loss");
      }
      const auto grads = tape.backward(loss);
      try {
        opt.step(grads);
      } catch (const std::domain_error& e) {
        throw TrainingDiverged(config.seed, opt.steps(), e.what());
      }
      const auto est = tandem::to_trajectories(scores);
      std::vector<LLRMatrixTrajectory> truth;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        truth.push_back(gauss::true_llr(train_set.sequences[batch[b]], train_set.spec)
                            .restricted(est[b].first_t()));
      }
      const double nb = static_cast<double>(batch.size());
      lsel_sum += lsel.value().item() * nb;
      mce_sum += mce * nb;
      total_sum += loss.value().item() * nb;
      mae_sum += mae_final(est, truth) * nb;
      seen += batch.size();
    }
    const double ns = static_cast<double>(std::max<std::size_t>(seen, 1));
    result.log.push_back({config.seed, epoch, "train", lsel_sum / ns, mce_sum / ns, total_sum / ns,
                          mae_sum / ns});
    const EvalResult val = evaluate(model, val_set, config, false);
    result.log.push_back({config.seed, epoch, "val", val.lsel, val.mce, val.total_loss, val.mae_final_t});
    if (val.mae_final_t < best) {
      best = val.mae_final_t;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  result.best_val_mae = best;
  result.steps = opt.steps();
  return result;
}

}  // namespace sdre::optim
