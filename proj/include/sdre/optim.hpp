#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdre/autodiff.hpp"
#include "sdre/gauss.hpp"
#include "sdre/llr.hpp"
#include "sdre/nets.hpp"
#include "sdre/tandem.hpp"

namespace sdre::optim {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay: p -= lr * wd * p, then the bias-corrected Adam step.
class AdamW {
 public:
  AdamW(std::vector<ad::Parameter*> params, AdamWConfig config);

  // Throws std::domain_error naming the parameter on a non-finite gradient;
  // nothing is updated in that case.
  void step(const ad::GradientMap& grads);

  const AdamWConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const Array& first_moment(std::size_t i) const { return m_.at(i); }
  const Array& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<ad::Parameter*> params_;
  AdamWConfig config_;
  std::vector<Array> m_, v_;
  std::uint64_t steps_ = 0;
};

// Shuffles each class independently and interleaves them so every
// consecutive batch holds each class equally often (+-1).
class BalancedSampler {
 public:
  BalancedSampler(const std::vector<std::size_t>& labels, std::size_t num_classes,
                  std::uint64_t seed);
  std::vector<std::vector<std::size_t>> epoch(std::size_t batch_size);

 private:
  std::vector<std::vector<std::size_t>> by_class_;
  std::mt19937_64 rng_;
};

struct TrainConfig {
  std::size_t order = 0;
  bool prefix_windows = true;
  tandem::Formula formula = tandem::Formula::Tandem;
  double llre_ratio = 1.0;
  std::vector<double> priors;  // empty: uniform
  AdamWConfig adam;
  std::size_t batch_size = 100;
  std::size_t epochs = 20;
  // When nonzero, epochs are sized so the run takes exactly this many steps.
  std::size_t total_steps = 0;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string split;
  double lsel = 0.0;
  double mce = 0.0;
  double total_loss = 0.0;
  double mae_final_t = 0.0;
};

struct EvalResult {
  double lsel = 0.0;
  double mce = 0.0;
  double total_loss = 0.0;
  double mae_final_t = 0.0;
  std::vector<LLRMatrixTrajectory> estimated;  // filled when requested
  std::vector<LLRMatrixTrajectory> truth;
};

struct TrainResult {
  nets::Integrator model;
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t mce_in_update_path = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::uint64_t seed, std::uint64_t step, const std::string& what);
  std::uint64_t seed;
  std::uint64_t step;
};

std::vector<double> resolved_priors(const TrainConfig& config, std::size_t num_classes);

// Batch of sequences -> [B, T, d].
Array stack_frames(const gauss::Dataset& data, const std::vector<std::size_t>& indices);

// Mean over samples and class pairs k < l of |est - truth| at the final timestep.
double mae_final(const std::vector<LLRMatrixTrajectory>& est,
                 const std::vector<LLRMatrixTrajectory>& truth);

EvalResult evaluate(nets::Integrator& model, const gauss::Dataset& data, const TrainConfig& config,
                    bool keep_trajectories);

TrainResult train(nets::Integrator model, const gauss::Dataset& train_set,
                  const gauss::Dataset& val_set, const TrainConfig& config);

}  // namespace sdre::optim
