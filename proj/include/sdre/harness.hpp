#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdre/llr.hpp"
#include "sdre/nets.hpp"
#include "sdre/optim.hpp"
#include "sdre/sprt.hpp"

namespace sdre::harness {

enum class ModelKind {
  B2BsqrtTandem,
  TanhTandem,
  TandemformerNSP,
  TandemformerGAP,
  TandemformerOneToken,
  OblivionLSEL,
};

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
bool is_transformer(ModelKind kind);

struct NetSizes {
  std::size_t lstm_hidden = 32;
  std::size_t model_dim = 32;
  std::size_t num_heads = 4;
  std::size_t ff_dim = 64;
  std::size_t num_blocks = 1;
  bool layernorm = false;
  double alpha = 1.0;
};

struct ExperimentConfig {
  std::string preset = "custom";
  std::string arm = "main";
  ModelKind model = ModelKind::B2BsqrtTandem;
  std::size_t dim = 128;
  double offset = 2.0;
  std::size_t num_classes = 2;
  std::size_t horizon = 20;
  std::size_t n_train = 8000;
  std::size_t n_val = 1000;
  std::size_t n_test = 1000;
  std::size_t order = 19;
  bool prefix_windows = true;
  double llre_ratio = 1.0;
  optim::AdamWConfig adam;
  std::size_t batch_size = 100;
  std::size_t epochs = 20;
  std::size_t total_steps = 0;
  NetSizes net;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
  // Skip training: posteriors come from the analytic Gaussian posterior (requires N = 0).
  bool oracle = false;
  bool sprt = false;
  std::vector<double> thresholds{0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0};
  bool parallel_seeds = true;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void validate(const ExperimentConfig& c);

// "a.b.c=value": value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);
ExperimentConfig with_overrides(const ExperimentConfig& c, const std::vector<std::string>& overrides);

gauss::GaussianSpec gaussian_spec(const ExperimentConfig& c, std::uint64_t seed);
nets::Integrator make_model(const ExperimentConfig& c, std::uint64_t seed);
optim::TrainConfig train_config(const ExperimentConfig& c, std::uint64_t seed);

// Per-t mean over samples and class pairs k < l of |est - truth|.
std::vector<double> compute_mae(const std::vector<LLRMatrixTrajectory>& est,
                                const std::vector<LLRMatrixTrajectory>& truth);

struct PairError {
  std::size_t k = 0;
  std::size_t l = 0;
  double mae = 0.0;
  double zero_mae = 0.0;  // error of predicting 0
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::size_t first_t = 1;
  std::vector<double> mae_vs_t;
  double mae_final = 0.0;
  std::vector<PairError> pairs;
  // Least-squares slope in t of the mean lambda_{y,l}, l != y, over correctly
  // decided test samples, then averaged over those samples.
  double mean_slope = 0.0;
  std::size_t correct = 0;
  std::size_t best_epoch = 0;
  std::uint64_t mce_in_update_path = 0;
  std::vector<optim::EpochMetrics> log;
  std::vector<sprt::SATPoint> sat;
  std::string trajectory_rows;  // CSV body for llr_trajectories.csv
};

struct ArmResult {
  ExperimentConfig config;
  std::vector<SeedResult> seeds;
  nlohmann::json summary;
};

SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed);
// Runs every seed, writes the arm's CSVs and summary.json under config.out_dir.
ArmResult run_experiment(const ExperimentConfig& c);

std::vector<std::string> preset_names();
std::vector<ExperimentConfig> preset_arms(const std::string& preset);

struct RunOptions {
  std::vector<std::uint64_t> seeds;  // empty: preset default
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::vector<std::string> arms;  // empty: every arm
};

// Runs the selected arms into out_dir/<arm>/ and writes out_dir/summary.json.
nlohmann::json run_preset(const std::string& preset, const RunOptions& options);

std::string format_double(double v);

}  // namespace sdre::harness
