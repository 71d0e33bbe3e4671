#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdre/array.hpp"
#include "sdre/llr.hpp"

// Sequential Gaussian data with analytic log-likelihood ratios.
//
// Class k (k < 3) draws i.i.d. frames from N(mu_k, I) where mu_k has the
// density offset at coordinate k and zeros elsewhere.
namespace sdre::gauss {

struct GaussianSpec {
  std::size_t dim = 128;
  double offset = 2.0;
  std::size_t num_classes = 2;
  std::size_t horizon = 50;
  std::vector<std::size_t> counts{500, 500};  // sequences per class
  std::uint64_t seed = 0;

  std::size_t total() const;
};

void validate(const GaussianSpec& spec);
std::vector<double> class_mean(const GaussianSpec& spec, std::size_t k);

struct FeatureSequence {
  Array frames;  // [horizon, dim]
  std::size_t label = 0;
  std::uint64_t id = 0;

  std::size_t length() const { return frames.dim(0); }
  std::span<const double> frame(std::size_t t) const;  // 1-based
};

struct Dataset {
  GaussianSpec spec;
  std::vector<FeatureSequence> sequences;
};

Dataset make_dataset(const GaussianSpec& spec);

// Three datasets from disjoint seed streams and disjoint sequence ids.
struct Splits {
  Dataset train, val, test;
};

enum class Split : std::uint64_t { Train = 1, Val = 2, Test = 3 };

// Balanced per-class counts for `total` sequences over `num_classes`.
std::vector<std::size_t> balanced_counts(std::size_t total, std::size_t num_classes);
GaussianSpec split_spec(const GaussianSpec& base, Split split, std::size_t total);
Splits make_splits(const GaussianSpec& base, std::size_t n_train, std::size_t n_val,
                   std::size_t n_test);

// Per-frame lambda_kl(x) = (mu_k - mu_l).x - (|mu_k|^2 - |mu_l|^2) / 2.
double frame_llr(const GaussianSpec& spec, std::span<const double> x, std::size_t k,
                 std::size_t l);
// Cumulative analytic LLR matrices for t in [1, horizon].
LLRMatrixTrajectory true_llr(const FeatureSequence& seq, const GaussianSpec& spec);
// Bayes posterior of a window of frames ([w, dim], w >= 1).
std::vector<double> true_posterior(const Array& window, const GaussianSpec& spec,
                                   std::span<const double> priors);

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

void to_json(nlohmann::json& j, const GaussianSpec& s);
void from_json(const nlohmann::json& j, GaussianSpec& s);

}  // namespace sdre::gauss
