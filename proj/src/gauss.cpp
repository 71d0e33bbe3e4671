#include "sdre/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sdre/binary_io.hpp"

namespace sdre::gauss {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Box-Muller over a 64-bit Mersenne twister; both outputs are used.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};
}  // namespace

std::size_t GaussianSpec::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

void validate(const GaussianSpec& s) {
  if (s.num_classes < 2 || s.num_classes > 3) {
    throw std::invalid_argument("GaussianSpec: num_classes must be 2 or 3");
  }
  if (s.dim < s.num_classes) throw std::invalid_argument("GaussianSpec: dim smaller than class count");
  if (!(s.offset > 0.0)) throw std::invalid_argument("GaussianSpec: offset must be positive");
  if (s.horizon < 1) throw std::invalid_argument("GaussianSpec: horizon must be >= 1");
  if (s.counts.size() != s.num_classes) {
    throw std::invalid_argument("GaussianSpec: counts must list one entry per class");
  }
}

std::vector<double> class_mean(const GaussianSpec& spec, std::size_t k) {
  if (k >= spec.num_classes) throw std::out_of_range("class_mean: class index out of range");
  std::vector<double> mu(spec.dim, 0.0);
  mu[k] = spec.offset;
  return mu;
}

std::span<const double> FeatureSequence::frame(std::size_t t) const {
  const std::size_t d = frames.dim(1);
  if (t < 1 || t > length()) throw std::out_of_range("FeatureSequence::frame: t out of range");
  return {frames.data() + (t - 1) * d, d};
}

Dataset make_dataset(const GaussianSpec& spec) {
  validate(spec);
  Dataset out{spec, {}};
  out.sequences.reserve(spec.total());
  std::vector<std::size_t> left = spec.counts;
  std::vector<std::vector<double>> means;
  for (std::size_t k = 0; k < spec.num_classes; ++k) means.push_back(class_mean(spec, k));

  // Labels interleave round-robin while every class still has sequences left.
  std::size_t index = 0;
  while (out.sequences.size() < spec.total()) {
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      if (left[k] == 0) continue;
      --left[k];
      FeatureSequence seq;
      seq.label = k;
      seq.id = index;
      seq.frames = Array(Shape{spec.horizon, spec.dim});
      NormalSource normal(splitmix64(splitmix64(spec.seed) ^ index));
      for (std::size_t t = 0; t < spec.horizon; ++t) {
        for (std::size_t j = 0; j < spec.dim; ++j) {
          seq.frames[t * spec.dim + j] = means[k][j] + normal.next();
        }
      }
      out.sequences.push_back(std::move(seq));
      ++index;
    }
  }
  return out;
}

std::vector<std::size_t> balanced_counts(std::size_t total, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, total / num_classes);
  for (std::size_t k = 0; k < total % num_classes; ++k) ++counts[k];
  return counts;
}

GaussianSpec split_spec(const GaussianSpec& base, Split split, std::size_t total) {
  GaussianSpec s = base;
  s.counts = balanced_counts(total, base.num_classes);
  s.seed = splitmix64(base.seed * 4 + static_cast<std::uint64_t>(split));
  return s;
}

Splits make_splits(const GaussianSpec& base, std::size_t n_train, std::size_t n_val,
                   std::size_t n_test) {
  Splits s{make_dataset(split_spec(base, Split::Train, n_train)),
           make_dataset(split_spec(base, Split::Val, n_val)),
           make_dataset(split_spec(base, Split::Test, n_test))};
  // Ids carry the split in the top bits so no two splits share an identity.
  auto tag = [](Dataset& d, Split sp) {
    for (auto& seq : d.sequences) seq.id |= static_cast<std::uint64_t>(sp) << 48;
  };
  tag(s.train, Split::Train);
  tag(s.val, Split::Val);
  tag(s.test, Split::Test);
  return s;
}

double frame_llr(const GaussianSpec& spec, std::span<const double> x, std::size_t k,
                 std::size_t l) {
  // Means are axis-aligned with equal norms, so only coordinates k and l matter
  // and the norm term cancels.
  if (k >= spec.num_classes || l >= spec.num_classes) {
    throw std::out_of_range("frame_llr: class index out of range");
  }
  if (k == l) return 0.0;
  return spec.offset * (x[k] - x[l]);
}

LLRMatrixTrajectory true_llr(const FeatureSequence& seq, const GaussianSpec& spec) {
  const std::size_t horizon = seq.length();
  LLRMatrixTrajectory out(spec.num_classes, 1, horizon, 0);
  std::vector<double> score(spec.num_classes, 0.0);
  for (std::size_t t = 1; t <= horizon; ++t) {
    const auto x = seq.frame(t);
    // lambda_kl = score_k - score_l with score_k = sum_s (mu_k.x - |mu_k|^2 / 2).
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      score[k] += spec.offset * x[k] - 0.5 * spec.offset * spec.offset;
    }
    out.set_from_scores(t, score.data());
  }
  return out;
}

std::vector<double> true_posterior(const Array& window, const GaussianSpec& spec,
                                   std::span<const double> priors) {
  if (window.rank() != 2 || window.dim(0) == 0 || window.dim(1) != spec.dim) {
    throw std::invalid_argument("true_posterior: window must be [w >= 1, " +
                                std::to_string(spec.dim) + "], got " + shape_str(window.shape()));
  }
  if (priors.size() != spec.num_classes) {
    throw std::invalid_argument("true_posterior: one prior per class required");
  }
  const std::size_t w = window.dim(0), d = spec.dim;
  std::vector<double> logp(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const std::vector<double> mu = class_mean(spec, k);
    double acc = std::log(priors[k]);
    for (std::size_t s = 0; s < w; ++s) {
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double r = window[s * d + j] - mu[j];
        sq += r * r;
      }
      acc -= 0.5 * sq;
    }
    logp[k] = acc;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double& v : logp) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : logp) v /= z;
  return logp;
}

void to_json(nlohmann::json& j, const GaussianSpec& s) {
  j = nlohmann::json{{"dim", s.dim},         {"offset", s.offset}, {"num_classes", s.num_classes},
                     {"horizon", s.horizon}, {"counts", s.counts}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, GaussianSpec& s) {
  GaussianSpec d;
  s.dim = j.value("dim", d.dim);
  s.offset = j.value("offset", d.offset);
  s.num_classes = j.value("num_classes", d.num_classes);
  s.horizon = j.value("horizon", d.horizon);
  s.counts = j.value("counts", balanced_counts(d.total(), s.num_classes));
  s.seed = j.value("seed", d.seed);
}

void save_dataset(const std::string& path, const Dataset& data) {
  nlohmann::json header;
  header["kind"] = "gaussian-dataset";
  header["spec"] = data.spec;
  header["count"] = data.sequences.size();
  header["horizon"] = data.spec.horizon;
  header["dim"] = data.spec.dim;
  std::vector<std::size_t> labels;
  std::vector<std::uint64_t> ids;
  std::vector<double> payload;
  payload.reserve(data.sequences.size() * data.spec.horizon * data.spec.dim);
  for (const auto& seq : data.sequences) {
    labels.push_back(seq.label);
    ids.push_back(seq.id);
    payload.insert(payload.end(), seq.frames.values().begin(), seq.frames.values().end());
  }
  header["labels"] = labels;
  header["ids"] = ids;
  io::write_container(path, header, payload);
}

Dataset load_dataset(const std::string& path) {
  io::Container c = io::read_container(path);
  if (c.header.value("kind", "") != "gaussian-dataset") {
    throw std::runtime_error("'" + path + "' is not a dataset dump");
  }
  Dataset out;
  out.spec = c.header.at("spec").get<GaussianSpec>();
  validate(out.spec);
  const auto count = c.header.at("count").get<std::size_t>();
  const auto horizon = c.header.at("horizon").get<std::size_t>();
  const auto dim = c.header.at("dim").get<std::size_t>();
  const auto labels = c.header.at("labels").get<std::vector<std::size_t>>();
  const auto ids = c.header.at("ids").get<std::vector<std::uint64_t>>();
  if (horizon != out.spec.horizon || dim != out.spec.dim) {
    throw std::runtime_error("'" + path + "': header shape disagrees with its spec");
  }
  if (labels.size() != count || ids.size() != count || count != out.spec.total()) {
    throw std::runtime_error("'" + path + "': sequence count mismatch");
  }
  const std::size_t per = horizon * dim;
  if (c.payload.size() != count * per) {
    throw std::runtime_error("'" + path + "': payload holds " + std::to_string(c.payload.size()) +
                             " values, expected " + std::to_string(count * per));
  }
  out.sequences.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (labels[i] >= out.spec.num_classes) throw std::runtime_error("'" + path + "': bad label");
    out.sequences[i].label = labels[i];
    out.sequences[i].id = ids[i];
    out.sequences[i].frames = Array(
        Shape{horizon, dim},
        std::vector<double>(c.payload.begin() + static_cast<std::ptrdiff_t>(i * per),
                            c.payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)));
  }
  return out;
}

}  // namespace sdre::gauss
