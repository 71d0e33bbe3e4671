#include "sdre/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "sdre/autodiff.hpp"
#include "sdre/harness.hpp"
#include "sdre/losses.hpp"
#include "sdre/nets.hpp"
#include "sdre/sprt.hpp"
#include "sdre/tandem.hpp"

namespace sdre::verify {

namespace {

Array random_array(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(std::move(shape));
  for (double& v : a.values()) v = u(rng);
  return a;
}

// Kinks of relu and b2bsqrt sit at zero; keep samples clear of them.
Array random_away_from_zero(Shape shape, std::mt19937_64& rng, double r = 1e-2) {
  Array a = random_array(std::move(shape), rng);
  for (double& v : a.values()) {
    if (std::abs(v) < r) v = v < 0 ? -r - std::abs(v) : r + std::abs(v);
  }
  return a;
}

// Weighted sum so every output coordinate carries a distinct gradient.
ad::Var weighted_sum(ad::Tape& t, const ad::Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ad::Var w = t.constant(random_array(y.shape(), rng, -1.0, 1.0));
  return sum_all(multiply(y, w));
}

struct PrimitiveCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)> build;
  std::function<Array(Shape, std::mt19937_64&)> sample = [](Shape s, std::mt19937_64& r) {
    return random_array(std::move(s), r);
  };
};

std::vector<PrimitiveCase> primitive_cases() {
  auto away = [](Shape s, std::mt19937_64& r) {
    return random_away_from_zero(std::move(s), r);
  };
  auto positive = [](Shape s, std::mt19937_64& r) {
    return random_array(std::move(s), r, 0.1, 2.0);
  };
  return {
      {"matmul", {{2, 3}, {3, 4}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::matmul(v[0], v[1]), 1); }},
      {"matmul-transposed", {{2, 2, 3}, {4, 3}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::matmul(v[0], v[1], true), 2); }},
      {"matmul-batched", {{2, 3, 4}, {2, 4, 2}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::matmul(v[0], v[1]), 3); }},
      {"matmul-batched-transposed", {{2, 3, 4}, {2, 5, 4}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::matmul(v[0], v[1], true), 4); }},
      {"add", {{3, 4}, {3, 4}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::add(v[0], v[1]), 5); }},
      {"add-broadcast", {{2, 3, 4}, {4}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::add(v[0], v[1]), 6); }},
      {"multiply", {{2, 3, 4}, {3, 4}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::multiply(v[0], v[1]), 7); }},
      {"sigmoid", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::sigmoid(v[0]), 8); }},
      {"tanh", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::tanh(v[0]), 9); }},
      {"b2bsqrt", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::b2bsqrt(v[0], 1.0), 10); }, away},
      {"relu", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::relu(v[0]), 11); }, away},
      {"softmax-last-axis", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::softmax_last(v[0]), 12); }},
      {"log", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::log(v[0]), 13); }, positive},
      {"sum-axis", {{2, 3, 4}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::sum_axis(v[0], 1), 14); }},
      {"scale", {{3, 5}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::scale(v[0], -2.5), 15); }},
      {"concat", {{2, 3, 2}, {2, 1, 2}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::concat({v[0], v[1], v[0]}, 1), 16); }},
      {"layernorm-last-axis", {{3, 6}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::layernorm_last(v[0]), 17); }},
      {"logsumexp-last-axis", {{3, 6}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::logsumexp_last(v[0]), 18); }},
      {"slice", {{3, 6}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::slice(v[0], 1, 2, 3), 19); }},
      {"gather-rows", {{4, 3}},
       [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::gather_rows(v[0], {3, 0, 3, 1}), 20); }},
      {"reshape", {{2, 6}}, [](ad::Tape& t, auto& v) { return weighted_sum(t, ad::reshape(v[0], {3, 4}), 21); }},
  };
}

std::vector<ad::Parameter> make_params(const PrimitiveCase& c, std::mt19937_64& rng) {
  std::vector<ad::Parameter> ps;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) {
    ps.push_back({"p" + std::to_string(i), c.sample(c.shapes[i], rng)});
  }
  return ps;
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(k);
  double s = 0.0;
  for (double& v : p) s += (v = u(rng));
  for (double& v : p) v /= s;
  return p;
}

tandem::PosteriorTrajectoryPair random_pair(std::mt19937_64& rng, std::size_t k, std::size_t t,
                                            std::size_t n) {
  tandem::PosteriorTrajectoryPair p;
  p.order = n;
  p.horizon = t;
  p.priors.assign(k, 1.0 / static_cast<double>(k));
  for (std::size_t s = n + 1; s <= t; ++s) p.full.push_back(random_simplex(rng, k));
  if (n > 0) {
    for (std::size_t s = n + 2; s <= t; ++s) p.shorts.push_back(random_simplex(rng, k));
  }
  return p;
}

Check tandem_invariants() {
  std::mt19937_64 rng(11);
  double worst_incremental = 0.0, worst_additive = 0.0;
  bool antisym = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 3);
    const std::size_t n = static_cast<std::size_t>(trial % 4);
    const auto p = random_pair(rng, k, 12, n);
    const auto tr = tandem::tandem_llr(p);
    for (std::size_t t = n + 1; t <= 12; ++t) {
      const auto scratch = tandem::tandem_llr_at(p, t);
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          worst_incremental = std::max(worst_incremental, std::abs(scratch[a * k + b] - tr.at(t, a, b)));
          if (tr.at(t, a, b) != -tr.at(t, b, a)) antisym = false;
          if (t >= n + 2 && n > 0) {
            const auto& f = p.full[t - n - 1];
            const auto& s = p.shorts[t - n - 2];
            const double inc = std::log(f[a] / f[b]) - std::log(s[a] / s[b]);
            worst_additive =
                std::max(worst_additive, std::abs(tr.at(t, a, b) - tr.at(t - 1, a, b) - inc));
          }
        }
      }
    }
  }
  std::ostringstream d;
  d << "max |incremental - scratch| = " << worst_incremental
    << ", max additivity error = " << worst_additive << ", antisymmetric = " << antisym;
  return {"tandem: incremental/scratch, additivity, antisymmetry",
          antisym && worst_incremental < 1e-12 && worst_additive < 1e-12, d.str()};
}

Check lsel_invariants() {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 3.0);
  bool ok = true;
  double worst_perm = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    LLRMatrixTrajectory tr(3, 1, 5, 0);
    std::vector<double> s(3);
    for (std::size_t t = 1; t <= 5; ++t) {
      for (double& v : s) v = z(rng);
      tr.set_from_scores(t, s.data());
    }
    const std::size_t y = static_cast<std::size_t>(trial % 3);
    const double loss = losses::lsel(std::span(&tr, 1), std::span(&y, 1));
    if (!(loss >= 0.0)) ok = false;
    // Swap the two non-true classes.
    std::size_t l1 = (y + 1) % 3, l2 = (y + 2) % 3;
    LLRMatrixTrajectory sw(3, 1, 5, 0);
    for (std::size_t t = 1; t <= 5; ++t) {
      std::vector<double> scores(3);
      scores[y] = 0.0;
      scores[l1] = -tr.at(t, y, l2);
      scores[l2] = -tr.at(t, y, l1);
      sw.set_from_scores(t, scores.data());
    }
    const double swapped = losses::lsel(std::span(&sw, 1), std::span(&y, 1));
    worst_perm = std::max(worst_perm, std::abs(swapped - loss));
  }
  std::ostringstream d;
  d << "nonnegative = " << ok << ", max relabeling difference = " << worst_perm;
  return {"lsel: nonnegative, relabeling symmetric", ok && worst_perm < 1e-12, d.str()};
}

Check sprt_invariants() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> step(0.3, 1.0);
  std::uniform_real_distribution<double> thr(0.0, 6.0);
  std::size_t disagreements = 0, monotone_violations = 0, scale_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t first = 1 + static_cast<std::size_t>(trial % 4);
    LLRMatrixTrajectory tr(2, first, 30, first - 1);
    std::vector<double> path;
    double v = 0.0;
    for (std::size_t t = first; t <= 30; ++t) {
      v += (trial % 2 ? 1.0 : -1.0) * step(rng);
      const double s[2] = {0.0, v};
      tr.set_from_scores(t, s);
      path.push_back(v);
    }
    const double a = thr(rng);
    const auto o = sprt::sprt_run(tr, sprt::ThresholdMatrix(2, a));
    const auto w = sprt::reference::two_boundary(path, first, a);
    if (o.decided_class != w.decided_class || o.stopping_time != w.stopping_time ||
        o.forced != w.forced) {
      ++disagreements;
    }
    const auto later = sprt::sprt_run(tr, sprt::ThresholdMatrix(2, a + 1.0));
    if (later.stopping_time < o.stopping_time) ++monotone_violations;
    LLRMatrixTrajectory scaled(2, first, 30, first - 1);
    for (std::size_t t = first; t <= 30; ++t) {
      const double s[2] = {0.0, 2.5 * tr.at(t, 1, 0)};
      scaled.set_from_scores(t, s);
    }
    const auto so = sprt::sprt_run(scaled, sprt::ThresholdMatrix(2, a).scaled(2.5));
    if (so.decided_class != o.decided_class || so.stopping_time != o.stopping_time) ++scale_violations;
  }
  std::ostringstream d;
  d << disagreements << " two-boundary disagreements, " << monotone_violations
    << " monotonicity violations, " << scale_violations << " scale violations over 1000 paths";
  return {"sprt: two-boundary agreement, monotone stopping, scale equivariance",
          disagreements == 0 && monotone_violations == 0 && scale_violations == 0, d.str()};
}

Check b2bsqrt_invariants() {
  bool odd = true, increasing = true;
  double prev = -1e300;
  for (int i = 0; i < 1000; ++i) {
    const double x = -50.0 + 100.0 * i / 999.0;
    const double f = nets::b2bsqrt(x, 1.0);
    if (nets::b2bsqrt(-x, 1.0) != -f) odd = false;
    if (!(f > prev)) increasing = false;
    prev = f;
  }
  const double ratio = nets::b2bsqrt(1e4, 1.0) / std::sqrt(1e4);
  std::ostringstream d;
  d << "odd = " << odd << ", increasing = " << increasing << ", f(1e4)/sqrt(1e4) = " << ratio;
  return {"b2bsqrt: odd, increasing, sqrt growth", odd && increasing && ratio >= 0.9 && ratio <= 1.0,
          d.str()};
}

Check gradient_integrity() {
  double worst_primitive = 0.0, worst_model = 0.0;
  for (const auto& c : primitive_gradients(5, 2024)) worst_primitive = std::max(worst_primitive, c.max_rel_error);
  for (const auto& c : integrator_gradients()) worst_model = std::max(worst_model, c.max_rel_error);
  std::ostringstream d;
  d << "max relative error: primitives " << worst_primitive << ", full loss " << worst_model;
  return {"gradient: primitives and LSEL through each integrator",
          worst_primitive < 1e-4 && worst_model < 1e-4, d.str()};
}

}  // namespace

std::vector<GradientCase> primitive_gradients(int draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradientCase> out;
  for (const PrimitiveCase& c : primitive_cases()) {
    double worst = 0.0;
    for (int draw = 0; draw < draws; ++draw) {
      auto params = make_params(c, rng);
      worst = std::max(worst, ad::finite_diff_check(c.build, params, 1e-3));
    }
    out.push_back({c.name, worst});
  }
  return out;
}

std::vector<GradientCase> integrator_gradients() {
  std::vector<GradientCase> out;
  for (const auto kind : {harness::ModelKind::B2BsqrtTandem, harness::ModelKind::TanhTandem,
                          harness::ModelKind::TandemformerNSP, harness::ModelKind::TandemformerGAP,
                          harness::ModelKind::TandemformerOneToken, harness::ModelKind::OblivionLSEL}) {
    harness::ExperimentConfig c;
    c.model = kind;
    c.dim = 4;
    c.horizon = 5;
    c.order = 1;
    c.net.lstm_hidden = 3;
    c.net.model_dim = 4;
    c.net.num_heads = 2;
    c.net.ff_dim = 6;
    nets::Integrator model = harness::make_model(c, 3);
    const auto formula = harness::train_config(c, 3).formula;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(0.0, 1.0);
    Array frames(Shape{2, 5, 4});
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = z(rng);
    const std::vector<std::size_t> labels{0, 1};
    auto f = [&](ad::Tape& tape, const std::vector<ad::Var>&) {
      const auto w = nets::window_logits(tape, model, frames, 1, true);
      const std::vector<double> priors{0.5, 0.5};
      return losses::lsel(tape, tandem::llr_scores(tape, w, formula, priors), labels);
    };
    out.push_back({harness::to_string(kind), ad::finite_diff_check(f, nets::parameters(model), 1e-6)});
  }
  return out;
}

std::vector<Check> run_all(const std::string& out_dir) {
  std::vector<Check> checks;
  harness::RunOptions opts;
  opts.out_dir = out_dir;
  const auto summary = harness::run_preset("oracle-sanity", opts);
  for (const auto& arm : summary["arms"]) {
    double worst = 0.0;
    for (const auto& e : arm["mae_vs_t"]) worst = std::max(worst, e["mean"].get<double>());
    std::ostringstream d;
    d << "max MAE over t = " << worst;
    checks.push_back({"oracle-sanity " + arm["arm"].get<std::string>(), worst < 1e-9, d.str()});
  }
  for (const auto& fn : std::vector<std::function<Check()>>{tandem_invariants, lsel_invariants,
                                                            sprt_invariants, b2bsqrt_invariants,
                                                            gradient_integrity}) {
    checks.push_back(fn());
  }
  return checks;
}

}  // namespace sdre::verify
