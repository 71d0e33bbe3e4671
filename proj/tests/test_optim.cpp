#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "sdre/optim.hpp"

using namespace sdre;
using namespace sdre::optim;

namespace {

// Binds every parameter and returns gradients equal to `g` via loss = sum(p * g).
ad::GradientMap linear_grads(ad::Tape& tape, std::vector<ad::Parameter*> ps, const std::vector<Array>& g) {
  ad::Var loss;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const ad::Var term = ad::sum_all(ad::multiply(tape.parameter(*ps[i]), tape.constant(g[i])));
    loss = loss.valid() ? ad::add(loss, term) : term;
  }
  return tape.backward(loss);
}

Array scalar(double v) { return Array(Shape{1}, std::vector<double>{v}); }


gauss::Splits tiny_splits(std::uint64_t seed, std::size_t n_train = 60) {
  gauss::GaussianSpec s;
  s.dim = 6;
  s.offset = 2.0;
  s.horizon = 5;
  s.seed = seed;
  return gauss::make_splits(s, n_train, 30, 30);
}

nets::Integrator tiny_lstm(std::uint64_t seed) {
  nets::LSTMConfig c;
  c.input_size = 6;
  c.hidden_size = 4;
  c.cell_activation = c.output_activation = nets::Activation::b2bsqrt(1.0);
  return nets::make_lstm(c, seed);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.order = 2;
  c.batch_size = 20;
  c.epochs = 3;
  c.adam.lr = 1e-2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("Adam first step and decoupled decay") {
  ad::Parameter p{"p", scalar(1.0)};
  AdamW opt({&p}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  ad::Tape tape;
  opt.step(linear_grads(tape, {&p}, {scalar(1.0)}));
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(opt.steps() == 1);

  ad::Parameter q{"q", scalar(1.0)};
  AdamW decay({&q}, AdamWConfig{0.1, 0.9, 0.999, 1e-8, 0.1});
  ad::Tape t2;
  decay.step(linear_grads(t2, {&q}, {scalar(0.0)}));
  CHECK(q.value[0] == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("AdamW against a scalar reference over many steps") {
  const AdamWConfig cfg{3e-2, 0.8, 0.99, 1e-6, 1e-2};
  std::vector<ad::Parameter> ps{{"a", scalar(0.5)}, {"b", scalar(-1.5)}, {"c", scalar(2.0)}};
  AdamW opt({&ps[0], &ps[1], &ps[2]}, cfg);
  double w[3] = {0.5, -1.5, 2.0}, m[3] = {}, v[3] = {};
  for (int step = 1; step <= 50; ++step) {
    // Gradient of sum_i (w_i - i)^2 evaluated at the current weights.
    std::vector<Array> g;
    double gr[3];
    for (int i = 0; i < 3; ++i) {
      gr[i] = 2.0 * (w[i] - i);
      g.push_back(scalar(gr[i]));
    }
    ad::Tape tape;
    opt.step(linear_grads(tape, {&ps[0], &ps[1], &ps[2]}, g));
    for (int i = 0; i < 3; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gr[i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gr[i] * gr[i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, step));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, step));
      w[i] = w[i] * (1 - cfg.lr * cfg.weight_decay) - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
  for (int i = 0; i < 3; ++i) CHECK(std::abs(ps[i].value[0] - w[i]) < 1e-12);
}

TEST_CASE("AdamW rejects non-finite gradients and bad settings") {
  ad::Parameter p{"weights", scalar(1.0)};
  AdamW opt({&p}, AdamWConfig{});
  ad::Tape tape;
  const auto g = linear_grads(tape, {&p}, {scalar(std::numeric_limits<double>::infinity())});
  try {
    opt.step(g);
    FAIL("expected a domain_error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("weights") != std::string::npos);
  }
  CHECK(p.value[0] == 1.0);
  CHECK(opt.steps() == 0);
  CHECK_THROWS_AS(AdamW({&p}, AdamWConfig{0.0}), std::invalid_argument);
  CHECK_THROWS_AS(AdamW({&p}, AdamWConfig{1e-3, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(AdamW({&p}, AdamWConfig{1e-3, 0.9, 0.999, 1e-8, -1.0}), std::invalid_argument);
}

TEST_CASE("balanced sampler") {
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 90; ++i) labels.push_back(i % 3);
  BalancedSampler s(labels, 3, 5);
  const auto batches = s.epoch(10);
  std::vector<int> seen(90, 0);
  for (const auto& b : batches) {
    std::vector<int> count(3, 0);
    for (std::size_t i : b) {
      ++count[labels[i]];
      ++seen[i];
    }
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    CHECK(*hi - *lo <= 1);
  }
  for (int c : seen) CHECK(c == 1);

  BalancedSampler a(labels, 3, 9), b(labels, 3, 9);
  CHECK(a.epoch(7) == b.epoch(7));
  CHECK(a.epoch(7) == b.epoch(7));
  CHECK_THROWS_AS(BalancedSampler(labels, 2, 1), std::out_of_range);
}

TEST_CASE("training loss falls and the best checkpoint is kept") {
  const auto d = tiny_splits(3);
  const auto r = train(tiny_lstm(3), d.train, d.val, tiny_config());
  REQUIRE(r.log.size() == 6);
  std::vector<double> train_loss, val_mae;
  for (const auto& e : r.log) {
    if (e.split == "train") train_loss.push_back(e.total_loss);
    if (e.split == "val") val_mae.push_back(e.mae_final_t);
  }
  CHECK(train_loss[1] < train_loss[0]);
  CHECK(train_loss[2] < train_loss[1]);
  for (double v : val_mae) CHECK(r.best_val_mae <= v);
  CHECK(val_mae[r.best_epoch - 1] == r.best_val_mae);
  CHECK(r.steps == 9);
  CHECK(r.mce_in_update_path == 0);

  // The stored model reproduces the best validation error.
  auto best = r.model;
  CHECK(evaluate(best, d.val, tiny_config(), false).mae_final_t == r.best_val_mae);
}

TEST_CASE("mCE enters the update only below ratio 1") {
  const auto d = tiny_splits(4);
  auto cfg = tiny_config();
  cfg.epochs = 1;
  cfg.llre_ratio = 0.5;
  CHECK(train(tiny_lstm(4), d.train, d.val, cfg).mce_in_update_path == 3);
}

TEST_CASE("fixed step budget") {
  const auto d = tiny_splits(5);
  auto cfg = tiny_config();
  cfg.total_steps = 7;
  const auto r = train(tiny_lstm(5), d.train, d.val, cfg);
  CHECK(r.steps == 7);
  CHECK(r.log.size() == 6);  // 3 batches per epoch -> 3 epochs, the last one short
}

TEST_CASE("training is deterministic") {
  const auto d = tiny_splits(6);
  const auto a = train(tiny_lstm(6), d.train, d.val, tiny_config());
  const auto b = train(tiny_lstm(6), d.train, d.val, tiny_config());
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].total_loss == b.log[i].total_loss);
    CHECK(a.log[i].mae_final_t == b.log[i].mae_final_t);
  }
}

TEST_CASE("non-finite inputs abort with the seed and step") {
  auto d = tiny_splits(7);
  d.train.sequences[0].frames[0] = std::numeric_limits<double>::quiet_NaN();
  auto cfg = tiny_config();
  try {
    train(tiny_lstm(7), d.train, d.val, cfg);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.seed == cfg.seed);
    CHECK(e.step < 3);
  }
}

TEST_CASE("final-time MAE") {
  LLRMatrixTrajectory a(3, 1, 2, 0), b(3, 1, 2, 0);
  const double sa[3] = {0.0, 1.0, 2.0}, sb[3] = {0.0, 0.0, 0.0};
  a.set_from_scores(2, sa);
  b.set_from_scores(2, sb);
  // pairs (0,1), (0,2), (1,2) -> errors 1, 2, 1
  CHECK(mae_final({a}, {b}) == doctest::Approx(4.0 / 3.0));
  CHECK_THROWS_AS(mae_final({a}, {}), std::invalid_argument);
}
