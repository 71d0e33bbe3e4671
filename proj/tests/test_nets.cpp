#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "sdre/nets.hpp"
#include "testing.hpp"

using namespace sdre;
using namespace sdre::nets;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void fill_random(ad::Parameter& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : p.value.values()) v = u(rng);
}

LSTMIntegrator small_lstm(Activation act, std::uint64_t seed, std::size_t input = 3,
                          std::size_t hidden = 2, std::size_t k = 2) {
  LSTMConfig c;
  c.input_size = input;
  c.hidden_size = hidden;
  c.num_classes = k;
  c.cell_activation = act;
  c.output_activation = act;
  LSTMIntegrator m = make_lstm(c, seed);
  std::mt19937_64 rng(seed + 100);
  fill_random(m.bias, rng);
  fill_random(m.b_head, rng);
  return m;
}

TransformerIntegrator small_transformer(Pooling pooling, std::size_t order, std::uint64_t seed,
                                        bool layernorm = false) {
  TransformerConfig c;
  c.input_size = 3;
  c.model_dim = 4;
  c.num_heads = 2;
  c.ff_dim = 6;
  c.order = order;
  c.pooling = pooling;
  c.layernorm = layernorm;
  TransformerIntegrator m = make_transformer(c, seed);
  std::mt19937_64 rng(seed + 100);
  fill_random(m.b_embed, rng);
  fill_random(m.b_head, rng);
  fill_random(m.cls_token, rng);
  return m;
}

Array window_of(const Array& frames, std::size_t b, std::size_t first, std::size_t last) {
  const std::size_t t = frames.dim(1), d = frames.dim(2);
  Array w(Shape{last - first + 1, d});
  for (std::size_t s = first; s <= last; ++s) {
    for (std::size_t j = 0; j < d; ++j) w[(s - first) * d + j] = frames[(b * t + s - 1) * d + j];
  }
  return w;
}

std::vector<double> softmax_row(const ad::Var& logits, std::size_t b) {
  const std::size_t k = logits.shape()[1];
  std::vector<double> p(k);
  double m = -1e300, s = 0.0;
  for (std::size_t c = 0; c < k; ++c) m = std::max(m, logits.value()[b * k + c]);
  for (std::size_t c = 0; c < k; ++c) s += (p[c] = std::exp(logits.value()[b * k + c] - m));
  for (double& v : p) v /= s;
  return p;
}

// Batched window logits must match the single-window posterior of each window.
template <class Posterior>
void check_window_family(Integrator& model, std::size_t order, Posterior posterior) {
  std::mt19937_64 rng(9);
  const Array frames = testing::random_array(Shape{2, 6, 3}, rng);
  ad::Tape tape;
  const WindowLogits w = window_logits(tape, model, frames, order, true);
  REQUIRE(w.prefix.size() == order);
  REQUIRE(w.full.size() == 6 - order);
  REQUIRE(w.shorts.size() == (order == 0 ? 0 : 6 - order - 1));
  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    auto compare = [&](const ad::Var& logits, std::size_t first, std::size_t last) {
      const auto expect = posterior(window_of(frames, b, first, last));
      const auto got = softmax_row(logits, b);
      for (std::size_t c = 0; c < got.size(); ++c) worst = std::max(worst, std::abs(got[c] - expect[c]));
    };
    for (std::size_t t = 1; t <= order; ++t) compare(w.prefix[t - 1], 1, t);
    for (std::size_t s = order + 1; s <= 6; ++s) compare(w.full[s - order - 1], s - order, s);
    for (std::size_t s = order + 2; s <= 6 && order > 0; ++s) compare(w.shorts[s - order - 2], s - order, s - 1);
  }
  CHECK(worst < 1e-12);
}

}  // namespace

TEST_CASE("b2bsqrt values, derivative and shape") {
  CHECK(b2bsqrt(0.0, 1.0) == 0.0);
  CHECK(b2bsqrt(3.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b2bsqrt(-3.0, 1.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(b2bsqrt_derivative(0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b2bsqrt_derivative(0.0, 4.0) == doctest::Approx(0.25).epsilon(1e-15));

  double prev = -1e300;
  for (int i = 0; i < 1000; ++i) {
    const double x = -50.0 + 100.0 * i / 999.0;
    CHECK(b2bsqrt(-x, 1.0) == -b2bsqrt(x, 1.0));
    CHECK(b2bsqrt(x, 1.0) > prev);
    prev = b2bsqrt(x, 1.0);
  }
  const double ratio = b2bsqrt(1e4, 1.0) / std::sqrt(1e4);
  CHECK(ratio >= 0.9);
  CHECK(ratio <= 1.0);

  CHECK_THROWS_AS(b2bsqrt(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(Activation::b2bsqrt(-1.0), std::invalid_argument);
}

TEST_CASE("LSTM step with all-zero weights stays at zero") {
  LSTMConfig c;
  c.input_size = 3;
  c.hidden_size = 2;
  LSTMIntegrator m = make_lstm(c, 1);
  for (auto* p : m.parameters()) p->value.fill(0.0);
  ad::Tape t;
  const LSTMState st = lstm_step(t, m, t.constant(Array(Shape{1, 3})), zero_state(t, m, 1));
  for (double v : st.h.value().values()) CHECK(v == 0.0);
  for (double v : st.c.value().values()) CHECK(v == 0.0);
}

TEST_CASE("tanh LSTM step matches a textbook implementation") {
  LSTMIntegrator m = small_lstm(Activation::tanh(), 2, 2, 2);
  std::mt19937_64 rng(3);
  const std::vector<double> x{0.7, -1.2}, h0{0.3, -0.4}, c0{-0.5, 0.9};

  // Textbook gates on plain doubles; weights are stored [in, 4H] / [H, 4H] in i, f, g, o order.
  const Array& wi = m.w_input.value;
  const Array& wh = m.w_hidden.value;
  const Array& bias = m.bias.value;
  auto pre = [&](std::size_t gate, std::size_t j) {
    const std::size_t col = gate * 2 + j;
    double z = bias[col];
    for (std::size_t a = 0; a < 2; ++a) z += x[a] * wi[a * 8 + col] + h0[a] * wh[a * 8 + col];
    return z;
  };
  std::vector<double> h_expect(2), c_expect(2);
  for (std::size_t j = 0; j < 2; ++j) {
    const double i = sigmoid(pre(0, j)), f = sigmoid(pre(1, j)), g = std::tanh(pre(2, j)),
                 o = sigmoid(pre(3, j));
    c_expect[j] = f * c0[j] + i * g;
    h_expect[j] = o * std::tanh(c_expect[j]);
  }

  ad::Tape t;
  LSTMState st{t.constant(Array(Shape{1, 2}, h0)), t.constant(Array(Shape{1, 2}, c0))};
  st = lstm_step(t, m, t.constant(Array(Shape{1, 2}, x)), st);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(st.h.value()[j] == doctest::Approx(h_expect[j]).epsilon(1e-14));
    CHECK(st.c.value()[j] == doctest::Approx(c_expect[j]).epsilon(1e-14));
  }
}

TEST_CASE("B2Bsqrt LSTM with forced gates writes b2bsqrt(3) into the cell") {
  LSTMConfig c;
  c.input_size = 2;
  c.hidden_size = 1;
  c.cell_activation = Activation::b2bsqrt(1.0);
  c.output_activation = Activation::b2bsqrt(1.0);
  LSTMIntegrator m = make_lstm(c, 4);
  m.w_input.value.fill(0.0);
  m.w_hidden.value.fill(0.0);
  m.bias.value = Array(Shape{4}, {60.0, -60.0, 3.0, 0.0});  // i, f, g, o
  ad::Tape t;
  const LSTMState st = lstm_step(t, m, t.constant(Array(Shape{1, 2}, {0.4, -0.8})), zero_state(t, m, 1));
  CHECK(st.c.value()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(st.h.value()[0] == doctest::Approx(0.5 * b2bsqrt(1.0, 1.0)).epsilon(1e-15));
}

TEST_CASE("LSTM shape errors") {
  LSTMIntegrator m = small_lstm(Activation::tanh(), 5);
  ad::Tape t;
  CHECK_THROWS_AS(lstm_step(t, m, t.constant(Array(Shape{1, 4})), zero_state(t, m, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(lstm_step(t, m, t.constant(Array(Shape{2, 3})), zero_state(t, m, 1)),
                  std::invalid_argument);
}

TEST_CASE("lstm_posterior of a single frame is one step plus the head") {
  LSTMIntegrator m = small_lstm(Activation::b2bsqrt(1.0), 6);
  const Array frame(Shape{1, 3}, {0.2, -0.1, 1.5});
  ad::Tape t;
  const LSTMState st = lstm_step(t, m, t.constant(frame), zero_state(t, m, 1));
  const auto expect = softmax_row(lstm_head(t, m, st.h), 0);
  const auto got = lstm_posterior(m, frame);
  for (std::size_t c = 0; c < 2; ++c) CHECK(got[c] == doctest::Approx(expect[c]).epsilon(1e-15));
}

TEST_CASE("zero head weights give uniform posteriors") {
  std::mt19937_64 rng(7);
  const Array window = testing::random_array(Shape{3, 3}, rng);
  LSTMIntegrator lstm = small_lstm(Activation::tanh(), 7, 3, 4, 3);
  lstm.w_head.value.fill(0.0);
  lstm.b_head.value.fill(0.0);
  for (double p : lstm_posterior(lstm, window)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  for (Pooling pool : {Pooling::NSP, Pooling::GAP, Pooling::OneToken}) {
    TransformerIntegrator tf = small_transformer(pool, 3, 8);
    tf.w_head.value.fill(0.0);
    tf.b_head.value.fill(0.0);
    for (double p : transformer_posterior(tf, window)) CHECK(p == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("posteriors are strictly positive and sum to one") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Array window = testing::random_array(Shape{1 + static_cast<std::size_t>(trial % 4), 3}, rng, -4, 4);
    LSTMIntegrator lstm = small_lstm(Activation::b2bsqrt(1.0), static_cast<std::uint64_t>(trial), 3, 4, 3);
    TransformerIntegrator tf = small_transformer(Pooling::NSP, 3, static_cast<std::uint64_t>(trial));
    for (const auto& p : {lstm_posterior(lstm, window), transformer_posterior(tf, window)}) {
      double s = 0.0;
      for (double v : p) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("NSP pooling divides by N+1") {
  const std::vector<double> z{3.0, -1.0, 2.0};
  CHECK(nsp_pool({{0.0, 0.0, 0.0}}, 7) == std::vector<double>{0.0, 0.0, 0.0});
  const auto same = nsp_pool({z, z, z, z, z}, 4);
  for (std::size_t j = 0; j < 3; ++j) CHECK(same[j] == doctest::Approx(z[j]).epsilon(1e-15));
  const auto single = nsp_pool({z}, 4);
  for (std::size_t j = 0; j < 3; ++j) CHECK(single[j] == doctest::Approx(z[j] / 5.0).epsilon(1e-15));
  CHECK_THROWS_AS(nsp_pool(std::vector<std::vector<double>>{}, 4), std::invalid_argument);
  CHECK_THROWS_AS(nsp_pool({z, z, z}, 1), std::invalid_argument);

  // Norm grows as (w+1)/(N+1) |z| for constant tokens.
  const double zn = std::sqrt(14.0);
  double prev = 0.0;
  for (std::size_t w = 1; w <= 5; ++w) {
    const auto p = nsp_pool(std::vector<std::vector<double>>(w, z), 4);
    const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    CHECK(n == doctest::Approx(static_cast<double>(w) / 5.0 * zn).epsilon(1e-14));
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("NSP norm is bounded by the largest token norm") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t order = static_cast<std::size_t>(trial % 6);
    const std::size_t w = 1 + static_cast<std::size_t>(trial) % (order + 1);
    std::vector<std::vector<double>> tokens(w, std::vector<double>(4));
    double biggest = 0.0;
    for (auto& tok : tokens) {
      double n = 0.0;
      for (double& v : tok) {
        v = g(rng);
        n += v * v;
      }
      biggest = std::max(biggest, std::sqrt(n));
    }
    const auto p = nsp_pool(tokens, order);
    double n = 0.0;
    for (double v : p) n += v * v;
    CHECK(std::sqrt(n) <= biggest * (1.0 + 1e-14));
  }
}

TEST_CASE("graph NSP pooling matches the direct version") {
  std::mt19937_64 rng(13);
  const Array tokens = testing::random_array(Shape{2, 3, 4}, rng);
  ad::Tape t;
  const ad::Var pooled = nsp_pool(t.constant(tokens), 5);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<std::vector<double>> tok;
    for (std::size_t s = 0; s < 3; ++s) {
      tok.emplace_back(tokens.data() + (b * 3 + s) * 4, tokens.data() + (b * 3 + s + 1) * 4);
    }
    const auto expect = nsp_pool(tok, 5);
    for (std::size_t j = 0; j < 4; ++j) CHECK(pooled.value()[b * 4 + j] == doctest::Approx(expect[j]).epsilon(1e-14));
  }
}

TEST_CASE("NSP and GAP agree on full windows and differ on partial ones") {
  TransformerIntegrator nsp = small_transformer(Pooling::NSP, 3, 14);
  TransformerIntegrator gap = nsp;
  gap.config.pooling = Pooling::GAP;
  std::mt19937_64 rng(15);
  const Array full = testing::random_array(Shape{4, 3}, rng);
  const auto a = transformer_posterior(nsp, full);
  const auto b = transformer_posterior(gap, full);
  for (std::size_t c = 0; c < 2; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-14));
  const Array partial = testing::random_array(Shape{2, 3}, rng);
  CHECK(transformer_posterior(nsp, partial)[0] != doctest::Approx(transformer_posterior(gap, partial)[0]));
}

TEST_CASE("transformer rejects windows longer than N+1") {
  TransformerIntegrator m = small_transformer(Pooling::NSP, 2, 16);
  CHECK_THROWS_AS(transformer_posterior(m, Array(Shape{4, 3})), std::invalid_argument);
  CHECK_NOTHROW(transformer_posterior(m, Array(Shape{3, 3})));
  CHECK_THROWS_AS(transformer_posterior(m, Array(Shape{2, 5})), std::invalid_argument);
}

TEST_CASE("batched window logits equal per-window posteriors") {
  for (std::size_t order : {0, 1, 3, 5}) {
    CAPTURE(order);
    Integrator lstm = small_lstm(Activation::b2bsqrt(1.0), 20);
    check_window_family(lstm, order, [&](const Array& w) {
      return lstm_posterior(std::get<LSTMIntegrator>(lstm), w);
    });
    for (Pooling pool : {Pooling::NSP, Pooling::GAP, Pooling::OneToken}) {
      for (bool ln : {false, true}) {
        Integrator tf = small_transformer(pool, order, 21, ln);
        check_window_family(tf, order, [&](const Array& w) {
          return transformer_posterior(std::get<TransformerIntegrator>(tf), w);
        });
      }
    }
  }
}

TEST_CASE("window logits read only frames inside the window") {
  std::mt19937_64 rng(22);
  const std::size_t order = 2;
  Array frames = testing::random_array(Shape{1, 7, 3}, rng);
  Integrator tf = small_transformer(Pooling::NSP, order, 23);
  Integrator lstm = small_lstm(Activation::tanh(), 23);
  for (Integrator* m : {&tf, &lstm}) {
    ad::Tape t1;
    const WindowLogits before = window_logits(t1, *m, frames, order, true);
    Array changed = frames;
    for (std::size_t j = 0; j < 3; ++j) changed[6 * 3 + j] += 5.0;  // frame t = 7
    ad::Tape t2;
    const WindowLogits after = window_logits(t2, *m, changed, order, true);
    // Windows ending before t = 7 never see the change.
    for (std::size_t i = 0; i < order; ++i) CHECK(before.prefix[i].value() == after.prefix[i].value());
    for (std::size_t i = 0; i + 1 < before.full.size(); ++i) CHECK(before.full[i].value() == after.full[i].value());
    for (std::size_t i = 0; i < before.shorts.size(); ++i) {
      // Short window at s covers s-N..s-1, so only s = 8 would see frame 7; none exist.
      CHECK(before.shorts[i].value() == after.shorts[i].value());
    }
    CHECK_FALSE(before.full.back().value() == after.full.back().value());
  }
}

TEST_CASE("swapping activation or pooling keeps parameter shapes") {
  LSTMConfig a, b;
  b.cell_activation = Activation::b2bsqrt(1.0);
  b.output_activation = Activation::b2bsqrt(1.0);
  LSTMIntegrator la = make_lstm(a, 1), lb = make_lstm(b, 1);
  auto pa = la.parameters(), pb = lb.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.shape() == pb[i]->value.shape());
  TransformerConfig ta, tb;
  ta.order = tb.order = 3;
  tb.pooling = Pooling::OneToken;
  TransformerIntegrator xa = make_transformer(ta, 1), xb = make_transformer(tb, 1);
  auto qa = xa.parameters(), qb = xb.parameters();
  REQUIRE(qa.size() == qb.size());
  for (std::size_t i = 0; i < qa.size(); ++i) CHECK(qa[i]->value.shape() == qb[i]->value.shape());
}

TEST_CASE("initialization bounds and determinism") {
  LSTMConfig c;
  LSTMIntegrator m = make_lstm(c, 42), again = make_lstm(c, 42), other = make_lstm(c, 43);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.input_size));
  for (double v : m.w_input.value.values()) CHECK(std::abs(v) <= bound);
  for (double v : m.bias.value.values()) CHECK(v == 0.0);
  CHECK(m.w_input.value == again.w_input.value);
  CHECK_FALSE(m.w_input.value == other.w_input.value);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "sdre_ckpt_test";
  std::filesystem::create_directories(dir);
  Integrator saved = small_transformer(Pooling::OneToken, 3, 30);
  save_checkpoint((dir / "m.bin").string(), saved, {{"note", "test"}}, 30);
  Integrator loaded = small_transformer(Pooling::OneToken, 3, 31);
  load_checkpoint((dir / "m.bin").string(), loaded);
  auto a = parameters(saved), b = parameters(loaded);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  Integrator wrong = small_lstm(Activation::tanh(), 1);
  CHECK_THROWS(load_checkpoint((dir / "m.bin").string(), wrong));
  std::filesystem::remove_all(dir);
}
