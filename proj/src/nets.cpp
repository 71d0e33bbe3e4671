#include "sdre/nets.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "sdre/binary_io.hpp"

namespace sdre::nets {

using ad::Parameter;
using ad::Tape;
using ad::Var;

Activation Activation::b2bsqrt(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("B2Bsqrt: alpha must be positive");
  return {Kind::B2Bsqrt, alpha};
}

double b2bsqrt(double x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("b2bsqrt: alpha must be positive");
  const double mag = std::sqrt(alpha + std::abs(x)) - std::sqrt(alpha);
  return x < 0.0 ? -mag : mag;
}

double b2bsqrt_derivative(double x, double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("b2bsqrt: alpha must be positive");
  return 0.5 / std::sqrt(alpha + std::abs(x));
}

Var activate(const Var& x, const Activation& act) {
  return act.kind == Activation::Kind::Tanh ? ad::tanh(x) : ad::b2bsqrt(x, act.alpha);
}

namespace {

Parameter uniform_weight(std::string name, std::size_t rows, std::size_t cols,
                         std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> u(-bound, bound);
  Array a(Shape{rows, cols});
  for (double& v : a.values()) v = u(rng);
  return {std::move(name), std::move(a)};
}

Parameter filled(std::string name, Shape shape, double v) {
  return {std::move(name), Array(std::move(shape), v)};
}

Var linear(Tape& t, const Var& x, Parameter& w, Parameter& b) {
  return ad::add(ad::matmul(x, t.parameter(w)), t.parameter(b));
}

Var affine_layernorm(Tape& t, const Var& x, Parameter& gain, Parameter& bias) {
  return ad::add(ad::multiply(ad::layernorm_last(x), t.parameter(gain)), t.parameter(bias));
}

// Splits [rows, K] window logits ordered (window, batch) into one var per window.
std::vector<Var> split_windows(const Var& logits, std::size_t windows, std::size_t batch) {
  std::vector<Var> out;
  out.reserve(windows);
  for (std::size_t j = 0; j < windows; ++j) out.push_back(ad::slice(logits, 0, j * batch, batch));
  return out;
}

void check_frames(const Array& frames, std::size_t input, std::size_t order) {
  if (frames.rank() != 3 || frames.dim(2) != input) {
    throw std::invalid_argument("window_logits: frames must be [B, T, " + std::to_string(input) +
                                "], got " + shape_str(frames.shape()));
  }
  if (order >= frames.dim(1)) {
    throw std::invalid_argument("window_logits: Markov order " + std::to_string(order) +
                                " must be below the horizon " + std::to_string(frames.dim(1)));
  }
}

}  // namespace

// ---------------------------------------------------------------- LSTM

std::vector<Parameter*> LSTMIntegrator::parameters() {
  return {&w_input, &w_hidden, &bias, &w_head, &b_head};
}

LSTMIntegrator make_lstm(const LSTMConfig& c, std::uint64_t seed) {
  if (c.input_size == 0 || c.hidden_size == 0 || c.num_classes < 2) {
    throw std::invalid_argument("make_lstm: sizes must be positive and K >= 2");
  }
  std::mt19937_64 rng(seed);
  const std::size_t h = c.hidden_size;
  LSTMIntegrator m;
  m.config = c;
  m.w_input = uniform_weight("lstm.w_input", c.input_size, 4 * h, rng);
  m.w_hidden = uniform_weight("lstm.w_hidden", h, 4 * h, rng);
  m.bias = filled("lstm.bias", {4 * h}, 0.0);
  m.w_head = uniform_weight("lstm.w_head", h, c.num_classes, rng);
  m.b_head = filled("lstm.b_head", {c.num_classes}, 0.0);
  return m;
}

LSTMState zero_state(Tape& tape, const LSTMIntegrator& m, std::size_t batch) {
  const Shape s{batch, m.config.hidden_size};
  return {tape.constant(Array(s, 0.0)), tape.constant(Array(s, 0.0))};
}

LSTMState lstm_step_projected(Tape& t, LSTMIntegrator& m, const Var& projected,
                              const LSTMState& state) {
  const std::size_t h = m.config.hidden_size;
  const Shape& ps = projected.shape();
  if (ps.size() != 2 || ps[1] != 4 * h || state.h.shape() != Shape{ps[0], h} ||
      state.c.shape() != Shape{ps[0], h}) {
    throw std::invalid_argument("lstm_step: projected input " + shape_str(ps) + " and state " +
                                shape_str(state.h.shape()) + " do not match hidden size " +
                                std::to_string(h));
  }
  Var z = ad::add(ad::add(projected, ad::matmul(state.h, t.parameter(m.w_hidden))),
                  t.parameter(m.bias));
  Var in_gate = ad::sigmoid(ad::slice(z, 1, 0, h));
  Var forget = ad::sigmoid(ad::slice(z, 1, h, h));
  Var cand = activate(ad::slice(z, 1, 2 * h, h), m.config.cell_activation);
  Var out_gate = ad::sigmoid(ad::slice(z, 1, 3 * h, h));
  Var c = ad::add(ad::multiply(forget, state.c), ad::multiply(in_gate, cand));
  Var cell_out = m.config.layernorm ? ad::layernorm_last(c) : c;
  Var hn = ad::multiply(out_gate, activate(cell_out, m.config.output_activation));
  return {hn, c};
}

LSTMState lstm_step(Tape& t, LSTMIntegrator& m, const Var& x_t, const LSTMState& state) {
  if (x_t.shape().size() != 2 || x_t.shape()[1] != m.config.input_size) {
    throw std::invalid_argument("lstm_step: input " + shape_str(x_t.shape()) +
                                " does not match input size " +
                                std::to_string(m.config.input_size));
  }
  return lstm_step_projected(t, m, ad::matmul(x_t, t.parameter(m.w_input)), state);
}

Var lstm_head(Tape& t, LSTMIntegrator& m, const Var& h) {
  return linear(t, h, m.w_head, m.b_head);
}

std::vector<double> lstm_posterior(LSTMIntegrator& m, const Array& window) {
  if (window.rank() != 2 || window.dim(0) == 0) {
    throw std::invalid_argument("lstm_posterior: window must be a nonempty [w, input] array");
  }
  Tape t;
  LSTMState st = zero_state(t, m, 1);
  const std::size_t d = window.dim(1);
  for (std::size_t s = 0; s < window.dim(0); ++s) {
    Array x(Shape{1, d}, std::vector<double>(window.data() + s * d, window.data() + (s + 1) * d));
    st = lstm_step(t, m, t.constant(std::move(x)), st);
  }
  const Array& p = ad::softmax_last(lstm_head(t, m, st.h)).value();
  return {p.values().begin(), p.values().end()};
}

namespace {

WindowLogits lstm_window_logits(Tape& t, LSTMIntegrator& m, const Array& frames,
                                std::size_t order, bool prefix) {
  check_frames(frames, m.config.input_size, order);
  const std::size_t batch = frames.dim(0), horizon = frames.dim(1);
  const std::size_t windows = horizon - order;
  const std::size_t rows = windows * batch;
  WindowLogits out{batch, m.config.num_classes, order, horizon, {}, {}, {}};

  // Every window reads the same per-frame input projection.
  Var x = t.constant(frames.reshaped({batch * horizon, frames.dim(2)}));
  Var projected = ad::matmul(x, t.parameter(m.w_input));

  LSTMState st = zero_state(t, m, rows);
  std::vector<std::size_t> idx(rows);
  for (std::size_t k = 0; k <= order; ++k) {
    for (std::size_t j = 0; j < windows; ++j) {
      for (std::size_t b = 0; b < batch; ++b) idx[j * batch + b] = b * horizon + j + k;
    }
    st = lstm_step_projected(t, m, ad::gather_rows(projected, idx), st);
    if (k + 1 == order && windows > 1) {
      // After N steps window j holds the short window ending at s = j+N+1.
      Var tail = ad::slice(st.h, 0, batch, rows - batch);
      out.shorts = split_windows(lstm_head(t, m, tail), windows - 1, batch);
    }
    if (prefix && k < order) out.prefix.push_back(lstm_head(t, m, ad::slice(st.h, 0, 0, batch)));
  }
  out.full = split_windows(lstm_head(t, m, st.h), windows, batch);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Transformer

std::vector<Parameter*> TransformerIntegrator::parameters() {
  std::vector<Parameter*> ps{&w_embed, &b_embed};
  for (AttentionBlock& b : blocks) {
    for (Parameter* p : {&b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo, &b.ln1_gain,
                         &b.ln1_bias, &b.ln2_gain, &b.ln2_bias, &b.w_ff1, &b.b_ff1, &b.w_ff2,
                         &b.b_ff2}) {
      ps.push_back(p);
    }
  }
  ps.push_back(&cls_token);
  ps.push_back(&w_head);
  ps.push_back(&b_head);
  return ps;
}

Array sinusoidal_encoding(std::size_t positions, std::size_t dim) {
  Array pe(Shape{positions, dim});
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      pe[p * dim + i] = i % 2 == 0 ? std::sin(static_cast<double>(p) * freq)
                                   : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

TransformerIntegrator make_transformer(const TransformerConfig& c, std::uint64_t seed) {
  if (c.model_dim == 0 || c.num_heads == 0 || c.model_dim % c.num_heads != 0) {
    throw std::invalid_argument("make_transformer: model_dim must be a positive multiple of num_heads");
  }
  if (c.input_size == 0 || c.ff_dim == 0 || c.num_blocks == 0 || c.num_classes < 2) {
    throw std::invalid_argument("make_transformer: sizes must be positive and K >= 2");
  }
  std::mt19937_64 rng(seed);
  const std::size_t d = c.model_dim;
  TransformerIntegrator m;
  m.config = c;
  m.w_embed = uniform_weight("embed.w", c.input_size, d, rng);
  m.b_embed = filled("embed.b", {d}, 0.0);
  for (std::size_t i = 0; i < c.num_blocks; ++i) {
    const std::string p = "block" + std::to_string(i) + ".";
    AttentionBlock b;
    b.wq = uniform_weight(p + "wq", d, d, rng);
    b.bq = filled(p + "bq", {d}, 0.0);
    b.wk = uniform_weight(p + "wk", d, d, rng);
    b.bk = filled(p + "bk", {d}, 0.0);
    b.wv = uniform_weight(p + "wv", d, d, rng);
    b.bv = filled(p + "bv", {d}, 0.0);
    b.wo = uniform_weight(p + "wo", d, d, rng);
    b.bo = filled(p + "bo", {d}, 0.0);
    b.ln1_gain = filled(p + "ln1.gain", {d}, 1.0);
    b.ln1_bias = filled(p + "ln1.bias", {d}, 0.0);
    b.ln2_gain = filled(p + "ln2.gain", {d}, 1.0);
    b.ln2_bias = filled(p + "ln2.bias", {d}, 0.0);
    b.w_ff1 = uniform_weight(p + "ff1.w", d, c.ff_dim, rng);
    b.b_ff1 = filled(p + "ff1.b", {c.ff_dim}, 0.0);
    b.w_ff2 = uniform_weight(p + "ff2.w", c.ff_dim, d, rng);
    b.b_ff2 = filled(p + "ff2.b", {d}, 0.0);
    m.blocks.push_back(std::move(b));
  }
  m.cls_token = uniform_weight("cls_token", d, 1, rng);
  m.cls_token.value = m.cls_token.value.reshaped({1, d});
  m.w_head = uniform_weight("head.w", d, c.num_classes, rng);
  m.b_head = filled("head.b", {c.num_classes}, 0.0);
  m.positional = sinusoidal_encoding(c.order + 1, d);
  return m;
}

Var nsp_pool(const Var& tokens, std::size_t order) {
  const Shape& s = tokens.shape();
  if (s.size() != 3 || s[1] == 0) {
    throw std::invalid_argument("nsp_pool: tokens must be [B, w >= 1, D], got " + shape_str(s));
  }
  if (s[1] > order + 1) {
    throw std::invalid_argument("nsp_pool: " + std::to_string(s[1]) + " tokens exceed N+1 = " +
                                std::to_string(order + 1));
  }
  return ad::scale(ad::sum_axis(tokens, 1), 1.0 / static_cast<double>(order + 1));
}

std::vector<double> nsp_pool(const std::vector<std::vector<double>>& tokens, std::size_t order) {
  if (tokens.empty()) throw std::invalid_argument("nsp_pool: empty token list");
  if (tokens.size() > order + 1) throw std::invalid_argument("nsp_pool: more than N+1 tokens");
  std::vector<double> out(tokens.front().size(), 0.0);
  for (const auto& z : tokens) {
    if (z.size() != out.size()) throw std::invalid_argument("nsp_pool: ragged tokens");
    for (std::size_t i = 0; i < z.size(); ++i) out[i] += z[i];
  }
  for (double& v : out) v /= static_cast<double>(order + 1);
  return out;
}

namespace {

Var attention_block(Tape& t, AttentionBlock& b, const Var& x, const TransformerConfig& c) {
  const std::size_t dh = c.model_dim / c.num_heads;
  Var u = c.layernorm ? affine_layernorm(t, x, b.ln1_gain, b.ln1_bias) : x;
  Var q = linear(t, u, b.wq, b.bq);
  Var k = linear(t, u, b.wk, b.bk);
  Var v = linear(t, u, b.wv, b.bv);
  std::vector<Var> heads;
  for (std::size_t h = 0; h < c.num_heads; ++h) {
    Var qh = ad::slice(q, 2, h * dh, dh);
    Var kh = ad::slice(k, 2, h * dh, dh);
    Var vh = ad::slice(v, 2, h * dh, dh);
    Var scores = ad::scale(ad::matmul(qh, kh, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    heads.push_back(ad::matmul(ad::softmax_last(scores), vh));
  }
  Var mixed = heads.size() == 1 ? heads.front() : ad::concat(heads, 2);
  Var y = ad::add(x, linear(t, mixed, b.wo, b.bo));
  Var w = c.layernorm ? affine_layernorm(t, y, b.ln2_gain, b.ln2_bias) : y;
  Var ff = linear(t, ad::relu(linear(t, w, b.w_ff1, b.b_ff1)), b.w_ff2, b.b_ff2);
  return ad::add(y, ff);
}

}  // namespace

Var transformer_mix(Tape& t, TransformerIntegrator& m, const Var& embedded) {
  const TransformerConfig& c = m.config;
  const Shape& s = embedded.shape();
  if (s.size() != 3 || s[2] != c.model_dim || s[1] == 0) {
    throw std::invalid_argument("transformer: embedded window must be [B, w >= 1, " +
                                std::to_string(c.model_dim) + "], got " + shape_str(s));
  }
  if (s[1] > c.order + 1) {
    throw std::invalid_argument("transformer: window of " + std::to_string(s[1]) +
                                " frames is longer than N+1 = " + std::to_string(c.order + 1));
  }
  const std::size_t w = s[1];
  Array pe(Shape{w, c.model_dim},
           std::vector<double>(m.positional.data(), m.positional.data() + w * c.model_dim));
  Var x = ad::add(embedded, t.constant(std::move(pe)));
  if (c.pooling == Pooling::OneToken) {
    Var cls = ad::add(t.constant(Array(Shape{s[0], 1, c.model_dim}, 0.0)), t.parameter(m.cls_token));
    x = ad::concat({cls, x}, 1);
  }
  for (AttentionBlock& b : m.blocks) x = attention_block(t, b, x, c);
  return x;
}

Var transformer_window_logits(Tape& t, TransformerIntegrator& m, const Var& embedded) {
  const TransformerConfig& c = m.config;
  Var x = transformer_mix(t, m, embedded);
  const std::size_t batch = x.shape()[0];
  Var pooled;
  switch (c.pooling) {
    case Pooling::NSP:
      pooled = nsp_pool(x, c.order);
      break;
    case Pooling::GAP:
      pooled = ad::scale(ad::sum_axis(x, 1), 1.0 / static_cast<double>(x.shape()[1]));
      break;
    case Pooling::OneToken:
      pooled = ad::reshape(ad::slice(x, 1, 0, 1), {batch, c.model_dim});
      break;
  }
  return linear(t, pooled, m.w_head, m.b_head);
}

std::vector<double> transformer_posterior(TransformerIntegrator& m, const Array& window) {
  if (window.rank() != 2 || window.dim(0) == 0 || window.dim(1) != m.config.input_size) {
    throw std::invalid_argument("transformer_posterior: window must be a nonempty [w, " +
                                std::to_string(m.config.input_size) + "] array");
  }
  Tape t;
  Var e = linear(t, t.constant(window), m.w_embed, m.b_embed);
  Var logits = transformer_window_logits(t, m, ad::reshape(e, {1, window.dim(0), m.config.model_dim}));
  const Array& p = ad::softmax_last(logits).value();
  return {p.values().begin(), p.values().end()};
}

namespace {

WindowLogits transformer_window_family(Tape& t, TransformerIntegrator& m, const Array& frames,
                                       std::size_t order, bool prefix) {
  if (order != m.config.order) {
    throw std::invalid_argument("window_logits: transformer was built for N=" +
                                std::to_string(m.config.order) + ", asked for N=" +
                                std::to_string(order));
  }
  check_frames(frames, m.config.input_size, order);
  const std::size_t batch = frames.dim(0), horizon = frames.dim(1), d = m.config.model_dim;
  WindowLogits out{batch, m.config.num_classes, order, horizon, {}, {}, {}};

  // Embeddings are per frame, so every window shares them.
  Var x = t.constant(frames.reshaped({batch * horizon, frames.dim(2)}));
  Var embedded = linear(t, x, m.w_embed, m.b_embed);

  // Windows of `width` frames starting at 0-based offsets first..first+count-1.
  auto family = [&](std::size_t width, std::size_t first, std::size_t count) {
    std::vector<std::size_t> idx;
    idx.reserve(count * batch * width);
    for (std::size_t j = 0; j < count; ++j) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < width; ++k) idx.push_back(b * horizon + first + j + k);
      }
    }
    Var windows = ad::reshape(ad::gather_rows(embedded, idx), {count * batch, width, d});
    return split_windows(transformer_window_logits(t, m, windows), count, batch);
  };

  const std::size_t windows = horizon - order;
  if (prefix) {
    for (std::size_t w = 1; w <= order; ++w) out.prefix.push_back(family(w, 0, 1).front());
  }
  out.full = family(order + 1, 0, windows);
  if (order > 0 && windows > 1) out.shorts = family(order, 1, windows - 1);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Both

std::vector<Parameter*> parameters(Integrator& m) {
  return std::visit([](auto& net) { return net.parameters(); }, m);
}

std::size_t num_classes(const Integrator& m) {
  return std::visit([](const auto& net) { return net.config.num_classes; }, m);
}

std::size_t input_size(const Integrator& m) {
  return std::visit([](const auto& net) { return net.config.input_size; }, m);
}

WindowLogits window_logits(Tape& tape, Integrator& m, const Array& frames, std::size_t order,
                           bool prefix) {
  if (auto* lstm = std::get_if<LSTMIntegrator>(&m)) {
    return lstm_window_logits(tape, *lstm, frames, order, prefix);
  }
  return transformer_window_family(tape, std::get<TransformerIntegrator>(m), frames, order, prefix);
}

void save_checkpoint(const std::string& path, Integrator& m, const nlohmann::json& config_echo,
                     std::uint64_t seed) {
  nlohmann::json header;
  header["kind"] = "checkpoint";
  header["config"] = config_echo;
  header["seed"] = seed;
  header["parameters"] = nlohmann::json::array();
  std::vector<double> payload;
  for (Parameter* p : parameters(m)) {
    header["parameters"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
    payload.insert(payload.end(), p->value.values().begin(), p->value.values().end());
  }
  io::write_container(path, header, payload);
}

void load_checkpoint(const std::string& path, Integrator& m) {
  io::Container c = io::read_container(path);
  if (c.header.value("kind", "") != "checkpoint") {
    throw std::runtime_error("'" + path + "' is not a checkpoint");
  }
  const auto& listed = c.header.at("parameters");
  std::vector<Parameter*> ps = parameters(m);
  if (listed.size() != ps.size()) {
    throw std::runtime_error("'" + path + "': parameter count does not match the model");
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto name = listed[i].at("name").get<std::string>();
    const auto shape = listed[i].at("shape").get<Shape>();
    if (name != ps[i]->name || shape != ps[i]->value.shape()) {
      throw std::runtime_error("'" + path + "': parameter " + name + " " + shape_str(shape) +
                               " does not match model parameter " + ps[i]->name + " " +
                               shape_str(ps[i]->value.shape()));
    }
    const std::size_t n = numel(shape);
    if (offset + n > c.payload.size()) throw std::runtime_error("'" + path + "': truncated payload");
    std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(offset), n, ps[i]->value.data());
    offset += n;
  }
  if (offset != c.payload.size()) throw std::runtime_error("'" + path + "': trailing payload");
}

}  // namespace sdre::nets
