#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sdre/array.hpp"
#include "sdre/autodiff.hpp"
#include "sdre/window_logits.hpp"

namespace sdre::nets {

struct Activation {
  enum class Kind { Tanh, B2Bsqrt };
  Kind kind = Kind::Tanh;
  double alpha = 1.0;

  static Activation tanh() { return {Kind::Tanh, 1.0}; }
  static Activation b2bsqrt(double alpha = 1.0);
};

// sign(x) (sqrt(alpha + |x|) - sqrt(alpha)); unbounded, odd, slope 1/(2 sqrt(alpha)) at 0.
double b2bsqrt(double x, double alpha);
double b2bsqrt_derivative(double x, double alpha);
ad::Var activate(const ad::Var& x, const Activation& act);

enum class Pooling { NSP, GAP, OneToken };

// ---------------------------------------------------------------- LSTM

struct LSTMConfig {
  std::size_t input_size = 128;
  std::size_t hidden_size = 32;
  std::size_t num_classes = 2;
  Activation cell_activation;    // candidate cell input
  Activation output_activation;  // applied to the cell state
  bool layernorm = false;        // normalize the cell state before the output activation
};

// Gate blocks are laid out [input, forget, candidate, output] along the last axis.
struct LSTMIntegrator {
  LSTMConfig config;
  ad::Parameter w_input;   // [input, 4H]
  ad::Parameter w_hidden;  // [H, 4H]
  ad::Parameter bias;      // [4H]
  ad::Parameter w_head;    // [H, K]
  ad::Parameter b_head;    // [K]

  std::vector<ad::Parameter*> parameters();
};

LSTMIntegrator make_lstm(const LSTMConfig& config, std::uint64_t seed);

struct LSTMState {
  ad::Var h;  // [B, H]
  ad::Var c;  // [B, H]
};

LSTMState zero_state(ad::Tape& tape, const LSTMIntegrator& m, std::size_t batch);
// x_t: [B, input]
LSTMState lstm_step(ad::Tape& tape, LSTMIntegrator& m, const ad::Var& x_t,
                    const LSTMState& state);
// Same step with the input projection x_t W_input already computed.
LSTMState lstm_step_projected(ad::Tape& tape, LSTMIntegrator& m, const ad::Var& projected,
                              const LSTMState& state);
ad::Var lstm_head(ad::Tape& tape, LSTMIntegrator& m, const ad::Var& h);
// Runs the window [w, input] from a zero state and returns the posterior.
std::vector<double> lstm_posterior(LSTMIntegrator& m, const Array& window);

// ---------------------------------------------------------------- Transformer

struct TransformerConfig {
  std::size_t input_size = 128;
  std::size_t model_dim = 64;
  std::size_t num_heads = 4;
  std::size_t ff_dim = 128;
  std::size_t num_blocks = 1;
  std::size_t num_classes = 2;
  std::size_t order = 0;  // Markov order N; windows hold at most N+1 frames
  Pooling pooling = Pooling::NSP;
  bool layernorm = false;
};

struct AttentionBlock {
  ad::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
  ad::Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  ad::Parameter w_ff1, b_ff1, w_ff2, b_ff2;
};

struct TransformerIntegrator {
  TransformerConfig config;
  ad::Parameter w_embed;  // [input, D]
  ad::Parameter b_embed;  // [D]
  std::vector<AttentionBlock> blocks;
  ad::Parameter cls_token;  // [1, D]; read only with one-token pooling
  ad::Parameter w_head;     // [D, K]
  ad::Parameter b_head;     // [K]
  Array positional;         // [N+1, D] sinusoidal, window-relative

  std::vector<ad::Parameter*> parameters();
};

TransformerIntegrator make_transformer(const TransformerConfig& config, std::uint64_t seed);
Array sinusoidal_encoding(std::size_t positions, std::size_t dim);

// tokens: [B, w, D] with w <= N+1 -> [B, D], the token sum divided by N+1.
ad::Var nsp_pool(const ad::Var& tokens, std::size_t order);
std::vector<double> nsp_pool(const std::vector<std::vector<double>>& tokens, std::size_t order);

// Embedded windows [B, w, D] -> mixed tokens [B, w', D] (w' = w+1 with one-token pooling).
ad::Var transformer_mix(ad::Tape& tape, TransformerIntegrator& m, const ad::Var& embedded);
// Embedded windows [B, w, D] -> logits [B, K].
ad::Var transformer_window_logits(ad::Tape& tape, TransformerIntegrator& m,
                                  const ad::Var& embedded);
std::vector<double> transformer_posterior(TransformerIntegrator& m, const Array& window);

// ---------------------------------------------------------------- Both

using Integrator = std::variant<LSTMIntegrator, TransformerIntegrator>;

std::vector<ad::Parameter*> parameters(Integrator& m);
std::size_t num_classes(const Integrator& m);
std::size_t input_size(const Integrator& m);

// frames: [B, T, input]. Logits of every sliding window of order `order`.
WindowLogits window_logits(ad::Tape& tape, Integrator& m, const Array& frames, std::size_t order,
                           bool prefix);

// Checkpoint: JSON header (config echo, seed, parameter names and shapes)
// followed by the float64 payload of each parameter in header order.
void save_checkpoint(const std::string& path, Integrator& m, const nlohmann::json& config_echo,
                     std::uint64_t seed);
void load_checkpoint(const std::string& path, Integrator& m);

}  // namespace sdre::nets
