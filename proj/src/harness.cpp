#include "sdre/harness.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "sdre/stats.hpp"
#include "sdre/tandem.hpp"

namespace sdre::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::pair<ModelKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ModelKind, std::string>> names{
      {ModelKind::B2BsqrtTandem, "b2bsqrt-tandem"},
      {ModelKind::TanhTandem, "tanh-tandem"},
      {ModelKind::TandemformerNSP, "tandemformer-nsp"},
      {ModelKind::TandemformerGAP, "tandemformer-gap"},
      {ModelKind::TandemformerOneToken, "tandemformer-onetoken"},
      {ModelKind::OblivionLSEL, "oblivion-lsel"},
  };
  return names;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json mean_sem(const std::vector<double>& xs) {
  if (xs.empty()) return json{{"mean", nullptr}, {"sem", nullptr}, {"per_seed", json::array()}};
  return json{{"mean", stats::mean(xs)}, {"sem", stats::sem(xs)}, {"per_seed", xs}};
}

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  throw std::invalid_argument("unknown model kind");
}

ModelKind parse_model_kind(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  throw std::invalid_argument("unknown model kind '" + name + "'");
}

bool is_transformer(ModelKind kind) {
  return kind == ModelKind::TandemformerNSP || kind == ModelKind::TandemformerGAP ||
         kind == ModelKind::TandemformerOneToken;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{
      {"preset", c.preset},
      {"arm", c.arm},
      {"model", to_string(c.model)},
      {"gaussian", {{"dim", c.dim}, {"offset", c.offset}, {"num_classes", c.num_classes},
                    {"horizon", c.horizon}}},
      {"data", {{"train", c.n_train}, {"val", c.n_val}, {"test", c.n_test}}},
      {"order", c.order},
      {"prefix_windows", c.prefix_windows},
      {"llre_ratio", c.llre_ratio},
      {"optim", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
                 {"eps", c.adam.eps}, {"weight_decay", c.adam.weight_decay},
                 {"batch_size", c.batch_size}, {"epochs", c.epochs},
                 {"total_steps", c.total_steps}}},
      {"net", {{"lstm_hidden", c.net.lstm_hidden}, {"model_dim", c.net.model_dim},
               {"num_heads", c.net.num_heads}, {"ff_dim", c.net.ff_dim},
               {"num_blocks", c.net.num_blocks}, {"layernorm", c.net.layernorm},
               {"alpha", c.net.alpha}}},
      {"seeds", c.seeds},
      {"out", c.out_dir},
      {"oracle", c.oracle},
      {"sprt", {{"enabled", c.sprt}, {"thresholds", c.thresholds}}},
      {"parallel_seeds", c.parallel_seeds},
  };
}

void from_json(const json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c.preset = j.value("preset", d.preset);
  c.arm = j.value("arm", d.arm);
  c.model = parse_model_kind(j.value("model", to_string(d.model)));
  const json g = j.value("gaussian", json::object());
  c.dim = g.value("dim", d.dim);
  c.offset = g.value("offset", d.offset);
  c.num_classes = g.value("num_classes", d.num_classes);
  c.horizon = g.value("horizon", d.horizon);
  const json data = j.value("data", json::object());
  c.n_train = data.value("train", d.n_train);
  c.n_val = data.value("val", d.n_val);
  c.n_test = data.value("test", d.n_test);
  c.order = j.value("order", d.order);
  c.prefix_windows = j.value("prefix_windows", d.prefix_windows);
  c.llre_ratio = j.value("llre_ratio", d.llre_ratio);
  const json o = j.value("optim", json::object());
  c.adam.lr = o.value("lr", d.adam.lr);
  c.adam.beta1 = o.value("beta1", d.adam.beta1);
  c.adam.beta2 = o.value("beta2", d.adam.beta2);
  c.adam.eps = o.value("eps", d.adam.eps);
  c.adam.weight_decay = o.value("weight_decay", d.adam.weight_decay);
  c.batch_size = o.value("batch_size", d.batch_size);
  c.epochs = o.value("epochs", d.epochs);
  c.total_steps = o.value("total_steps", d.total_steps);
  const json n = j.value("net", json::object());
  c.net.lstm_hidden = n.value("lstm_hidden", d.net.lstm_hidden);
  c.net.model_dim = n.value("model_dim", d.net.model_dim);
  c.net.num_heads = n.value("num_heads", d.net.num_heads);
  c.net.ff_dim = n.value("ff_dim", d.net.ff_dim);
  c.net.num_blocks = n.value("num_blocks", d.net.num_blocks);
  c.net.layernorm = n.value("layernorm", d.net.layernorm);
  c.net.alpha = n.value("alpha", d.net.alpha);
  c.seeds = j.value("seeds", d.seeds);
  c.out_dir = j.value("out", d.out_dir);
  c.oracle = j.value("oracle", d.oracle);
  const json s = j.value("sprt", json::object());
  c.sprt = s.value("enabled", d.sprt);
  c.thresholds = s.value("thresholds", d.thresholds);
  c.parallel_seeds = j.value("parallel_seeds", d.parallel_seeds);
}

void validate(const ExperimentConfig& c) {
  if (c.order >= c.horizon) {
    throw std::invalid_argument("config: order " + std::to_string(c.order) +
                                " must be below the horizon " + std::to_string(c.horizon));
  }
  if (c.seeds.empty()) throw std::invalid_argument("config: no seeds");
  if (!(c.llre_ratio >= 0.0 && c.llre_ratio <= 1.0)) {
    throw std::invalid_argument("config: llre_ratio outside [0, 1]");
  }
  if (c.oracle && c.order != 0) throw std::invalid_argument("config: oracle runs need order 0");
  if (c.n_test == 0) throw std::invalid_argument("config: empty test split");
  if (!c.oracle && (c.n_train == 0 || c.n_val == 0)) {
    throw std::invalid_argument("config: empty train or validation split");
  }
  if (c.sprt && c.thresholds.empty()) throw std::invalid_argument("config: empty threshold sweep");
  gauss::validate(gaussian_spec(c, 0));
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("override key '" + key + "' has an empty segment");
    if (dot == std::string::npos) {
      if (!node->is_object() || !node->contains(part)) {
        throw std::invalid_argument("override key '" + key + "' does not name a config field");
      }
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) {
      throw std::invalid_argument("override key '" + key + "' does not name a config field");
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentConfig with_overrides(const ExperimentConfig& c, const std::vector<std::string>& overrides) {
  json j = c;
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig out = j.get<ExperimentConfig>();
  validate(out);
  return out;
}

gauss::GaussianSpec gaussian_spec(const ExperimentConfig& c, std::uint64_t seed) {
  gauss::GaussianSpec s;
  s.dim = c.dim;
  s.offset = c.offset;
  s.num_classes = c.num_classes;
  s.horizon = c.horizon;
  s.counts = gauss::balanced_counts(c.n_test, c.num_classes);
  s.seed = seed;
  return s;
}

nets::Integrator make_model(const ExperimentConfig& c, std::uint64_t seed) {
  const std::uint64_t init_seed = mix(seed ^ 0x1a2b3c4dULL);
  if (is_transformer(c.model)) {
    nets::TransformerConfig t;
    t.input_size = c.dim;
    t.model_dim = c.net.model_dim;
    t.num_heads = c.net.num_heads;
    t.ff_dim = c.net.ff_dim;
    t.num_blocks = c.net.num_blocks;
    t.num_classes = c.num_classes;
    t.order = c.order;
    t.layernorm = c.net.layernorm;
    t.pooling = c.model == ModelKind::TandemformerNSP   ? nets::Pooling::NSP
                : c.model == ModelKind::TandemformerGAP ? nets::Pooling::GAP
                                                        : nets::Pooling::OneToken;
    return nets::make_transformer(t, init_seed);
  }
  nets::LSTMConfig l;
  l.input_size = c.dim;
  l.hidden_size = c.net.lstm_hidden;
  l.num_classes = c.num_classes;
  l.layernorm = c.net.layernorm;
  const auto act = c.model == ModelKind::B2BsqrtTandem ? nets::Activation::b2bsqrt(c.net.alpha)
                                                       : nets::Activation::tanh();
  l.cell_activation = act;
  l.output_activation = act;
  return nets::make_lstm(l, init_seed);
}

optim::TrainConfig train_config(const ExperimentConfig& c, std::uint64_t seed) {
  optim::TrainConfig t;
  t.order = c.order;
  t.prefix_windows = c.prefix_windows;
  t.formula = c.model == ModelKind::OblivionLSEL ? tandem::Formula::Oblivion : tandem::Formula::Tandem;
  t.llre_ratio = c.llre_ratio;
  t.adam = c.adam;
  t.batch_size = c.batch_size;
  t.epochs = c.epochs;
  t.total_steps = c.total_steps;
  t.seed = seed;
  return t;
}

std::vector<double> compute_mae(const std::vector<LLRMatrixTrajectory>& est,
                                const std::vector<LLRMatrixTrajectory>& truth) {
  if (est.empty() || est.size() != truth.size()) {
    throw std::invalid_argument("compute_mae: mismatched or empty trajectory sets");
  }
  const std::size_t first = est.front().first_t();
  const std::size_t last = est.front().horizon();
  const std::size_t k = est.front().num_classes();
  for (std::size_t i = 0; i < est.size(); ++i) {
    for (const auto* tr : {&est[i], &truth[i]}) {
      if (tr->first_t() != first || tr->horizon() != last || tr->num_classes() != k) {
        throw std::invalid_argument("compute_mae: trajectory shape mismatch at sample " +
                                    std::to_string(i));
      }
    }
  }
  std::vector<double> mae;
  const double pairs = static_cast<double>(k * (k - 1) / 2);
  for (std::size_t t = first; t <= last; ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) sum += std::abs(est[i].at(t, a, b) - truth[i].at(t, a, b));
      }
    }
    mae.push_back(sum / (static_cast<double>(est.size()) * pairs));
  }
  return mae;
}

namespace {

double trajectory_slope(const LLRMatrixTrajectory& tr, std::size_t y) {
  const std::size_t k = tr.num_classes();
  std::vector<double> ts, vs;
  for (std::size_t t = tr.first_t(); t <= tr.horizon(); ++t) {
    double v = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      if (l != y) v += tr.at(t, y, l);
    }
    ts.push_back(static_cast<double>(t));
    vs.push_back(v / static_cast<double>(k - 1));
  }
  if (ts.size() < 2) return 0.0;
  const double mt = stats::mean(ts), mv = stats::mean(vs);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    sxy += (ts[i] - mt) * (vs[i] - mv);
    sxx += (ts[i] - mt) * (ts[i] - mt);
  }
  return sxy / sxx;
}

void summarize(const ExperimentConfig& c, const gauss::Dataset& test,
               const std::vector<LLRMatrixTrajectory>& est,
               const std::vector<LLRMatrixTrajectory>& truth, SeedResult& r) {
  const std::size_t k = c.num_classes;
  r.first_t = est.front().first_t();
  r.mae_vs_t = compute_mae(est, truth);
  r.mae_final = r.mae_vs_t.back();
  const std::size_t t_final = c.horizon;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      PairError p{a, b, 0.0, 0.0};
      for (std::size_t i = 0; i < est.size(); ++i) {
        p.mae += std::abs(est[i].at(t_final, a, b) - truth[i].at(t_final, a, b));
        p.zero_mae += std::abs(truth[i].at(t_final, a, b));
      }
      p.mae /= static_cast<double>(est.size());
      p.zero_mae /= static_cast<double>(est.size());
      r.pairs.push_back(p);
    }
  }
  std::vector<std::size_t> labels;
  double slope_sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const std::size_t y = test.sequences[i].label;
    labels.push_back(y);
    bool correct = true;
    for (std::size_t l = 0; l < k; ++l) {
      if (l != y && !(est[i].at(t_final, y, l) > 0.0)) correct = false;
    }
    if (!correct) continue;
    ++r.correct;
    slope_sum += trajectory_slope(est[i], y);
  }
  r.mean_slope = r.correct == 0 ? 0.0 : slope_sum / static_cast<double>(r.correct);
  if (c.sprt) {
    const sprt::LabeledTrajectories data{est, labels};
    for (double th : c.thresholds) r.sat.push_back(sprt::sat_point(data, th));
  }
  std::string rows;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const std::string prefix =
        std::to_string(r.seed) + "," + std::to_string(test.sequences[i].id) + ",";
    for (std::size_t t = est[i].first_t(); t <= est[i].horizon(); ++t) {
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          rows += prefix + std::to_string(t) + "," + std::to_string(a) + "," + std::to_string(b) +
                  "," + format_double(truth[i].at(t, a, b)) + "," +
                  format_double(est[i].at(t, a, b)) + "\n";
        }
      }
    }
  }
  r.trajectory_rows = std::move(rows);
}

}  // namespace

SeedResult run_seed(const ExperimentConfig& c, std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  const gauss::GaussianSpec base = gaussian_spec(c, seed);
  std::vector<LLRMatrixTrajectory> est, truth;
  if (c.oracle) {
    const gauss::Dataset test = gauss::make_splits(base, 0, 0, c.n_test).test;
    const std::vector<double> priors(c.num_classes, 1.0 / static_cast<double>(c.num_classes));
    for (const auto& seq : test.sequences) {
      tandem::PosteriorTrajectoryPair p;
      p.order = 0;
      p.horizon = c.horizon;
      p.priors = priors;
      for (std::size_t s = 1; s <= c.horizon; ++s) {
        Array window(Shape{1, c.dim}, std::vector<double>(seq.frame(s).begin(), seq.frame(s).end()));
        p.full.push_back(gauss::true_posterior(window, test.spec, priors));
      }
      est.push_back(tandem::tandem_llr(p));
      truth.push_back(gauss::true_llr(seq, test.spec));
    }
    summarize(c, test, est, truth, r);
    r.ok = true;
    return r;
  }
  const gauss::Splits splits = gauss::make_splits(base, c.n_train, c.n_val, c.n_test);
  const optim::TrainConfig tc = train_config(c, seed);
  optim::TrainResult trained = optim::train(make_model(c, seed), splits.train, splits.val, tc);
  optim::EvalResult eval = optim::evaluate(trained.model, splits.test, tc, true);
  r.best_epoch = trained.best_epoch;
  r.mce_in_update_path = trained.mce_in_update_path;
  r.log = std::move(trained.log);
  summarize(c, splits.test, eval.estimated, eval.truth, r);
  r.ok = true;
  return r;
}

ArmResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  ArmResult arm{config, std::vector<SeedResult>(config.seeds.size()), json::object()};
  const fs::path dir(config.out_dir);
  fs::create_directories(dir);

  const int n = static_cast<int>(config.seeds.size());
#pragma omp parallel for schedule(dynamic, 1) if (config.parallel_seeds && n > 1)
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = config.seeds[static_cast<std::size_t>(i)];
    const auto start = std::chrono::steady_clock::now();
    SeedResult r;
    try {
      r = run_seed(config, seed);
    } catch (const std::exception& e) {
      r = SeedResult{};
      r.seed = seed;
      r.ok = false;
      r.error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
#pragma omp critical(sdre_progress)
    {
      std::cerr << "[" << config.preset << "/" << config.arm << "] seed " << seed << ": "
                << (r.ok ? "final-t MAE " + format_double(r.mae_final) : "FAILED: " + r.error)
                << " (" << format_double(secs) << " s)\n";
    }
    arm.seeds[static_cast<std::size_t>(i)] = std::move(r);
  }

  std::string traj = "seed,sample_id,t,k,l,true_llr,est_llr\n";
  std::string mae = "seed,t,mae\n";
  std::string metrics = "seed,epoch,split,lsel,mce,total_loss,mae_final_t\n";
  std::string sat = "seed,threshold,mean_hitting_time,mean_per_class_error\n";
  std::vector<double> finals, slopes;
  json failed = json::array();
  json warnings = json::array();
  std::vector<std::vector<double>> pair_mae(config.num_classes * config.num_classes),
      pair_zero(config.num_classes * config.num_classes);
  std::vector<std::vector<double>> mae_by_t;
  std::size_t first_t = 1;
  for (const auto& r : arm.seeds) {
    if (!r.ok) {
      failed.push_back({{"seed", r.seed}, {"error", r.error}});
      warnings.push_back("seed " + std::to_string(r.seed) + " aborted and was excluded: " + r.error);
      continue;
    }
    traj += r.trajectory_rows;
    for (std::size_t i = 0; i < r.mae_vs_t.size(); ++i) {
      mae += std::to_string(r.seed) + "," + std::to_string(r.first_t + i) + "," +
             format_double(r.mae_vs_t[i]) + "\n";
    }
    for (const auto& e : r.log) {
      metrics += std::to_string(e.seed) + "," + std::to_string(e.epoch) + "," + e.split + "," +
                 format_double(e.lsel) + "," + format_double(e.mce) + "," +
                 format_double(e.total_loss) + "," + format_double(e.mae_final_t) + "\n";
    }
    for (const auto& p : r.sat) {
      sat += std::to_string(r.seed) + "," + format_double(p.threshold) + "," +
             format_double(p.mean_hitting_time) + "," + format_double(p.mean_per_class_error) + "\n";
    }
    finals.push_back(r.mae_final);
    slopes.push_back(r.mean_slope);
    for (const auto& p : r.pairs) {
      pair_mae[p.k * config.num_classes + p.l].push_back(p.mae);
      pair_zero[p.k * config.num_classes + p.l].push_back(p.zero_mae);
    }
    first_t = r.first_t;
    if (mae_by_t.empty()) mae_by_t.resize(r.mae_vs_t.size());
    for (std::size_t i = 0; i < r.mae_vs_t.size(); ++i) mae_by_t[i].push_back(r.mae_vs_t[i]);
  }
  write_file(dir / "llr_trajectories.csv", traj);
  write_file(dir / "mae_vs_t.csv", mae);
  if (!config.oracle) write_file(dir / "metrics.csv", metrics);
  if (config.sprt) write_file(dir / "sat_curve.csv", sat);

  json pairs = json::array();
  for (std::size_t a = 0; a < config.num_classes; ++a) {
    for (std::size_t b = a + 1; b < config.num_classes; ++b) {
      json p = {{"k", a}, {"l", b}};
      p["mae_final"] = mean_sem(pair_mae[a * config.num_classes + b]);
      p["zero_predictor_mae_final"] = mean_sem(pair_zero[a * config.num_classes + b]);
      pairs.push_back(p);
    }
  }
  json by_t = json::array();
  for (std::size_t i = 0; i < mae_by_t.size(); ++i) {
    json e = mean_sem(mae_by_t[i]);
    e.erase("per_seed");
    e["t"] = first_t + i;
    by_t.push_back(e);
  }
  json sat_summary = json::array();
  if (config.sprt) {
    std::vector<std::vector<double>> times(config.thresholds.size()), errs(config.thresholds.size());
    for (const auto& r : arm.seeds) {
      for (std::size_t i = 0; i < r.sat.size(); ++i) {
        times[i].push_back(r.sat[i].mean_hitting_time);
        errs[i].push_back(r.sat[i].mean_per_class_error);
      }
    }
    for (std::size_t i = 0; i < config.thresholds.size(); ++i) {
      if (times[i].empty()) continue;
      sat_summary.push_back({{"threshold", config.thresholds[i]},
                             {"mean_hitting_time", stats::mean(times[i])},
                             {"sem_hitting_time", stats::sem(times[i])},
                             {"mean_per_class_error", stats::mean(errs[i])},
                             {"sem_per_class_error", stats::sem(errs[i])}});
    }
  }
  std::uint64_t mce_calls = 0;
  for (const auto& r : arm.seeds) mce_calls += r.mce_in_update_path;

  arm.summary = json{
      {"preset", config.preset},
      {"arm", config.arm},
      {"model", config.oracle ? "oracle" : to_string(config.model)},
      {"config", config},
      {"seeds_ok", finals.size()},
      {"failed", failed},
      {"warnings", warnings},
      {"mae_final", mean_sem(finals)},
      {"true_llr_scale", config.offset * config.offset * static_cast<double>(config.horizon)},
      {"pairs", pairs},
      {"mae_vs_t", by_t},
      {"mean_slope_correct", mean_sem(slopes)},
      {"mce_in_update_path", mce_calls},
  };
  if (config.sprt) arm.summary["sat_curve"] = sat_summary;
  write_file(dir / "summary.json", arm.summary.dump(2) + "\n");
  return arm;
}

// ---------------------------------------------------------------- presets

std::vector<std::string> preset_names() {
  return {"oracle-sanity",  "fig1-trajectories", "fig2-weightdecay", "fig2-layernorm",
          "fig2-datasize",  "fig2-pooling",      "fig2-loss",        "appendix-3class",
          "sat-gaussian"};
}

namespace {

const std::vector<ModelKind> kAllKinds{ModelKind::B2BsqrtTandem,        ModelKind::TanhTandem,
                                       ModelKind::TandemformerNSP,      ModelKind::TandemformerGAP,
                                       ModelKind::TandemformerOneToken, ModelKind::OblivionLSEL};

ExperimentConfig arm_of(const std::string& preset, const std::string& name, ModelKind kind) {
  ExperimentConfig c;
  c.preset = preset;
  c.arm = name;
  c.model = kind;
  return c;
}

std::string wd_label(double wd) {
  if (wd == 0.0) return "0";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%g", wd);
  return buf;
}

}  // namespace

std::vector<ExperimentConfig> preset_arms(const std::string& preset) {
  std::vector<ExperimentConfig> arms;
  if (preset == "oracle-sanity") {
    for (double a : {1.0, 2.0}) {
      ExperimentConfig c = arm_of(preset, a == 1.0 ? "a1" : "a2", ModelKind::B2BsqrtTandem);
      c.oracle = true;
      c.offset = a;
      c.order = 0;
      c.n_test = 100;
      arms.push_back(c);
    }
  } else if (preset == "fig1-trajectories") {
    for (ModelKind k : {ModelKind::TanhTandem, ModelKind::B2BsqrtTandem}) {
      for (double a : {1.0, 2.0}) {
        ExperimentConfig c = arm_of(preset, to_string(k) + (a == 1.0 ? "-a1" : "-a2"), k);
        c.offset = a;
        arms.push_back(c);
      }
    }
  } else if (preset == "fig2-loss") {
    for (ModelKind k : kAllKinds) arms.push_back(arm_of(preset, to_string(k), k));
  } else if (preset == "fig2-pooling") {
    for (ModelKind k : {ModelKind::TandemformerNSP, ModelKind::TandemformerGAP,
                        ModelKind::TandemformerOneToken}) {
      arms.push_back(arm_of(preset, to_string(k), k));
    }
  } else if (preset == "fig2-weightdecay") {
    for (ModelKind k : kAllKinds) {
      for (double wd : {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1}) {
        ExperimentConfig c = arm_of(preset, to_string(k) + "-wd" + wd_label(wd), k);
        c.adam.weight_decay = wd;
        // 36 arms x 5 seeds: a smaller split keeps the sweep within a few CPU hours.
        c.n_train = 2000;
        c.n_val = 500;
        arms.push_back(c);
      }
    }
  } else if (preset == "fig2-layernorm") {
    for (ModelKind k : kAllKinds) {
      ExperimentConfig c = arm_of(preset, to_string(k) + "-ln", k);
      c.net.layernorm = true;
      arms.push_back(c);
    }
  } else if (preset == "fig2-datasize") {
    for (std::size_t n : {1000, 8000, 64000}) {
      ExperimentConfig c =
          arm_of(preset, "tanh-tandem-" + std::to_string(n / 1000) + "k", ModelKind::TanhTandem);
      c.n_train = n;
      c.total_steps = 1600;
      c.parallel_seeds = n < 64000;
      arms.push_back(c);
    }
  } else if (preset == "appendix-3class") {
    for (ModelKind k : {ModelKind::B2BsqrtTandem, ModelKind::TandemformerNSP}) {
      ExperimentConfig c = arm_of(preset, to_string(k), k);
      c.num_classes = 3;
      arms.push_back(c);
    }
  } else if (preset == "sat-gaussian") {
    ExperimentConfig oracle = arm_of(preset, "oracle", ModelKind::B2BsqrtTandem);
    oracle.oracle = true;
    oracle.order = 0;
    oracle.sprt = true;
    arms.push_back(oracle);
    for (ModelKind k : {ModelKind::B2BsqrtTandem, ModelKind::TanhTandem, ModelKind::OblivionLSEL}) {
      ExperimentConfig c = arm_of(preset, to_string(k), k);
      c.sprt = true;
      arms.push_back(c);
    }
  } else {
    throw std::invalid_argument("unknown preset '" + preset + "'");
  }
  return arms;
}

json run_preset(const std::string& preset, const RunOptions& options) {
  auto arms = preset_arms(preset);
  if (!options.arms.empty()) {
    std::vector<ExperimentConfig> selected;
    for (const auto& name : options.arms) {
      bool found = false;
      for (const auto& a : arms) {
        if (a.arm == name) {
          selected.push_back(a);
          found = true;
        }
      }
      if (!found) throw std::invalid_argument("preset '" + preset + "' has no arm '" + name + "'");
    }
    arms = std::move(selected);
  }
  json summary = {{"preset", preset}, {"arms", json::array()}};
  for (auto arm : arms) {
    arm.out_dir = (fs::path(options.out_dir) / arm.arm).string();
    if (!options.seeds.empty()) arm.seeds = options.seeds;
    arm = with_overrides(arm, options.overrides);
    summary["arms"].push_back(run_experiment(arm).summary);
  }
  fs::create_directories(options.out_dir);
  write_file(fs::path(options.out_dir) / "summary.json", summary.dump(2) + "\n");
  return summary;
}

}  // namespace sdre::harness
