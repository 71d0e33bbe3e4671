#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "sdre/harness.hpp"

using namespace sdre;
using namespace sdre::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdre_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig c;
  c.model = ModelKind::B2BsqrtTandem;
  c.dim = 6;
  c.horizon = 5;
  c.order = 2;
  c.n_train = 40;
  c.n_val = 20;
  c.n_test = 20;
  c.batch_size = 20;
  c.epochs = 2;
  c.net.lstm_hidden = 4;
  c.seeds = {1, 2};
  c.sprt = true;
  c.thresholds = {0.0, 2.0};
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("per-t MAE examples") {
  LLRMatrixTrajectory truth(2, 1, 3, 0), zero(2, 1, 3, 0);
  for (std::size_t t = 1; t <= 3; ++t) {
    const double s[2] = {0.0, 4.0 * static_cast<double>(t)};
    truth.set_from_scores(t, s);
  }
  CHECK(compute_mae({truth}, {truth}) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(compute_mae({zero}, {truth}) == std::vector<double>{4.0, 8.0, 12.0});
}

TEST_CASE("zero predictor error grows like a^2 t on analytic LLRs") {
  for (double a : {1.0, 2.0}) {
    gauss::GaussianSpec s;
    s.dim = 4;
    s.offset = a;
    s.horizon = 40;
    s.counts = {500, 500};
    s.seed = 2;
    const auto d = gauss::make_dataset(s);
    std::vector<LLRMatrixTrajectory> truth, zero;
    for (const auto& seq : d.sequences) {
      truth.push_back(gauss::true_llr(seq, s));
      zero.emplace_back(2, 1, 40, 0);
    }
    const auto m = compute_mae(zero, truth);
    // E|lambda| with lambda ~ N(a^2 t, 2 a^2 t) is ~a^2 t once the mean dominates.
    CHECK(std::abs(m[39] / 40.0 - a * a) < 0.1 * a * a);
  }
}

TEST_CASE("config JSON round trip and overrides") {
  ExperimentConfig c;
  c.model = ModelKind::TandemformerGAP;
  c.net.layernorm = true;
  c.adam.weight_decay = 1e-3;
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  CHECK(nlohmann::json(back) == j);

  const auto o = with_overrides(c, {"optim.lr=0.01", "gaussian.offset=1", "model=tanh-tandem",
                                    "seeds=[7,8]", "net.layernorm=false"});
  CHECK(o.adam.lr == 0.01);
  CHECK(o.offset == 1.0);
  CHECK(o.model == ModelKind::TanhTandem);
  CHECK(o.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK_FALSE(o.net.layernorm);

  CHECK_THROWS_AS(with_overrides(c, {"optim.lrr=0.1"}), std::invalid_argument);
  CHECK_THROWS_AS(with_overrides(c, {"no-equals-sign"}), std::invalid_argument);
  CHECK_THROWS(with_overrides(c, {"model=lstm"}));
}

TEST_CASE("config validation") {
  ExperimentConfig c;
  c.order = c.horizon;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = ExperimentConfig{};
  c.llre_ratio = 2.0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = ExperimentConfig{};
  c.oracle = true;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);  // oracle needs N = 0
  c.order = 0;
  CHECK_NOTHROW(validate(c));
}

TEST_CASE("every preset lists valid arms") {
  for (const auto& name : preset_names()) {
    const auto arms = preset_arms(name);
    CHECK_FALSE(arms.empty());
    for (const auto& a : arms) {
      CHECK_NOTHROW(validate(a));
      CHECK(a.preset == name);
    }
  }
  CHECK_THROWS_AS(preset_arms("fig9"), std::invalid_argument);
}

TEST_CASE("oracle arm reproduces the analytic LLR") {
  const auto dir = scratch("oracle");
  ExperimentConfig c = preset_arms("oracle-sanity").front();
  c.n_test = 30;
  c.seeds = {1};
  c.out_dir = dir.string();
  const auto r = run_experiment(c);
  CHECK(r.summary["mae_final"]["mean"].get<double>() < 1e-9);
  CHECK(fs::exists(dir / "llr_trajectories.csv"));
  fs::remove_all(dir);
}

TEST_CASE("identical configs write identical files") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto ca = small_config(a), cb = small_config(b);
  run_experiment(ca);
  run_experiment(cb);
  for (const char* f : {"llr_trajectories.csv", "mae_vs_t.csv", "metrics.csv", "sat_curve.csv"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  const auto header = slurp(a / "llr_trajectories.csv").substr(0, 40);
  CHECK(header.rfind("seed,sample_id,t,k,l,true_llr,est_llr\n", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a failing seed is recorded and excluded") {
  const auto dir = scratch("fail");
  auto c = small_config(dir);
  c.model = ModelKind::TandemformerNSP;
  c.net.model_dim = 5;  // not divisible by the head count
  c.net.num_heads = 2;
  c.seeds = {3};
  const auto r = run_experiment(c);
  CHECK(r.summary["seeds_ok"] == 0);
  CHECK(r.summary["failed"].size() == 1);
  CHECK(r.summary["warnings"].size() == 1);
  CHECK(r.summary["mae_final"]["mean"].is_null());
  fs::remove_all(dir);
}
