#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdre/harness.hpp"
#include "sdre/verify.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sdrelab: sequential density ratio estimation experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment preset");
  std::string preset;
  std::vector<std::uint64_t> seeds;
  std::string out = "out";
  std::vector<std::string> overrides;
  std::vector<std::string> arms;
  run->add_option("--preset", preset, "preset name")->required();
  run->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_option("--override", overrides, "dotted config override key=value (repeatable)");
  run->add_option("--arms", arms, "comma-separated subset of the preset's arms")->delimiter(',');

  auto* verify = app.add_subcommand("verify", "oracle-sanity preset plus the invariant suite");
  std::string verify_out = "out/verify";
  verify->add_option("--out", verify_out, "output directory")->capture_default_str();

  auto* list = app.add_subcommand("presets", "list presets and their arms");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      sdre::harness::RunOptions opts;
      opts.seeds = seeds;
      opts.out_dir = out;
      opts.overrides = overrides;
      opts.arms = arms;
      const auto summary = sdre::harness::run_preset(preset, opts);
      for (const auto& arm : summary["arms"]) {
        const auto& m = arm["mae_final"];
        std::cout << arm["arm"].get<std::string>() << ": final-t MAE ";
        if (m["mean"].is_null()) {
          std::cout << "n/a";
        } else {
          std::cout << sdre::harness::format_double(m["mean"].get<double>()) << " +- "
                    << sdre::harness::format_double(m["sem"].get<double>());
        }
        std::cout << " (" << arm["seeds_ok"].get<std::size_t>() << " seeds)\n";
      }
      std::cout << "wrote " << out << "/summary.json\n";
      return 0;
    }
    if (*verify) {
      bool all = true;
      for (const auto& c : sdre::verify::run_all(verify_out)) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        all = all && c.passed;
      }
      return all ? 0 : 1;
    }
    if (*list) {
      for (const auto& name : sdre::harness::preset_names()) {
        std::cout << name << ":";
        for (const auto& a : sdre::harness::preset_arms(name)) std::cout << " " << a.arm;
        std::cout << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
