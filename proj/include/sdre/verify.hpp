#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sdre::verify {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct GradientCase {
  std::string name;
  double max_rel_error = 0.0;
};

// Finite-difference check of every autodiff primitive, worst case over `draws` random inputs.
std::vector<GradientCase> primitive_gradients(int draws, std::uint64_t seed);
// LSEL through the TANDEM (or Oblivion) scores of each model kind; T=5, N=1, K=2, d=4.
std::vector<GradientCase> integrator_gradients();

// Oracle-sanity preset (written under out_dir) plus the invariant suite.
std::vector<Check> run_all(const std::string& out_dir);

}  // namespace sdre::verify
