#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "sdre/stats.hpp"

using namespace sdre;

TEST_CASE("mean and SEM") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(stats::mean(x) == 2.5);
  CHECK(stats::sem(x) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-15));
  CHECK(stats::sem(std::vector<double>{7.0}) == 0.0);
  CHECK_THROWS_AS(stats::mean(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("Spearman rank correlation") {
  const std::vector<double> x{0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  CHECK(stats::spearman(x, std::vector<double>{1, 2, 3, 4, 5, 6}) == doctest::Approx(1.0));
  CHECK(stats::spearman(x, std::vector<double>{6, 5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Hand computed with tied ranks: y ranks {1.5, 1.5, 3, 4}.
  const std::vector<double> a{1, 2, 3, 4}, b{5, 5, 7, 9};
  CHECK(stats::spearman(a, b) == doctest::Approx(4.5 / std::sqrt(5.0 * 4.5)).epsilon(1e-14));
  CHECK(stats::spearman(a, std::vector<double>{2, 2, 2, 2}) == 0.0);
  CHECK_THROWS_AS(stats::spearman(a, std::vector<double>{1, 2}), std::invalid_argument);
}
