#pragma once

#include <span>

namespace sdre::stats {

double mean(std::span<const double> xs);
// Sample standard deviation / sqrt(n); 0 for fewer than two values.
double sem(std::span<const double> xs);
// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace sdre::stats
