#pragma once

#include <span>

#include "smorm/tensor.hpp"

namespace smorm {

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population (divide by n)
double pearson(std::span<const double> x, std::span<const double> y);
// Pearson on average ranks (ties share the mean rank).
double spearman(std::span<const double> x, std::span<const double> y);
Vec average_ranks(std::span<const double> x);
// Least-squares slope of y on x.
double ls_slope(std::span<const double> x, std::span<const double> y);
// Slope of y against its index 0..n-1.
double ls_slope(std::span<const double> y);

// One-sided exact binomial sign test: P(X ≥ wins) for X ~ Bin(n, ½).
double sign_test_p(std::size_t wins, std::size_t n);

}  // namespace smorm
