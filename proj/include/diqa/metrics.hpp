#pragma once

#include <array>
#include <span>
#include <vector>

namespace diqa {

/// Pearson linear correlation. Throws DegenerateError when either input has zero variance.
double lcc(std::span<const double> x, std::span<const double> y);

/// Fractional ranks (1-based); tied values share the mean of their positions.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Spearman rank-order correlation: Pearson correlation of the fractional ranks.
double srocc(std::span<const double> x, std::span<const double> y);

/// Monotonic four-parameter logistic f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|)).
struct LogisticMapping {
  std::array<double, 4> beta{};
  double operator()(double x) const;
};

/// Least-squares fit (Levenberg-Marquardt) of `targets` as a logistic function of `predictions`.
LogisticMapping fit_logistic(std::span<const double> predictions, std::span<const double> targets);

}  // namespace diqa
