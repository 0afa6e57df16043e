#include "diqa/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "diqa/errors.hpp"

namespace diqa {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(what) + ": inputs have " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " values");
  }
  if (x.size() < 2) throw DimensionError(std::string(what) + ": at least two pairs are required");
}

}  // namespace

double lcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "lcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateError("correlation undefined: an input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double srocc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, "srocc");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return lcc(rx, ry);
}

double LogisticMapping::operator()(double x) const {
  const double scale = std::max(std::abs(beta[3]), 1e-12);
  return beta[1] + (beta[0] - beta[1]) / (1.0 + std::exp(-(x - beta[2]) / scale));
}

LogisticMapping fit_logistic(std::span<const double> predictions, std::span<const double> targets) {
  check_pair(predictions, targets, "fit_logistic");
  const std::size_t n = predictions.size();
  const auto [pmin, pmax] = std::minmax_element(predictions.begin(), predictions.end());
  const auto [tmin, tmax] = std::minmax_element(targets.begin(), targets.end());
  const double spread = std::max(*pmax - *pmin, 1e-6);
  const double mean_p = std::accumulate(predictions.begin(), predictions.end(), 0.0) / static_cast<double>(n);
  const bool increasing = lcc(predictions, targets) >= 0.0;

  LogisticMapping f;
  f.beta = {increasing ? *tmax : *tmin, increasing ? *tmin : *tmax, mean_p, spread / 4.0};

  auto residuals = [&](const LogisticMapping& m) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) r(static_cast<Eigen::Index>(i)) = m(predictions[i]) - targets[i];
    return r;
  };
  double lambda = 1e-3;
  Eigen::VectorXd r = residuals(f);
  double cost = r.squaredNorm();
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(n), 4);
    for (int k = 0; k < 4; ++k) {
      LogisticMapping g = f;
      const double h = 1e-6 * std::max(1.0, std::abs(f.beta[k]));
      g.beta[k] += h;
      jac.col(k) = (residuals(g) - r) / h;
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      LogisticMapping trial = f;
      for (int k = 0; k < 4; ++k) trial.beta[k] += step(k);
      const Eigen::VectorXd rt = residuals(trial);
      const double trial_cost = rt.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        f = trial;
        r = rt;
        const double gain = cost - trial_cost;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (gain < 1e-12 * std::max(cost, 1e-12)) return f;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return f;
}

}  // namespace diqa
