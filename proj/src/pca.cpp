#include "diqa/pca.hpp"

#include <Eigen/Eigenvalues>
#include <string>

namespace diqa {

PcaModel pca_fit(const Eigen::MatrixXd& samples, Eigen::Index requested_components) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (n < 2) throw ValidationError("PCA needs at least two samples, got " + std::to_string(n));
  if (requested_components < 0 || requested_components > d) {
    throw ValidationError("cannot request " + std::to_string(requested_components) + " components in " +
                          std::to_string(d) + " dimensions");
  }
  if (requested_components > n) {
    throw ValidationError("PCA with " + std::to_string(requested_components) + " components needs at least as many samples, got " +
                          std::to_string(n));
  }
  PcaModel model;
  model.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw DegenerateError("covariance eigendecomposition failed");

  // Eigen returns ascending eigenvalues; reverse to decreasing variance.
  model.components = solver.eigenvectors().rowwise().reverse();
  model.explained_variance = solver.eigenvalues().reverse().cwiseMax(0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    auto axis = model.components.col(j);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(axis(i)) > 1e-12) {
        if (axis(i) < 0) axis = -axis;
        break;
      }
    }
  }
  return model;
}

Eigen::VectorXd pca_reduce(const Eigen::VectorXd& feature, const PcaModel& pca, Eigen::Index k) {
  if (feature.size() != pca.dim()) {
    throw DimensionError("feature has " + std::to_string(feature.size()) + " dimensions, PCA model has " +
                         std::to_string(pca.dim()));
  }
  if (k < 0 || k > pca.dim()) {
    throw ValidationError("k=" + std::to_string(k) + " outside [0, " + std::to_string(pca.dim()) + "]");
  }
  if (k == 0) return pca.mean;
  const auto basis = pca.components.leftCols(k);
  const Eigen::VectorXd coeffs = basis.transpose() * (feature - pca.mean);
  return pca.mean + basis * coeffs;
}

Tensor pca_reduce_rows(const Tensor& features, const PcaModel& pca, Eigen::Index k) {
  require_rank(features, 2, "pca_reduce_rows");
  const std::int64_t rows = features.dim(0), d = features.dim(1);
  Tensor out(features.shape());
  Eigen::VectorXd f(d);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < d; ++c) f(c) = features[r * d + c];
    const Eigen::VectorXd reduced = pca_reduce(f, pca, k);
    for (std::int64_t c = 0; c < d; ++c) out[r * d + c] = static_cast<float>(reduced(c));
  }
  return out;
}

}  // namespace diqa
