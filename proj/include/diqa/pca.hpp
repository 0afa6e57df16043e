#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "diqa/tensor.hpp"

namespace diqa {

/// Principal axes of a feature distribution.
struct PcaModel {
  Eigen::VectorXd mean;
  /// Column j is the j-th principal axis; columns are orthonormal and sorted by
  /// decreasing explained variance. The first non-negligible coordinate of each
  /// axis is positive.
  Eigen::MatrixXd components;
  Eigen::VectorXd explained_variance;

  Eigen::Index dim() const { return mean.size(); }
};

/// Fits on an n x D sample matrix (one sample per row) via eigendecomposition of the
/// sample covariance. `requested_components` (0 = all D) must not exceed the sample count.
PcaModel pca_fit(const Eigen::MatrixXd& samples, Eigen::Index requested_components = 0);

/// Projects onto the first k axes and maps back to feature space:
/// mean + sum_{j<k} <f - mean, v_j> v_j. k = 0 yields the mean; k = D reproduces f.
Eigen::VectorXd pca_reduce(const Eigen::VectorXd& feature, const PcaModel& pca, Eigen::Index k);

/// Row-wise pca_reduce over an [N, D] feature tensor.
Tensor pca_reduce_rows(const Tensor& features, const PcaModel& pca, Eigen::Index k);

}  // namespace diqa
