// Copyright 2026 The ppdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

namespace ppdlab {

/// Affine subspace {origin + directions * v : v in R^K} with orthonormal
/// direction columns. Column order is meaningful (column k is the k-th
/// principal direction).
class Subspace {
 public:
  /// Validates shapes and orthonormality (1e-10 elementwise on WᵀW - I).
  Subspace(Eigen::VectorXd origin, Eigen::MatrixXd directions);

  const Eigen::VectorXd& origin() const { return origin_; }
  const Eigen::MatrixXd& directions() const { return directions_; }
  Eigen::Index ambient_dim() const { return origin_.size(); }
  Eigen::Index rank() const { return directions_.cols(); }

 private:
  Eigen::VectorXd origin_;
  Eigen::MatrixXd directions_;
};

inline constexpr double kOrthonormalTolerance = 1e-10;
inline constexpr double kPivotTolerance = 1e-8;

/// Coefficients Wᵀ(x - x₀).
Eigen::VectorXd project(const Eigen::VectorXd& x, const Subspace& a);

/// Ambient point x₀ + W v.
Eigen::VectorXd reconstruct(const Eigen::VectorXd& v, const Subspace& a);

/// Classical Gram–Schmidt with one re-orthogonalization pass. Preserves
/// column order; throws kDegenerateDirections when a pivot norm drops
/// below kPivotTolerance.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& raw);

}  // namespace ppdlab
