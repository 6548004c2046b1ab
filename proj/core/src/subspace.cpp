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

#include "ppdlab/subspace.hpp"

#include <string>

#include "ppdlab/error.hpp"

namespace ppdlab {

Subspace::Subspace(Eigen::VectorXd origin, Eigen::MatrixXd directions)
    : origin_(std::move(origin)), directions_(std::move(directions)) {
  const auto d = origin_.size();
  const auto k = directions_.cols();
  require(directions_.rows() == d, ErrorKind::kRejectedInput,
          "subspace directions have " + std::to_string(directions_.rows()) +
              " rows, origin has length " + std::to_string(d));
  require(k >= 1 && k <= d, ErrorKind::kRejectedInput,
          "subspace rank must satisfy 1 <= K <= d");
  require(origin_.allFinite() && directions_.allFinite(),
          ErrorKind::kRejectedInput, "subspace has non-finite entries");
  const Eigen::MatrixXd gram = directions_.transpose() * directions_;
  const double dev =
      (gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  require(dev <= kOrthonormalTolerance, ErrorKind::kDegenerateDirections,
          "directions are not orthonormal (max |WᵀW - I| = " +
              std::to_string(dev) + ")");
}

Eigen::VectorXd project(const Eigen::VectorXd& x, const Subspace& a) {
  require(x.size() == a.ambient_dim(), ErrorKind::kRejectedInput,
          "project: point has length " + std::to_string(x.size()) +
              ", subspace lives in dimension " +
              std::to_string(a.ambient_dim()));
  return a.directions().transpose() * (x - a.origin());
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& v, const Subspace& a) {
  require(v.size() == a.rank(), ErrorKind::kRejectedInput,
          "reconstruct: coefficient vector has length " +
              std::to_string(v.size()) + ", subspace rank is " +
              std::to_string(a.rank()));
  return a.origin() + a.directions() * v;
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& raw) {
  require(raw.cols() >= 1 && raw.cols() <= raw.rows(),
          ErrorKind::kRejectedInput,
          "orthonormalize: need 1 <= columns <= rows");
  Eigen::MatrixXd q(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    Eigen::VectorXd col = raw.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      if (j == 0) break;
      const Eigen::VectorXd coeffs = q.leftCols(j).transpose() * col;
      col -= q.leftCols(j) * coeffs;
    }
    const double pivot = col.norm();
    require(pivot > kPivotTolerance, ErrorKind::kDegenerateDirections,
            "column " + std::to_string(j) +
                " is numerically dependent on the previous ones");
    q.col(j) = col / pivot;
  }
  return q;
}

}  // namespace ppdlab
