// Copyright 2026 The gpmpc Authors
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

#ifndef GPMPC_SRC_KERNEL_DETAIL_HPP_
#define GPMPC_SRC_KERNEL_DETAIL_HPP_

#include <cmath>

#include "gpmpc/gp.hpp"

namespace gpmpc::detail {

inline constexpr double kJitter = 1e-9;  // relative to sf^2

// unit-amplitude SE kernel exp(-sum_d w_d (a_d - b_d)^2) between row sets
inline MatrixXd unit_gram(const MatrixXd& A, const MatrixXd& B,
                          const Vector6d& w) {
  MatrixXd K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      double d2 = 0.0;
      for (int d = 0; d < 6; ++d) {
        const double diff = A(i, d) - B(j, d);
        d2 += w(d) * diff * diff;
      }
      K(i, j) = std::exp(-d2);
    }
  }
  return K;
}

inline MatrixXd group_targets(const TrainingSet& data, int g) {
  return data.Y.middleCols(3 * g, 3);
}

}  // namespace gpmpc::detail

#endif  // GPMPC_SRC_KERNEL_DETAIL_HPP_
