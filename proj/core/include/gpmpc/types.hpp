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

#ifndef GPMPC_TYPES_HPP_
#define GPMPC_TYPES_HPP_

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace gpmpc {

using Vector3d = Eigen::Vector3d;
using Vector4d = Eigen::Vector4d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector12d = Eigen::Matrix<double, 12, 1>;
using Matrix3d = Eigen::Matrix3d;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix12d = Eigen::Matrix<double, 12, 12>;
using Matrix12x6d = Eigen::Matrix<double, 12, 6>;
using Matrix34d = Eigen::Matrix<double, 3, 4>;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

// base class for all library errors; the subclass names the failure
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonOrthonormal : public Error {
 public:
  using Error::Error;
};

class NonPositiveInertia : public Error {
 public:
  using Error::Error;
};

class EmptyAfterPreprocess : public Error {
 public:
  using Error::Error;
};

class OptimizerFailure : public Error {
 public:
  using Error::Error;
};

class JointLimit : public Error {
 public:
  using Error::Error;
};

class Unreachable : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace gpmpc

#endif  // GPMPC_TYPES_HPP_
