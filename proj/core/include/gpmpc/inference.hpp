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

#ifndef GPMPC_INFERENCE_HPP_
#define GPMPC_INFERENCE_HPP_

#include <memory>
#include <optional>
#include <vector>

#include "gpmpc/force_model.hpp"
#include "gpmpc/geometry.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

// Probability vector over N modes. Every update keeps entries >= the floor
// and the sum at 1.
struct Belief {
  VectorXd b;

  Belief() = default;
  explicit Belief(VectorXd probs) : b(std::move(probs)) {}
  static Belief uniform(int n);

  int size() const { return static_cast<int>(b.size()); }
  double operator[](int i) const { return b(i); }
  // throws Error unless non-negative and summing to 1 within tol
  void validate(double tol = 1e-9) const;
};

enum class LikelihoodMode { kGaussian, kSimilarity };

struct InferenceConfig {
  double floor = 1e-6;
  double beta = 0.05;
  LikelihoodMode likelihood = LikelihoodMode::kGaussian;
  // row-stochastic N x N; empty means modes never change
  MatrixXd transitions;
  // updates are skipped below this linear force magnitude (N)
  double deadband = 3.0;
  // similarity over unit-normalized force and moment parts instead of the
  // raw 6-vector dot product
  bool similarity_normalized = false;

  void validate(int n_modes) const;
};

using ModelSet = std::vector<std::shared_ptr<const ForceModel>>;

// per mode: sum over axes of log N(f_i; mu_i, var_i + sn_i^2)
VectorXd gaussian_log_likelihood(const ModelSet& models, const Pose& x,
                                 const Wrench& fH);

inline constexpr double kSimilarityClamp = 1e-10;

// beta |mu| ln(max(0.5 f.mu + 0.5, eps)) - sum_i ln var_i
double similarity(const Wrench& fH, const Prediction& pred, double beta,
                  bool normalized = false);

VectorXd similarity_log_likelihood(const ModelSet& models, const Pose& x,
                                   const Wrench& fH, const InferenceConfig& cfg);

// b'[n] ~ exp(loglik[n]) b[n], then floored and renormalized
Belief update(const Belief& b, const VectorXd& loglik, const InferenceConfig& cfg);

// predict with b- = T^T b, then correct as in update
Belief update_with_transitions(const Belief& b, const VectorXd& loglik,
                               const MatrixXd& transitions,
                               const InferenceConfig& cfg);

// Recursive mode estimator owning one belief. observe() applies the
// configured likelihood and update rule, honoring the force deadband.
class ModeEstimator {
 public:
  ModeEstimator(ModelSet models, InferenceConfig cfg,
                std::optional<Belief> prior = std::nullopt);

  // returns true when the belief was updated
  bool observe(const Pose& x, const Wrench& fH);

  const Belief& belief() const { return belief_; }
  void reset(std::optional<Belief> prior = std::nullopt);
  const InferenceConfig& config() const { return cfg_; }
  int modes() const { return static_cast<int>(models_.size()); }

 private:
  ModelSet models_;
  InferenceConfig cfg_;
  Belief prior_;
  Belief belief_;
};

}  // namespace gpmpc

#endif  // GPMPC_INFERENCE_HPP_
