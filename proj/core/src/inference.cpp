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

#include "gpmpc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace gpmpc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Entries below the floor are pinned to it; the others share the remaining
// mass in proportion. Pinning can drag further entries under the floor, so
// repeat until the pinned set settles (at most N rounds).
VectorXd floor_and_normalize(const VectorXd& post, double floor) {
  const Eigen::Index n = post.size();
  std::vector<bool> pinned(static_cast<size_t>(n), false);
  VectorXd out(n);
  for (Eigen::Index round = 0; round <= n; ++round) {
    double free_mass = 0.0;
    Eigen::Index n_pinned = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pinned[i]) {
        ++n_pinned;
      } else {
        free_mass += post(i);
      }
    }
    const double scale = (1.0 - floor * static_cast<double>(n_pinned)) / free_mass;
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pinned[i]) {
        out(i) = floor;
      } else {
        out(i) = post(i) * scale;
        if (out(i) < floor) {
          pinned[i] = true;
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return out;
}

}  // namespace

Belief Belief::uniform(int n) {
  if (n < 1) throw Error("belief needs at least one mode");
  return Belief(VectorXd::Constant(n, 1.0 / n));
}

void Belief::validate(double tol) const {
  if (b.size() < 1 || !b.allFinite() || (b.array() < 0.0).any() ||
      std::abs(b.sum() - 1.0) > tol) {
    throw Error("belief must be a probability vector");
  }
}

void InferenceConfig::validate(int n_modes) const {
  if (!(floor > 0.0) || !(floor < 1.0 / n_modes)) {
    throw Error("belief floor must lie in (0, 1/N)");
  }
  if (transitions.size() > 0) {
    if (transitions.rows() != n_modes || transitions.cols() != n_modes) {
      throw DimensionMismatch("transition matrix must be N x N");
    }
    for (int i = 0; i < n_modes; ++i) {
      if ((transitions.row(i).array() < 0.0).any() ||
          std::abs(transitions.row(i).sum() - 1.0) > 1e-9) {
        throw Error("transition matrix rows must be probability vectors");
      }
    }
  }
}

VectorXd gaussian_log_likelihood(const ModelSet& models, const Pose& x,
                                 const Wrench& fH) {
  VectorXd ll(static_cast<Eigen::Index>(models.size()));
  const Vector6d f = fH.vector();
  const Vector6d q = x.vector();
  for (std::size_t n = 0; n < models.size(); ++n) {
    const Prediction p = models[n]->predict(q);
    const Vector6d mean = p.mean.vector();
    double total = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double s2 = p.var(i) + models[n]->noise_var(i);
      const double r = f(i) - mean(i);
      total += -0.5 * (kLog2Pi + std::log(s2) + r * r / s2);
    }
    ll(static_cast<Eigen::Index>(n)) = total;
  }
  return ll;
}

double similarity(const Wrench& fH, const Prediction& pred, double beta,
                  bool normalized) {
  const Vector6d mu = pred.mean.vector();
  const Vector6d f = fH.vector();
  double dot = 0.0;
  if (normalized) {
    auto cosine = [](const Vector3d& a, const Vector3d& b) {
      const double n = a.norm() * b.norm();
      return n > 0.0 ? a.dot(b) / n : 0.0;
    };
    dot = 0.5 * (cosine(f.head<3>(), mu.head<3>()) + cosine(f.tail<3>(), mu.tail<3>()));
  } else {
    dot = f.dot(mu);
  }
  const double arg = std::max(0.5 * dot + 0.5, kSimilarityClamp);
  double s = beta * mu.norm() * std::log(arg);
  for (int i = 0; i < 6; ++i) s -= std::log(pred.var(i));
  return s;
}

VectorXd similarity_log_likelihood(const ModelSet& models, const Pose& x,
                                   const Wrench& fH, const InferenceConfig& cfg) {
  VectorXd s(static_cast<Eigen::Index>(models.size()));
  for (std::size_t n = 0; n < models.size(); ++n) {
    s(static_cast<Eigen::Index>(n)) =
        similarity(fH, models[n]->predict(x), cfg.beta, cfg.similarity_normalized);
  }
  return s;
}

Belief update(const Belief& b, const VectorXd& loglik, const InferenceConfig& cfg) {
  if (loglik.size() != b.b.size()) {
    throw DimensionMismatch("update: likelihood and belief sizes differ");
  }
  // log-space with max subtraction
  VectorXd logpost(b.b.size());
  for (Eigen::Index i = 0; i < logpost.size(); ++i) {
    logpost(i) = loglik(i) + std::log(b.b(i));
  }
  const double top = logpost.maxCoeff();
  VectorXd post(logpost.size());
  for (Eigen::Index i = 0; i < post.size(); ++i) post(i) = std::exp(logpost(i) - top);
  post /= post.sum();
  return Belief(floor_and_normalize(std::move(post), cfg.floor));
}

Belief update_with_transitions(const Belief& b, const VectorXd& loglik,
                               const MatrixXd& transitions,
                               const InferenceConfig& cfg) {
  const Eigen::Index n = b.b.size();
  if (transitions.rows() != n || transitions.cols() != n) {
    throw DimensionMismatch("transition matrix must be N x N");
  }
  VectorXd prior(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += transitions(i, j) * b.b(i);
    prior(j) = acc;
  }
  return update(Belief(prior), loglik, cfg);
}

ModeEstimator::ModeEstimator(ModelSet models, InferenceConfig cfg,
                             std::optional<Belief> prior)
    : models_(std::move(models)), cfg_(std::move(cfg)) {
  if (models_.empty()) throw Error("mode estimator needs at least one model");
  cfg_.validate(modes());
  prior_ = prior ? *prior : Belief::uniform(modes());
  if (prior_.size() != modes()) throw DimensionMismatch("prior size differs from mode count");
  prior_.validate();
  belief_ = prior_;
}

bool ModeEstimator::observe(const Pose& x, const Wrench& fH) {
  if (fH.f.norm() < cfg_.deadband) return false;
  const VectorXd ll = cfg_.likelihood == LikelihoodMode::kGaussian
                          ? gaussian_log_likelihood(models_, x, fH)
                          : similarity_log_likelihood(models_, x, fH, cfg_);
  belief_ = cfg_.transitions.size() > 0
                ? update_with_transitions(belief_, ll, cfg_.transitions, cfg_)
                : update(belief_, ll, cfg_);
  return true;
}

void ModeEstimator::reset(std::optional<Belief> prior) {
  if (prior) prior_ = *prior;
  belief_ = prior_;
}

}  // namespace gpmpc
