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

#ifndef GPMPC_GP_HPP_
#define GPMPC_GP_HPP_

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gpmpc/force_model.hpp"
#include "gpmpc/geometry.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

struct Hyperparams {
  double l = 1.0;        // length-scale
  double sigma_f = 1.0;  // signal std
  double sigma_n = 1.0;  // noise std
};

// One set for the linear pose dims / force channels and one for the
// rotational pose dims / moment channels. Both channel groups share the
// scaled pose distance |dp|^2 / l_lin^2 + |dr|^2 / l_rot^2.
struct GpHyperparams {
  Hyperparams linear{0.12, 2.75, 4.0};
  Hyperparams rotational{1.1, 0.95, 1.0};

  const Hyperparams& group(int g) const { return g == 0 ? linear : rotational; }
  Hyperparams& group(int g) { return g == 0 ? linear : rotational; }
  Vector6d inverse_sq_lengths() const;
  void validate() const;
};

// sigma_f^2 exp(-|a - b|^2 / l^2)
double se_kernel(const Vector6d& a, const Vector6d& b, const Hyperparams& h);

struct DemoSample {
  double t = 0.0;
  Pose pose;
  Vector6d twist = Vector6d::Zero();
  Wrench wrench;
};

struct Demonstration {
  std::vector<DemoSample> samples;

  // throws Error unless timestamps are strictly increasing
  void validate() const;
};

// Delimited text, one sample per row:
//   t, px, py, pz, rx, ry, rz, vx, vy, vz, wx, wy, wz, fx, fy, fz, mx, my, mz
// Lines starting with '#' and a non-numeric header row are skipped.
Demonstration read_demonstration(const std::filesystem::path& path);
void write_demonstration(const std::filesystem::path& path,
                         const Demonstration& demo);

// regression data: rows are samples
struct TrainingSet {
  MatrixXd X;  // S x 6 poses (p, rotation vector)
  MatrixXd Y;  // S x 6 wrenches

  int size() const { return static_cast<int>(X.rows()); }
};

struct PreprocessOptions {
  double min_force = 3.0;  // drop samples with |linear force| below this
  int cap = 50;            // uniform-in-time subsample down to this count
};

// throws EmptyAfterPreprocess
TrainingSet preprocess(const std::vector<Demonstration>& demos,
                       const PreprocessOptions& options);

// Per-mode zero-mean GP over pose with independent output channels. Exact
// models predict from the training inputs; sparse models from R inducing
// inputs using the variational predictive equations. Both share the form
//   mean_c(x) = kappa(x)^T alpha_c,  var_g(x) = sf_g^2 - kappa(x)^T C_g kappa(x)
// with kappa the unit-amplitude kernel vector against the support points.
class GpModel final : public ForceModel {
 public:
  static GpModel exact(TrainingSet data, const GpHyperparams& h, int mode = 0);
  static GpModel sparse(TrainingSet data, const GpHyperparams& h,
                        const MatrixXd& inducing, int mode = 0);

  Prediction predict(const Vector6d& x) const override;
  using ForceModel::predict;
  ForceJet jet(const Vector6d& x, const JetRequest& request) const override;
  double noise_var(int channel) const override;

  // O(support size) mean-only query
  Vector6d predict_mean(const Vector6d& x) const;

  int mode() const { return mode_; }
  bool is_sparse() const { return sparse_; }
  // number of points the predictor sums over (S exact, R sparse)
  int support_size() const { return static_cast<int>(support_.rows()); }
  const MatrixXd& support() const { return support_; }
  const TrainingSet& data() const { return data_; }
  const GpHyperparams& hyperparams() const { return hyper_; }

  // exact: log marginal likelihood; sparse: variational lower bound
  double log_likelihood() const { return log_likelihood_; }

 private:
  struct Group {
    double sf2 = 1.0;
    double sn2 = 1.0;
    MatrixXd alpha;  // P x 3, kernel amplitude folded in
    MatrixXd C;      // P x P, kernel amplitude folded in
  };

  GpModel() = default;
  void kernel_vector(const Vector6d& x, VectorXd& kappa) const;

  int mode_ = 0;
  bool sparse_ = false;
  TrainingSet data_;
  GpHyperparams hyper_;
  Vector6d inv_len2_ = Vector6d::Ones();
  MatrixXd support_;
  std::array<Group, 2> groups_;
  double log_likelihood_ = 0.0;
};

// drops weak samples, subsamples by time and builds an exact model
GpModel fit(const std::vector<Demonstration>& demos, const GpHyperparams& h,
            int cap, int mode = 0);

Prediction predict(const GpModel& model, const Pose& x);

struct PredictionGradient {
  Matrix6d dmean;  // row i: d mean_i / d x
  Matrix6d dvar;
};
PredictionGradient predict_grad(const GpModel& model, const Pose& x);

// log marginal likelihood of the training targets summed over channels
double log_marginal_likelihood(const GpModel& model);
double log_marginal_likelihood(const TrainingSet& data, const GpHyperparams& h);

// d lml / d log(theta), theta = (l_lin, l_rot, sf_lin, sn_lin, sf_rot, sn_rot)
Vector6d log_marginal_likelihood_gradient(const TrainingSet& data,
                                          const GpHyperparams& h);

struct HyperBounds {
  GpHyperparams lower{{0.02, 0.5, 0.5}, {0.2, 0.1, 0.1}};
  GpHyperparams upper{{0.5, 10.0, 10.0}, {4.0, 5.0, 5.0}};
};

struct HyperFitOptions {
  int max_iterations = 150;
  double tolerance = 1e-6;
};

// maximizes the log marginal likelihood inside the box, multi-start local
// search in log space; throws OptimizerFailure if every start fails
GpHyperparams fit_hyperparams(const TrainingSet& data, const HyperBounds& bounds,
                              const GpHyperparams& init,
                              const HyperFitOptions& options = {});
GpHyperparams fit_hyperparams(const std::vector<Demonstration>& demos,
                              const HyperBounds& bounds, const GpHyperparams& init,
                              int cap = 50);

// Titsias variational lower bound for inducing inputs Z (R x 6)
double elbo(const TrainingSet& data, const GpHyperparams& h, const MatrixXd& Z);
// value and R x 6 gradient w.r.t. Z
double elbo(const TrainingSet& data, const GpHyperparams& h, const MatrixXd& Z,
            MatrixXd* gradient);

struct SparsifyOptions {
  int kmeans_iterations = 30;
  int max_iterations = 150;
  double tolerance = 1e-7;
};

// k-means initialized, ELBO-optimized inducing inputs over the model's
// training data; R must not exceed the training count
GpModel sparsify(const GpModel& model, int R, const SparsifyOptions& options = {});

// held-out predictive log density sum_i sum_c log N(y_ic; mean, var + sn^2)
double predictive_log_likelihood(const GpModel& model, const TrainingSet& test);

// versioned JSON model files
void save_model(const GpModel& model, const std::filesystem::path& path);
GpModel load_model(const std::filesystem::path& path);

}  // namespace gpmpc

#endif  // GPMPC_GP_HPP_
