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

#include "gpmpc/gp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "json.hpp"
#include "kernel_detail.hpp"

namespace gpmpc {

namespace {

using json = nlohmann::json;

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr int kModelFormatVersion = 1;

Eigen::LLT<MatrixXd> factor_or_throw(const MatrixXd& K, const char* what) {
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) {
    throw Error(std::string(what) + ": kernel matrix is not positive definite");
  }
  return llt;
}

json hyper_to_json(const Hyperparams& h) {
  return {{"l", h.l}, {"sigma_f", h.sigma_f}, {"sigma_n", h.sigma_n}};
}

Hyperparams hyper_from_json(const json& j) {
  return {j.at("l").get<double>(), j.at("sigma_f").get<double>(),
          j.at("sigma_n").get<double>()};
}

json rows_to_json(const MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd rows_from_json(const json& j, Eigen::Index cols) {
  MatrixXd M(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const json& row = j.at(i);
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError("model file: row has wrong width");
    }
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = row.at(c).get<double>();
  }
  return M;
}

}  // namespace

Vector6d GpHyperparams::inverse_sq_lengths() const {
  Vector6d w;
  const double a = 1.0 / (linear.l * linear.l);
  const double b = 1.0 / (rotational.l * rotational.l);
  w << a, a, a, b, b, b;
  return w;
}

void GpHyperparams::validate() const {
  for (int g = 0; g < 2; ++g) {
    const Hyperparams& h = group(g);
    if (!(h.l > 0.0) || !(h.sigma_f > 0.0) || !(h.sigma_n > 0.0)) {
      throw Error("GP hyperparameters must be strictly positive");
    }
  }
}

double se_kernel(const Vector6d& a, const Vector6d& b, const Hyperparams& h) {
  return h.sigma_f * h.sigma_f * std::exp(-(a - b).squaredNorm() / (h.l * h.l));
}

void Demonstration::validate() const {
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (!(samples[i].t > samples[i - 1].t)) {
      throw Error("demonstration timestamps must be strictly increasing");
    }
  }
}

Demonstration read_demonstration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open demonstration file " + path.string());
  Demonstration demo;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line) {
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    }
    std::istringstream fields(line);
    std::array<double, 19> v{};
    std::size_t n = 0;
    std::string tok;
    bool numeric = true;
    while (fields >> tok) {
      char* end = nullptr;
      const double value = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') {
        numeric = false;
        break;
      }
      if (n < v.size()) v[n] = value;
      ++n;
    }
    if (!numeric) {
      if (demo.samples.empty()) continue;  // header row
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": non-numeric field");
    }
    if (n != v.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 19 columns, got " + std::to_string(n));
    }
    DemoSample s;
    s.t = v[0];
    s.pose = Pose(Vector3d(v[1], v[2], v[3]), RotVec(v[4], v[5], v[6]));
    s.twist << v[7], v[8], v[9], v[10], v[11], v[12];
    s.wrench = Wrench(Vector3d(v[13], v[14], v[15]), Vector3d(v[16], v[17], v[18]));
    demo.samples.push_back(s);
  }
  demo.validate();
  return demo;
}

void write_demonstration(const std::filesystem::path& path,
                         const Demonstration& demo) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write demonstration file " + path.string());
  out << "t,px,py,pz,rx,ry,rz,vx,vy,vz,wx,wy,wz,fx,fy,fz,mx,my,mz\n";
  out.precision(17);
  for (const DemoSample& s : demo.samples) {
    out << s.t;
    const Vector6d x = s.pose.vector();
    const Vector6d w = s.wrench.vector();
    for (int i = 0; i < 6; ++i) out << ',' << x(i);
    for (int i = 0; i < 6; ++i) out << ',' << s.twist(i);
    for (int i = 0; i < 6; ++i) out << ',' << w(i);
    out << '\n';
  }
}

TrainingSet preprocess(const std::vector<Demonstration>& demos,
                       const PreprocessOptions& options) {
  std::vector<const DemoSample*> kept;
  for (const Demonstration& d : demos) {
    for (const DemoSample& s : d.samples) {
      if (s.wrench.f.norm() >= options.min_force) kept.push_back(&s);
    }
  }
  if (kept.empty()) {
    throw EmptyAfterPreprocess("no samples with linear force >= " +
                               std::to_string(options.min_force) + " N");
  }
  if (options.cap < 1) throw Error("preprocess: cap must be at least 1");

  std::vector<std::size_t> index;
  const std::size_t n = kept.size();
  const std::size_t cap = static_cast<std::size_t>(options.cap);
  if (n <= cap) {
    for (std::size_t i = 0; i < n; ++i) index.push_back(i);
  } else if (cap == 1) {
    index.push_back(n / 2);
  } else {
    for (std::size_t i = 0; i < cap; ++i) {
      index.push_back(static_cast<std::size_t>(std::llround(
          static_cast<double>(i) * static_cast<double>(n - 1) /
          static_cast<double>(cap - 1))));
    }
  }

  TrainingSet set;
  set.X.resize(static_cast<Eigen::Index>(index.size()), 6);
  set.Y.resize(static_cast<Eigen::Index>(index.size()), 6);
  for (std::size_t k = 0; k < index.size(); ++k) {
    const DemoSample& s = *kept[index[k]];
    set.X.row(static_cast<Eigen::Index>(k)) = s.pose.vector().transpose();
    set.Y.row(static_cast<Eigen::Index>(k)) = s.wrench.vector().transpose();
  }
  return set;
}

GpModel GpModel::exact(TrainingSet data, const GpHyperparams& h, int mode) {
  h.validate();
  if (data.size() < 1) throw EmptyAfterPreprocess("GP needs at least one sample");
  if (data.X.cols() != 6 || data.Y.cols() != 6 || data.Y.rows() != data.X.rows()) {
    throw DimensionMismatch("training set must be S x 6 inputs and targets");
  }
  GpModel m;
  m.mode_ = mode;
  m.sparse_ = false;
  m.hyper_ = h;
  m.inv_len2_ = h.inverse_sq_lengths();
  m.support_ = data.X;
  const Eigen::Index S = data.X.rows();
  const MatrixXd kappa = detail::unit_gram(data.X, data.X, m.inv_len2_);
  m.log_likelihood_ = 0.0;
  for (int g = 0; g < 2; ++g) {
    const Hyperparams& hg = h.group(g);
    Group& grp = m.groups_[g];
    grp.sf2 = hg.sigma_f * hg.sigma_f;
    grp.sn2 = hg.sigma_n * hg.sigma_n;
    MatrixXd K = grp.sf2 * kappa;
    K.diagonal().array() += grp.sn2 + detail::kJitter * grp.sf2;
    const Eigen::LLT<MatrixXd> llt = factor_or_throw(K, "GpModel::exact");
    const MatrixXd Yg = detail::group_targets(data, g);
    const MatrixXd alpha = llt.solve(Yg);
    const MatrixXd Kinv = llt.solve(MatrixXd::Identity(S, S));
    grp.alpha = grp.sf2 * alpha;
    grp.C = grp.sf2 * grp.sf2 * Kinv;

    const double logdet_half =
        llt.matrixLLT().diagonal().array().log().sum();
    m.log_likelihood_ += -0.5 * (Yg.array() * alpha.array()).sum() -
                         3.0 * logdet_half - 1.5 * static_cast<double>(S) * kLog2Pi;
  }
  m.data_ = std::move(data);
  return m;
}

GpModel GpModel::sparse(TrainingSet data, const GpHyperparams& h,
                        const MatrixXd& inducing, int mode) {
  h.validate();
  if (inducing.cols() != 6 || inducing.rows() < 1) {
    throw DimensionMismatch("inducing inputs must be R x 6 with R >= 1");
  }
  GpModel m;
  m.mode_ = mode;
  m.sparse_ = true;
  m.hyper_ = h;
  m.inv_len2_ = h.inverse_sq_lengths();
  m.support_ = inducing;
  const Eigen::Index R = inducing.rows();
  const MatrixXd kmm = detail::unit_gram(inducing, inducing, m.inv_len2_);
  const MatrixXd kmn = detail::unit_gram(inducing, data.X, m.inv_len2_);
  const MatrixXd I = MatrixXd::Identity(R, R);
  for (int g = 0; g < 2; ++g) {
    const Hyperparams& hg = h.group(g);
    Group& grp = m.groups_[g];
    grp.sf2 = hg.sigma_f * hg.sigma_f;
    grp.sn2 = hg.sigma_n * hg.sigma_n;
    const double sn = hg.sigma_n;
    MatrixXd Kmm = grp.sf2 * kmm;
    Kmm.diagonal().array() += detail::kJitter * grp.sf2;
    const Eigen::LLT<MatrixXd> L = factor_or_throw(Kmm, "GpModel::sparse");
    const MatrixXd A =
        L.matrixL().solve(MatrixXd(grp.sf2 * kmn)) / sn;  // R x S
    MatrixXd B = A * A.transpose();
    B.diagonal().array() += 1.0;
    const Eigen::LLT<MatrixXd> LB = factor_or_throw(B, "GpModel::sparse");
    const MatrixXd Ay = A * detail::group_targets(data, g) / sn;
    // Sigma^-1 = L^-T B^-1 L^-1
    const MatrixXd alpha = L.matrixU().solve(LB.solve(Ay));
    const MatrixXd Linv = L.matrixL().solve(I);
    const MatrixXd C = Linv.transpose() * (I - LB.solve(I)) * Linv;
    grp.alpha = grp.sf2 * alpha;
    grp.C = grp.sf2 * grp.sf2 * 0.5 * (C + C.transpose());
  }
  m.log_likelihood_ = elbo(data, h, inducing);
  m.data_ = std::move(data);
  return m;
}

void GpModel::kernel_vector(const Vector6d& x, VectorXd& kappa) const {
  const Eigen::Index P = support_.rows();
  kappa.resize(P);
  for (Eigen::Index j = 0; j < P; ++j) {
    double d2 = 0.0;
    for (int d = 0; d < 6; ++d) {
      const double diff = x(d) - support_(j, d);
      d2 += inv_len2_(d) * diff * diff;
    }
    kappa(j) = std::exp(-d2);
  }
}

Vector6d GpModel::predict_mean(const Vector6d& x) const {
  VectorXd kappa;
  kernel_vector(x, kappa);
  Vector6d mean;
  mean.head<3>() = groups_[0].alpha.transpose() * kappa;
  mean.tail<3>() = groups_[1].alpha.transpose() * kappa;
  return mean;
}

Prediction GpModel::predict(const Vector6d& x) const {
  VectorXd kappa;
  kernel_vector(x, kappa);
  Prediction out;
  Vector6d mean;
  for (int g = 0; g < 2; ++g) {
    const Group& grp = groups_[g];
    mean.segment<3>(3 * g) = grp.alpha.transpose() * kappa;
    const double v = grp.sf2 - kappa.dot(grp.C * kappa);
    out.var.segment<3>(3 * g).setConstant(std::clamp(v, 0.0, grp.sf2));
  }
  out.mean = Wrench::from_vector(mean);
  return out;
}

ForceJet GpModel::jet(const Vector6d& x, const JetRequest& request) const {
  const Eigen::Index P = support_.rows();
  VectorXd kappa;
  kernel_vector(x, kappa);
  ForceJet out;
  for (auto& h : out.mean_hessian) h.setZero();
  for (int g = 0; g < 2; ++g) {
    out.mean.segment<3>(3 * g) = groups_[g].alpha.transpose() * kappa;
  }
  const int ngroups = request.variance == VarianceMode::kFull       ? 2
                      : request.variance == VarianceMode::kSimplified ? 1
                                                                      : 0;
  if (!request.derivatives) {
    for (int g = 0; g < ngroups; ++g) {
      const double v = groups_[g].sf2 - kappa.dot(groups_[g].C * kappa);
      if (ngroups == 2) {
        out.var.segment<3>(3 * g).setConstant(v);
      } else {
        out.var.setConstant(v);
      }
    }
    return out;
  }

  // E rows: w .* (x - p_j);  G rows: d kappa_j / dx = -2 kappa_j E_j
  MatrixXd E(P, 6);
  for (Eigen::Index j = 0; j < P; ++j) {
    E.row(j) = ((x.transpose() - support_.row(j)).array() *
                inv_len2_.transpose().array())
                   .matrix();
  }
  const MatrixXd G = (-2.0 * kappa).asDiagonal() * E;
  for (int g = 0; g < 2; ++g) {
    out.dmean.middleRows<3>(3 * g) = groups_[g].alpha.transpose() * G;
  }
  if (request.mean_hessian) {
    for (int c = 0; c < 6; ++c) {
      const VectorXd ak = groups_[c / 3].alpha.col(c % 3).cwiseProduct(kappa);
      Matrix6d H = 4.0 * E.transpose() * ak.asDiagonal() * E;
      H.diagonal() -= 2.0 * ak.sum() * inv_len2_;
      out.mean_hessian[c] = H;
    }
  }

  for (int g = 0; g < ngroups; ++g) {
    const Group& grp = groups_[g];
    const VectorXd beta = grp.C * kappa;
    const double v = grp.sf2 - kappa.dot(beta);
    const Eigen::Matrix<double, 1, 6> dv = -2.0 * beta.transpose() * G;
    double weight = 0.0;
    if (ngroups == 2) {
      out.var.segment<3>(3 * g).setConstant(v);
      out.dvar.middleRows<3>(3 * g).rowwise() = dv;
      weight = request.var_weights.segment<3>(3 * g).sum();
    } else {
      out.var.setConstant(v);
      out.dvar.rowwise() = dv;
      weight = request.var_weights.sum();
    }
    if (request.var_hessian && weight != 0.0) {
      // -2 (G^T C G + sum_j beta_j Hess(kappa_j))
      const VectorXd bk = beta.cwiseProduct(kappa);
      Matrix6d H = G.transpose() * (grp.C * G);
      H += 4.0 * E.transpose() * bk.asDiagonal() * E;
      H.diagonal() -= 2.0 * bk.sum() * inv_len2_;
      out.var_hessian += -2.0 * weight * H;
    }
  }
  return out;
}

double GpModel::noise_var(int channel) const {
  return groups_[channel < 3 ? 0 : 1].sn2;
}

GpModel fit(const std::vector<Demonstration>& demos, const GpHyperparams& h,
            int cap, int mode) {
  PreprocessOptions options;
  options.cap = cap;
  return GpModel::exact(preprocess(demos, options), h, mode);
}

Prediction predict(const GpModel& model, const Pose& x) {
  return model.predict(x.vector());
}

PredictionGradient predict_grad(const GpModel& model, const Pose& x) {
  JetRequest req;
  req.variance = VarianceMode::kFull;
  const ForceJet j = model.jet(x.vector(), req);
  return {j.dmean, j.dvar};
}

double log_marginal_likelihood(const GpModel& model) {
  if (!model.is_sparse()) return model.log_likelihood();
  return log_marginal_likelihood(model.data(), model.hyperparams());
}

double log_marginal_likelihood(const TrainingSet& data, const GpHyperparams& h) {
  return GpModel::exact(data, h).log_likelihood();
}

Vector6d log_marginal_likelihood_gradient(const TrainingSet& data,
                                          const GpHyperparams& h) {
  h.validate();
  const Eigen::Index S = data.X.rows();
  const Vector6d w = h.inverse_sq_lengths();
  const MatrixXd kappa = detail::unit_gram(data.X, data.X, w);
  // scaled squared distances per block
  MatrixXd dlin(S, S), drot(S, S);
  for (Eigen::Index i = 0; i < S; ++i) {
    for (Eigen::Index j = 0; j < S; ++j) {
      dlin(i, j) = (data.X.row(i).head<3>() - data.X.row(j).head<3>()).squaredNorm() * w(0);
      drot(i, j) = (data.X.row(i).tail<3>() - data.X.row(j).tail<3>()).squaredNorm() * w(3);
    }
  }
  Vector6d grad = Vector6d::Zero();
  for (int g = 0; g < 2; ++g) {
    const Hyperparams& hg = h.group(g);
    const double sf2 = hg.sigma_f * hg.sigma_f;
    const double sn2 = hg.sigma_n * hg.sigma_n;
    MatrixXd K = sf2 * kappa;
    K.diagonal().array() += sn2 + detail::kJitter * sf2;
    const Eigen::LLT<MatrixXd> llt = factor_or_throw(K, "lml gradient");
    const MatrixXd alpha = llt.solve(detail::group_targets(data, g));
    const MatrixXd W = alpha * alpha.transpose() -
                       3.0 * llt.solve(MatrixXd::Identity(S, S));
    const MatrixXd Ksig = sf2 * kappa;
    // 0.5 * sum_ij W_ij dK_ij
    grad(0) += 0.5 * (W.array() * Ksig.array() * (2.0 * dlin.array())).sum();
    grad(1) += 0.5 * (W.array() * Ksig.array() * (2.0 * drot.array())).sum();
    const double dsf = 0.5 * (2.0 * ((W.array() * Ksig.array()).sum() +
                                     detail::kJitter * sf2 * W.trace()));
    const double dsn = 0.5 * 2.0 * sn2 * W.trace();
    grad(2 + 2 * g) = dsf;
    grad(3 + 2 * g) = dsn;
  }
  return grad;
}

double predictive_log_likelihood(const GpModel& model, const TrainingSet& test) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < test.X.rows(); ++i) {
    const Prediction p = model.predict(Vector6d(test.X.row(i).transpose()));
    const Vector6d mean = p.mean.vector();
    for (int c = 0; c < 6; ++c) {
      const double s2 = p.var(c) + model.noise_var(c);
      const double r = test.Y(i, c) - mean(c);
      total += -0.5 * (kLog2Pi + std::log(s2) + r * r / s2);
    }
  }
  return total;
}

void save_model(const GpModel& model, const std::filesystem::path& path) {
  json j;
  j["format"] = "gpmpc-gp-model";
  j["version"] = kModelFormatVersion;
  j["mode"] = model.mode();
  j["sparse"] = model.is_sparse();
  j["hyperparams"] = {{"linear", hyper_to_json(model.hyperparams().linear)},
                      {"rotational", hyper_to_json(model.hyperparams().rotational)}};
  j["inputs"] = rows_to_json(model.data().X);
  j["targets"] = rows_to_json(model.data().Y);
  if (model.is_sparse()) j["inducing"] = rows_to_json(model.support());
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file " + path.string());
  out << j.dump(1) << '\n';
}

GpModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
    if (j.at("format") != "gpmpc-gp-model") throw ParseError("not a gpmpc model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw ParseError("unsupported model file version " + std::to_string(version));
    }
    GpHyperparams h;
    h.linear = hyper_from_json(j.at("hyperparams").at("linear"));
    h.rotational = hyper_from_json(j.at("hyperparams").at("rotational"));
    TrainingSet data;
    data.X = rows_from_json(j.at("inputs"), 6);
    data.Y = rows_from_json(j.at("targets"), 6);
    const int mode = j.at("mode").get<int>();
    if (j.at("sparse").get<bool>()) {
      return GpModel::sparse(std::move(data), h, rows_from_json(j.at("inducing"), 6), mode);
    }
    return GpModel::exact(std::move(data), h, mode);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gpmpc
