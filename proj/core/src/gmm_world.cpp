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

#include "ppdlab/gmm_world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "ppdlab/error.hpp"

namespace ppdlab {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2π)

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov,
                                  const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    raise(ErrorKind::kDegenerateTask, what + " is not positive definite");
  }
  Eigen::MatrixXd lower = llt.matrixL();
  if (lower.diagonal().minCoeff() <= 0.0 || !lower.allFinite()) {
    raise(ErrorKind::kDegenerateTask, what + " is numerically singular");
  }
  return lower;
}

double log_pdf_with_chol(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& lower) {
  const Eigen::VectorXd z =
      lower.triangularView<Eigen::Lower>().solve(x - mean);
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det +
                 z.squaredNorm());
}

double log_sum_exp(const Eigen::VectorXd& terms) {
  const double m = terms.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((terms.array() - m).exp().sum());
}

void check_dim(const GmmParams& gmm, const Eigen::VectorXd& x,
               const char* op) {
  require(x.size() == gmm.dim(), ErrorKind::kRejectedInput,
          std::string(op) + ": point has length " + std::to_string(x.size()) +
              ", mixture dimension is " + std::to_string(gmm.dim()));
}

}  // namespace

void validate(const GmmParams& gmm) {
  const auto L = gmm.means.size();
  require(L >= 1, ErrorKind::kSchema, "means: mixture needs a component");
  require(static_cast<std::size_t>(gmm.weights.size()) == L,
          ErrorKind::kSchema, "weights: expected " + std::to_string(L) +
                                  " entries, got " +
                                  std::to_string(gmm.weights.size()));
  require(gmm.covariances.size() == L, ErrorKind::kSchema,
          "covariances: expected " + std::to_string(L) + " matrices");
  const auto d = gmm.means.front().size();
  require(d >= 1, ErrorKind::kSchema, "means[0]: empty vector");
  for (std::size_t l = 0; l < L; ++l) {
    const auto path = "[" + std::to_string(l) + "]";
    require(gmm.weights[l] >= 0.0 && std::isfinite(gmm.weights[l]),
            ErrorKind::kSchema, "weights" + path + ": must be finite and >= 0");
    require(gmm.means[l].size() == d && gmm.means[l].allFinite(),
            ErrorKind::kSchema,
            "means" + path + ": expected " + std::to_string(d) +
                " finite entries");
    const auto& cov = gmm.covariances[l];
    require(cov.rows() == d && cov.cols() == d && cov.allFinite(),
            ErrorKind::kSchema,
            "covariances" + path + ": expected a finite " + std::to_string(d) +
                "x" + std::to_string(d) + " matrix");
    require((cov - cov.transpose()).norm() < 1e-12, ErrorKind::kSchema,
            "covariances" + path + ": not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov,
                                                      Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 1e-10,
            ErrorKind::kDegenerateTask,
            "covariances" + path + ": not positive definite");
  }
  require(std::abs(gmm.weights.sum() - 1.0) <= 1e-12, ErrorKind::kSchema,
          "weights: must sum to 1 (sum is " +
              std::to_string(gmm.weights.sum()) + ")");
}

void validate(const DenoisingTask& task) {
  validate(task.prior);
  require(task.noise_std > 0.0 && std::isfinite(task.noise_std),
          ErrorKind::kSchema, "noise_std: must be positive");
}

DenoisingTask builtin_toy_task() {
  DenoisingTask task;
  auto& p = task.prior;
  p.means = {Eigen::Vector2d(-1.0, 1.0),  Eigen::Vector2d(1.0, 1.0),
             Eigen::Vector2d(0.0, 0.0),   Eigen::Vector2d(-0.7, -1.0),
             Eigen::Vector2d(0.0, -1.2),  Eigen::Vector2d(0.7, -1.0)};
  auto m2 = [](double a, double b, double c) {
    Eigen::Matrix2d m;
    m << a, b, b, c;
    return Eigen::MatrixXd(m);
  };
  p.covariances = {m2(0.05, -0.01, 0.025), m2(0.05, 0.01, 0.025),
                   m2(0.02, 0.0, 0.03),    m2(0.15, -0.04, 0.04),
                   m2(0.15, 0.0, 0.025),   m2(0.15, 0.04, 0.04)};
  p.weights = Eigen::VectorXd::Constant(6, 0.15);
  p.weights /= p.weights.sum();
  task.noise_std = 0.4;
  return task;
}

DenoisingTask builtin_single_gaussian_task() {
  DenoisingTask task;
  Eigen::Matrix2d cov;
  cov << 0.5, 0.2, 0.2, 0.3;
  task.prior.means = {Eigen::Vector2d(0.2, -0.1)};
  task.prior.covariances = {cov};
  task.prior.weights = Eigen::VectorXd::Ones(1);
  task.noise_std = 0.4;
  return task;
}

MixtureDensity::MixtureDensity(const GmmParams& gmm) : dim_(gmm.dim()) {
  for (std::size_t l = 0; l < gmm.components(); ++l) {
    log_weights_.push_back(std::log(gmm.weights[l]));
    means_.push_back(gmm.means[l]);
    Eigen::MatrixXd lower = cholesky_or_throw(
        gmm.covariances[l], "covariances[" + std::to_string(l) + "]");
    log_norm_.push_back(-0.5 * (static_cast<double>(dim_) * kLog2Pi) -
                        lower.diagonal().array().log().sum());
    chol_lower_.push_back(std::move(lower));
  }
}

Eigen::VectorXd MixtureDensity::component_log_terms(
    const Eigen::VectorXd& x) const {
  require(x.size() == dim_, ErrorKind::kRejectedInput,
          "mixture density: point has length " + std::to_string(x.size()) +
              ", mixture dimension is " + std::to_string(dim_));
  Eigen::VectorXd terms(static_cast<Eigen::Index>(means_.size()));
  for (std::size_t l = 0; l < means_.size(); ++l) {
    const Eigen::VectorXd z =
        chol_lower_[l].triangularView<Eigen::Lower>().solve(x - means_[l]);
    terms[static_cast<Eigen::Index>(l)] =
        log_weights_[l] + log_norm_[l] - 0.5 * z.squaredNorm();
  }
  return terms;
}

double MixtureDensity::log_density(const Eigen::VectorXd& x) const {
  return log_sum_exp(component_log_terms(x));
}

double MixtureDensity::density(const Eigen::VectorXd& x) const {
  return component_log_terms(x).array().exp().sum();
}

double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& cov) {
  require(x.size() == mean.size() && cov.rows() == mean.size(),
          ErrorKind::kRejectedInput, "gaussian_log_pdf: dimension mismatch");
  return log_pdf_with_chol(x, mean, cholesky_or_throw(cov, "covariance"));
}

double prior_density(const GmmParams& gmm, const Eigen::VectorXd& x) {
  check_dim(gmm, x, "prior_density");
  return MixtureDensity(gmm).density(x);
}

Eigen::MatrixXd sample_mixture(const GmmParams& gmm, Rng& rng, Eigen::Index n,
                               std::vector<int>* labels) {
  require(n >= 1, ErrorKind::kRejectedInput, "sample count must be >= 1");
  const auto d = gmm.dim();
  std::vector<Eigen::MatrixXd> lowers;
  for (std::size_t l = 0; l < gmm.components(); ++l) {
    lowers.push_back(cholesky_or_throw(gmm.covariances[l],
                                       "covariances[" + std::to_string(l) + "]"));
  }
  std::discrete_distribution<int> pick(gmm.weights.data(),
                                       gmm.weights.data() + gmm.weights.size());
  std::normal_distribution<double> normal;
  Eigen::MatrixXd out(d, n);
  Eigen::VectorXd z(d);
  if (labels) labels->resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = pick(rng);
    for (Eigen::Index j = 0; j < d; ++j) z[j] = normal(rng);
    out.col(i) = gmm.means[l] + lowers[l].triangularView<Eigen::Lower>() * z;
    if (labels) (*labels)[static_cast<std::size_t>(i)] = l;
  }
  return out;
}

JointSamples sample_joint(const DenoisingTask& task, Rng& rng, Eigen::Index n) {
  require(task.noise_std >= 0.0, ErrorKind::kRejectedInput,
          "noise_std must be >= 0");
  JointSamples s;
  s.x = sample_mixture(task.prior, rng, n, nullptr);
  s.y = s.x;
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < s.x.rows(); ++j) {
      s.y(j, i) += task.noise_std * normal(rng);
    }
  }
  return s;
}

double log_evidence(const DenoisingTask& task, const Eigen::VectorXd& y) {
  const auto& prior = task.prior;
  check_dim(prior, y, "evidence");
  const double s2 = task.noise_std * task.noise_std;
  Eigen::VectorXd terms(static_cast<Eigen::Index>(prior.components()));
  for (std::size_t l = 0; l < prior.components(); ++l) {
    const Eigen::MatrixXd cov =
        prior.covariances[l] +
        s2 * Eigen::MatrixXd::Identity(prior.dim(), prior.dim());
    const Eigen::MatrixXd lower = cholesky_or_throw(
        cov, "covariances[" + std::to_string(l) + "] + noise");
    terms[static_cast<Eigen::Index>(l)] =
        std::log(prior.weights[l]) + log_pdf_with_chol(y, prior.means[l], lower);
  }
  return log_sum_exp(terms);
}

double evidence(const DenoisingTask& task, const Eigen::VectorXd& y) {
  return std::exp(log_evidence(task, y));
}

GmmParams posterior(const DenoisingTask& task, const Eigen::VectorXd& y) {
  const auto& prior = task.prior;
  check_dim(prior, y, "posterior");
  const auto d = prior.dim();
  const auto L = prior.components();
  const double s2 = task.noise_std * task.noise_std;
  GmmParams post;
  post.weights.resize(static_cast<Eigen::Index>(L));
  Eigen::VectorXd log_terms(static_cast<Eigen::Index>(L));
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::MatrixXd& sigma = prior.covariances[l];
    const Eigen::MatrixXd s = sigma + s2 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd lower =
        cholesky_or_throw(s, "covariances[" + std::to_string(l) + "] + noise");
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    // gain = Σ S⁻¹ (S and Σ are symmetric)
    const Eigen::MatrixXd gain = llt.solve(sigma).transpose();
    post.means.push_back(prior.means[l] + gain * (y - prior.means[l]));
    Eigen::MatrixXd cov = sigma - gain * sigma;
    cov = 0.5 * (cov + cov.transpose()).eval();
    post.covariances.push_back(std::move(cov));
    log_terms[static_cast<Eigen::Index>(l)] =
        std::log(prior.weights[l]) + log_pdf_with_chol(y, prior.means[l], lower);
  }
  const double lse = log_sum_exp(log_terms);
  require(std::isfinite(lse), ErrorKind::kDegenerateTask,
          "measurement has zero evidence under every component");
  post.weights = (log_terms.array() - lse).exp();
  post.weights /= post.weights.sum();
  return post;
}

Eigen::VectorXd posterior_mean(const GmmParams& post) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(post.dim());
  for (std::size_t l = 0; l < post.components(); ++l) {
    m += post.weights[l] * post.means[l];
  }
  return m;
}

Eigen::MatrixXd posterior_covariance(const GmmParams& post) {
  const Eigen::VectorXd m = posterior_mean(post);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(post.dim(), post.dim());
  for (std::size_t l = 0; l < post.components(); ++l) {
    const Eigen::VectorXd dm = post.means[l] - m;
    cov += post.weights[l] * (post.covariances[l] + dm * dm.transpose());
  }
  return 0.5 * (cov + cov.transpose());
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> principal_directions(
    const Eigen::MatrixXd& cov, Eigen::Index k) {
  const auto d = cov.rows();
  require(cov.cols() == d, ErrorKind::kRejectedInput,
          "principal_directions: matrix is not square");
  require(k >= 1 && k <= d, ErrorKind::kRejectedInput,
          "subspace dimension must satisfy 1 <= k <= d");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  require(es.info() == Eigen::Success, ErrorKind::kDegenerateTask,
          "eigen-decomposition of the posterior covariance failed");
  const Eigen::VectorXd& evals = es.eigenvalues();
  const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  require(evals.minCoeff() >= -1e-12 * scale, ErrorKind::kDegenerateTask,
          "posterior covariance is not positive semi-definite");

  struct Pair {
    double value;
    Eigen::VectorXd vec;
  };
  std::vector<Pair> pairs;
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd v = es.eigenvectors().col(i);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j) {
      if (std::abs(v[j]) > std::abs(v[arg]) + 1e-12) arg = j;
    }
    if (v[arg] < 0.0) v = -v;
    pairs.push_back({evals[i], std::move(v)});
  }
  auto lex_greater = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      if (a[j] != b[j]) return a[j] > b[j];
    }
    return false;
  };
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
    const double tol =
        kEigenTieTolerance * std::max({std::abs(a.value), std::abs(b.value), 1e-300});
    if (std::abs(a.value - b.value) < tol) return lex_greater(a.vec, b.vec);
    return a.value > b.value;
  });
  Eigen::MatrixXd dirs(d, k);
  Eigen::VectorXd vals(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    dirs.col(i) = pairs[static_cast<std::size_t>(i)].vec;
    vals[i] = std::max(pairs[static_cast<std::size_t>(i)].value, 0.0);
  }
  return {dirs, vals};
}

SelectedSubspace select_subspace(const GmmParams& post, Eigen::Index k) {
  auto [dirs, vals] = principal_directions(posterior_covariance(post), k);
  require(vals.minCoeff() > 0.0, ErrorKind::kDegenerateTask,
          "selected direction has zero posterior variance");
  return {Subspace(posterior_mean(post), dirs), vals.cwiseSqrt()};
}

SelectedSubspace select_subspace(const DenoisingTask& task,
                                 const Eigen::VectorXd& y, Eigen::Index k) {
  return select_subspace(posterior(task, y), k);
}

GmmParams ppd_analytic(const GmmParams& post, const Subspace& a) {
  require(a.ambient_dim() == post.dim(), ErrorKind::kRejectedInput,
          "ppd_analytic: subspace dimension does not match the posterior");
  const Eigen::MatrixXd& w = a.directions();
  GmmParams ppd;
  ppd.weights = post.weights;
  for (std::size_t l = 0; l < post.components(); ++l) {
    ppd.means.push_back(w.transpose() * (post.means[l] - a.origin()));
    Eigen::MatrixXd cov = w.transpose() * post.covariances[l] * w;
    ppd.covariances.push_back(0.5 * (cov + cov.transpose()));
  }
  return ppd;
}

double sliced_density(const GmmParams& post, const Subspace& a,
                      const Eigen::VectorXd& v) {
  require(a.ambient_dim() == post.dim(), ErrorKind::kRejectedInput,
          "sliced_density: subspace dimension does not match the posterior");
  return MixtureDensity(post).density(reconstruct(v, a));
}

Eigen::MatrixXd sample_posterior(const GmmParams& post, Rng& rng,
                                 Eigen::Index n) {
  return sample_mixture(post, rng, n, nullptr);
}

Eigen::VectorXd figure_measurement() { return Eigen::Vector2d(0.0, 1.05); }

}  // namespace ppdlab
