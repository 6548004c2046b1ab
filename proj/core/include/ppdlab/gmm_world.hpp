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
#include <vector>

#include "ppdlab/rng.hpp"
#include "ppdlab/subspace.hpp"

namespace ppdlab {

/// Gaussian mixture: prior, posterior and projected posterior all use it.
struct GmmParams {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
  std::size_t components() const { return means.size(); }
};

/// Checks the mixture invariants (weights on the simplex to 1e-12, symmetric
/// covariances with smallest eigenvalue > 1e-10). Throws kSchema with a field
/// path for shape problems and kDegenerateTask for non-PD covariances.
void validate(const GmmParams& gmm);

/// Additive-noise denoising problem y = x + noise_std * z.
struct DenoisingTask {
  GmmParams prior;
  double noise_std = 0.4;
};

void validate(const DenoisingTask& task);

/// The six-component 2D "face" mixture with σ_n = 0.4. The listed weights
/// (0.15 each) are renormalized to 1/6.
DenoisingTask builtin_toy_task();

/// One correlated 2D Gaussian with σ_n = 0.4; its projected posterior is
/// Gaussian for every measurement.
DenoisingTask builtin_single_gaussian_task();

/// Mixture density with per-component Cholesky factors computed once.
class MixtureDensity {
 public:
  explicit MixtureDensity(const GmmParams& gmm);

  double log_density(const Eigen::VectorXd& x) const;
  double density(const Eigen::VectorXd& x) const;
  /// Per-component log(π_ℓ φ_ℓ(x)).
  Eigen::VectorXd component_log_terms(const Eigen::VectorXd& x) const;

  Eigen::Index dim() const { return dim_; }

 private:
  Eigen::Index dim_;
  std::vector<double> log_weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> chol_lower_;
  std::vector<double> log_norm_;
};

/// log φ(x; μ, Σ) through a Cholesky factorization.
double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& cov);

double prior_density(const GmmParams& gmm, const Eigen::VectorXd& x);

struct JointSamples {
  Eigen::MatrixXd x;  // d × n
  Eigen::MatrixXd y;  // d × n
};

/// Ancestral draws of (x, y). Accepts noise_std = 0 (then y == x).
JointSamples sample_joint(const DenoisingTask& task, Rng& rng, Eigen::Index n);

/// p(y) = Σ π_ℓ φ(y; μ_ℓ, Σ_ℓ + σ_n² I).
double evidence(const DenoisingTask& task, const Eigen::VectorXd& y);
double log_evidence(const DenoisingTask& task, const Eigen::VectorXd& y);

/// Closed-form mixture posterior p(x | y).
GmmParams posterior(const DenoisingTask& task, const Eigen::VectorXd& y);

/// Weighted mean Σ π̃_ℓ μ̃_ℓ (the MMSE estimate).
Eigen::VectorXd posterior_mean(const GmmParams& post);

Eigen::MatrixXd posterior_covariance(const GmmParams& post);

/// Subspace spanned by the top posterior principal components, anchored at
/// the posterior mean, plus the per-direction standard deviations.
struct SelectedSubspace {
  Subspace subspace;
  Eigen::VectorXd stds;
};

inline constexpr double kEigenTieTolerance = 1e-9;

/// Top-k eigenvectors of a symmetric PSD matrix in descending eigenvalue
/// order. Each vector's largest-magnitude entry is made positive; vectors
/// whose eigenvalues agree to kEigenTieTolerance (relative) are ordered by
/// descending lexicographic comparison. Returns (vectors d×k, eigenvalues k).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> principal_directions(
    const Eigen::MatrixXd& cov, Eigen::Index k);

SelectedSubspace select_subspace(const GmmParams& post, Eigen::Index k);
SelectedSubspace select_subspace(const DenoisingTask& task,
                                 const Eigen::VectorXd& y, Eigen::Index k);

/// Per-component projection: weights π̃_ℓ, means Wᵀ(μ̃_ℓ - x₀), covariances
/// Wᵀ Σ̃_ℓ W.
GmmParams ppd_analytic(const GmmParams& post, const Subspace& a);

/// Posterior density along the subspace, p(x₀ + W v | y). Not normalized in v.
double sliced_density(const GmmParams& post, const Subspace& a,
                      const Eigen::VectorXd& v);

/// Exact ancestral samples, d × n.
Eigen::MatrixXd sample_posterior(const GmmParams& post, Rng& rng,
                                 Eigen::Index n);

/// Ancestral draws from any mixture; optionally reports each draw's component.
Eigen::MatrixXd sample_mixture(const GmmParams& gmm, Rng& rng, Eigen::Index n,
                               std::vector<int>* labels);

/// Measurement used for the figure bundle and the slice-vs-projection check:
/// the posterior there has three well-separated modes along its first PC.
Eigen::VectorXd figure_measurement();

}  // namespace ppdlab
