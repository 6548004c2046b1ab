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
#include <cstdint>
#include <span>
#include <vector>

#include "ppdlab/subspace.hpp"

namespace ppdlab {

/// Architecture of the conditional energy network.
///
/// The feature extractor is an MLP over concat(y, x₀, vec(W), σ₁..σ_K) that
/// produces a conditioning vector h. The head maps whitened coefficients v
/// through `head_widths.size()` hidden layers, each computing
///   u ← γ(h) ⊙ SiLU(A u + a) + β(h),
/// and a final linear layer to `levels` outputs f_1..f_T. With
/// `gaussian_anchor` set, every output additionally carries a fixed
/// -½‖v‖² term, so the learned part models a log-ratio to N(0, I).
struct NetDims {
  int d = 2;
  int k = 1;
  int levels = 16;
  int h_dim = 64;
  std::vector<int> feature_widths{128, 128, 128};
  std::vector<int> head_widths{64, 64, 64, 64};
  bool gaussian_anchor = true;

  int feature_input_dim() const { return 2 * d + d * k + k; }
};

void validate(const NetDims& dims);

struct DenseLayer {
  Eigen::MatrixXd w;  // out × in
  Eigen::VectorXd b;
};

/// γ = scale_w h + scale_b, β = shift_w h + shift_b for one head layer.
struct FilmMap {
  Eigen::MatrixXd scale_w;
  Eigen::VectorXd scale_b;
  Eigen::MatrixXd shift_w;
  Eigen::VectorXd shift_b;
};

/// All weights of the network. Gradients use the same type.
struct EnergyNetParams {
  NetDims dims;
  std::vector<DenseLayer> feature_layers;  // last layer emits h
  std::vector<DenseLayer> head_layers;     // last layer emits the T logits
  std::vector<FilmMap> film_maps;          // one per hidden head layer

  /// Every tensor as a flat span, in a fixed canonical order.
  std::vector<std::span<double>> buffers();
  std::vector<std::span<const double>> buffers() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Same architecture, every entry zero.
EnergyNetParams zeros_like(const EnergyNetParams& p);

/// Weights ~ U(-1/√fan_in, 1/√fan_in), biases zero, FiLM maps at identity
/// (γ ≡ 1, β ≡ 0). Deterministic in `seed`.
EnergyNetParams init_params(const NetDims& dims, std::uint64_t seed);

/// Cached conditioning vector h for one measurement.
struct Conditioning {
  Eigen::VectorXd h;
};

/// concat(y, origin, vec(directions) column-major, stds).
Eigen::VectorXd feature_input(const Eigen::VectorXd& y, const Subspace& a,
                              const Eigen::VectorXd& stds);

Conditioning features(const EnergyNetParams& p, const Eigen::VectorXd& y,
                      const Subspace& a, const Eigen::VectorXd& stds);

/// All T outputs at whitened coefficients v.
Eigen::VectorXd logits(const EnergyNetParams& p, const Conditioning& c,
                       const Eigen::VectorXd& v_white);

/// ∇_v f_level(v) (level is 0-based: 0 is the clean level).
Eigen::VectorXd grad_v(const EnergyNetParams& p, const Conditioning& c,
                       const Eigen::VectorXd& v_white, int level);

/// f_1: unnormalized log projected-posterior density in whitened units.
double log_density_unnorm(const EnergyNetParams& p, const Conditioning& c,
                          const Eigen::VectorXd& v_white);

/// f_1 at every column of V (K × N) for one cached conditioning.
Eigen::VectorXd log_density_unnorm_batch(const EnergyNetParams& p,
                                         const Conditioning& c,
                                         const Eigen::MatrixXd& v_white);

// ---------------------------------------------------------------------------
// Batched evaluation. Column i of every matrix belongs to batch element i.

/// Feature MLP on a batch of inputs (in × B) → H (h_dim × B).
Eigen::MatrixXd features_batch(const EnergyNetParams& p,
                               const Eigen::MatrixXd& inputs);

/// Per-column modulation for every hidden head layer.
struct FilmBatch {
  std::vector<Eigen::MatrixXd> gamma;  // width × B
  std::vector<Eigen::MatrixXd> beta;
};

FilmBatch film_batch(const EnergyNetParams& p, const Eigen::MatrixXd& h);

/// Head forward on V (K × B) → T × B.
Eigen::MatrixXd head_forward(const EnergyNetParams& p, const FilmBatch& film,
                             const Eigen::MatrixXd& v);

/// Energies f_{level_i}(v_i) and their v-gradients for each column.
void head_level_value_and_grad(const EnergyNetParams& p, const FilmBatch& film,
                               const Eigen::MatrixXd& v,
                               std::span<const int> levels,
                               Eigen::VectorXd& values, Eigen::MatrixXd& grads);

/// One element of a contrastive training batch.
struct CdExample {
  Eigen::VectorXd input;  // feature_input(y, A(y), σ)
  Eigen::VectorXd v;      // mixed data point ṽ (whitened)
  Eigen::VectorXd v_neg;  // contrastive sample (treated as a constant)
  int level = 0;          // 0-based
};

struct CdObjective {
  double value = 0.0;    // mean of [f_t(ṽ_neg) - f_t(ṽ) + CE]
  double cd_gap = 0.0;   // mean of f_t(ṽ) - f_t(ṽ_neg)
  double ce_loss = 0.0;  // mean of -log Softmax(f(ṽ))_t
};

/// Gradient of the batch-mean objective with respect to every parameter,
/// through the head and the feature extractor.
CdObjective grad_params(const EnergyNetParams& p,
                        std::span<const CdExample> batch,
                        EnergyNetParams& grad);

/// Objective value only (used by finite-difference checks).
CdObjective cd_objective(const EnergyNetParams& p,
                         std::span<const CdExample> batch);

}  // namespace ppdlab
