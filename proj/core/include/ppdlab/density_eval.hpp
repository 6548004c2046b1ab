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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppdlab/ebm_core.hpp"
#include "ppdlab/gmm_world.hpp"

namespace ppdlab {

/// Regular lattice along one axis, endpoints included.
struct GridAxis {
  double lo = -6.0;
  double hi = 6.0;
  int res = 513;

  double step() const { return (hi - lo) / (res - 1); }
  double at(int i) const { return lo + step() * i; }
  bool operator==(const GridAxis&) const = default;
};

/// Density values on a 1D or 2D lattice, row-major (axis 0 is the row).
struct DensityGrid {
  std::vector<GridAxis> axes;
  std::vector<double> values;
  std::optional<double> log_z;
  bool whitened = true;

  int dim() const { return static_cast<int>(axes.size()); }
  double cell_area() const;
  std::size_t index(int i, int j = 0) const;
  /// Lattice coordinates of a flat index.
  Eigen::VectorXd point(std::size_t flat) const;
  /// values / exp(log_z); requires a normalized grid.
  double normalized(std::size_t flat) const;
  /// Trapezoid quadrature weight of a node: cell area, halved per axis on
  /// which the node sits at the edge.
  double weight(std::size_t flat) const;
};

inline constexpr int kMinGridResolution = 16;

/// Unnormalized density at one point.
using DensityFn = std::function<double(const Eigen::VectorXd&)>;
/// Unnormalized log density for a batch of points (columns); fills `out`.
using BatchLogDensityFn =
    std::function<void(const Eigen::MatrixXd& points, Eigen::VectorXd& out)>;

DensityGrid grid_eval(const DensityFn& density, const std::vector<GridAxis>& axes);

/// Evaluates a log density on the lattice and stores exp(log p - max), so
/// energies of any magnitude stay representable. NLLs are unaffected.
DensityGrid grid_eval_log(const BatchLogDensityFn& log_density,
                          const std::vector<GridAxis>& axes);

/// Attaches log_z = log(Σ weight_i · values_i). Warns on stderr if the
/// boundary carries more than 1e-6 of the peak value (unless told not to).
DensityGrid normalize(DensityGrid g, bool warn_on_boundary = true);

bool boundary_mass_warning(const DensityGrid& g);

/// -(log(interpolated value at v) - log_z); throws kOutOfSupport outside the
/// bounds. Linear interpolation in 1D, bilinear in 2D.
double nll(const DensityGrid& g, const Eigen::VectorXd& v);

/// Interpolated normalized density at v.
double interpolate(const DensityGrid& g, const Eigen::VectorXd& v);

// ---------------------------------------------------------------------------
// Baselines

/// Centered axis-aligned Gaussian over raw coefficients with variances σ_k².
class GaussianBaseline {
 public:
  explicit GaussianBaseline(Eigen::VectorXd stds);
  double log_density(const Eigen::VectorXd& v) const;
  double density(const Eigen::VectorXd& v) const;
  const Eigen::VectorXd& stds() const { return stds_; }

 private:
  Eigen::VectorXd stds_;
};

GaussianBaseline gaussian_baseline(const Eigen::VectorXd& stds);

/// Gaussian product-kernel density estimate.
class KdeDensity {
 public:
  /// samples: K × N. Per-axis Silverman bandwidth unless `fixed_bandwidth`.
  KdeDensity(const Eigen::MatrixXd& samples,
             std::optional<double> fixed_bandwidth = std::nullopt);

  double density(const Eigen::VectorXd& v) const;
  double log_density(const Eigen::VectorXd& v) const;
  const Eigen::VectorXd& bandwidths() const { return bandwidths_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  Eigen::MatrixXd sorted_;  // columns sorted by their first coordinate
  std::vector<double> first_;
  Eigen::VectorXd bandwidths_;
  double log_norm_ = 0.0;
  std::vector<std::string> warnings_;
};

inline constexpr double kKdeBandwidthFloor = 1e-3;

/// Silverman's rule h_k = σ̂_k (4 / ((K + 2) N))^{1/(K+4)}.
Eigen::VectorXd silverman_bandwidths(const Eigen::MatrixXd& samples);

KdeDensity kde_baseline(const Eigen::MatrixXd& samples,
                        std::optional<double> fixed_bandwidth = std::nullopt);

// ---------------------------------------------------------------------------
// Model scoring

/// Everything a PPD model may use for one measurement.
struct Measurement {
  std::size_t index = 0;
  Eigen::VectorXd y;
  SelectedSubspace selection;
};

/// A projected-posterior estimator scored on whitened lattices.
class PpdModel {
 public:
  virtual ~PpdModel() = default;
  virtual std::string name() const = 0;
  /// Unnormalized log density at whitened coefficients (columns of `points`).
  virtual void log_density_whitened(const Measurement& m,
                                    const Eigen::MatrixXd& points,
                                    Eigen::VectorXd& out) const = 0;
};

/// Exact projected posterior.
class AnalyticPpdModel : public PpdModel {
 public:
  explicit AnalyticPpdModel(DenoisingTask task) : task_(std::move(task)) {}
  std::string name() const override { return "analytic"; }
  void log_density_whitened(const Measurement& m, const Eigen::MatrixXd& points,
                            Eigen::VectorXd& out) const override;

 private:
  DenoisingTask task_;
};

/// f_1 of a trained energy network; features are evaluated once per call.
class EbmPpdModel : public PpdModel {
 public:
  explicit EbmPpdModel(const EnergyNetParams& params) : params_(&params) {}
  std::string name() const override { return "ebm"; }
  void log_density_whitened(const Measurement& m, const Eigen::MatrixXd& points,
                            Eigen::VectorXd& out) const override;

 private:
  const EnergyNetParams* params_;
};

class GaussianPpdModel : public PpdModel {
 public:
  std::string name() const override { return "gaussian"; }
  void log_density_whitened(const Measurement& m, const Eigen::MatrixXd& points,
                            Eigen::VectorXd& out) const override;
};

/// KDE over `samples_per_measurement` exact posterior draws projected on A(y).
/// The draw stream for measurement i is derived from (seed, i).
class KdePpdModel : public PpdModel {
 public:
  KdePpdModel(DenoisingTask task, int samples_per_measurement,
              std::uint64_t seed)
      : task_(std::move(task)), n_(samples_per_measurement), seed_(seed) {}
  std::string name() const override { return "kde"; }
  void log_density_whitened(const Measurement& m, const Eigen::MatrixXd& points,
                            Eigen::VectorXd& out) const override;
  /// Whitened projected samples for a measurement (K × N).
  Eigen::MatrixXd whitened_samples(const Measurement& m) const;

 private:
  DenoisingTask task_;
  int n_;
  std::uint64_t seed_;
};

/// Lattice used for scoring: [-6, 6]^K at 513 (K = 1) or 257² (K = 2).
std::vector<GridAxis> default_whitened_axes(int k, int resolution = 0);

/// Normalized whitened grid of a model for one measurement.
DensityGrid model_grid(const PpdModel& model, const Measurement& m,
                       const std::vector<GridAxis>& axes,
                       bool warn_on_boundary = true);

struct TestPair {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct NllSummary {
  double mean = 0.0;
  double std_error = 0.0;
  int n = 0;
  int n_out_of_support = 0;
  int n_boundary_warnings = 0;  // grids with mass at the lattice edge
  std::vector<double> per_pair;  // NaN for out-of-support pairs
};

/// Mean NLL of x's projection in raw (unwhitened) units. The model is
/// evaluated at the whitened truth point directly and normalized by the grid's
/// log_z; Σ log σ_k converts to raw units. Requires at least two pairs.
NllSummary mean_nll(const PpdModel& model, const DenoisingTask& task,
                    std::span<const TestPair> pairs, int k,
                    int resolution = 0);

Measurement make_measurement(const DenoisingTask& task, const Eigen::VectorXd& y,
                             int k, std::size_t index = 0);

std::vector<TestPair> draw_test_pairs(const DenoisingTask& task, Rng& rng,
                                      int n);

// ---------------------------------------------------------------------------
// Grid analysis

/// Highest-density-region levels: for each mass fraction m, the largest
/// normalized density λ whose superlevel set carries at least m of the mass.
std::vector<double> mass_contour_levels(const DensityGrid& g,
                                        std::span<const double> fractions);

inline constexpr double kDefaultContourFractions[] = {0.5, 0.8, 0.9, 0.98};

/// Strict interior local maxima of a 1D grid whose topographic prominence
/// exceeds the threshold (default: 5% of the maximum value).
int count_modes(const DensityGrid& g,
                std::optional<double> min_prominence = std::nullopt);

struct GridComparison {
  double tv = 0.0;
  double kl_ab = 0.0;
};

GridComparison compare(const DensityGrid& a, const DensityGrid& b);

// ---------------------------------------------------------------------------
// Export

/// "# ppdlab-grid v1; dim=..; bounds=..; res=..; log_z=.." then one value per
/// line, row-major.
std::string grid_to_csv(const DensityGrid& g);
std::string grid_to_json(const DensityGrid& g);
DensityGrid grid_from_json(const std::string& text);

}  // namespace ppdlab
