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

#include "ppdlab/density_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ppdlab/error.hpp"
#include "ppdlab/log.hpp"

namespace ppdlab {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kKernelRadius = 8.5;  // bandwidths; exp(-36) is below 1e-15

void check_axes(const std::vector<GridAxis>& axes) {
  require(axes.size() == 1 || axes.size() == 2, ErrorKind::kRejectedInput,
          "grids must be 1D or 2D");
  for (const auto& a : axes) {
    require(a.lo < a.hi, ErrorKind::kRejectedInput, "grid axis needs lo < hi");
    require(a.res >= kMinGridResolution, ErrorKind::kRejectedInput,
            "grid resolution must be >= " + std::to_string(kMinGridResolution));
  }
}

std::size_t lattice_size(const std::vector<GridAxis>& axes) {
  std::size_t n = 1;
  for (const auto& a : axes) n *= static_cast<std::size_t>(a.res);
  return n;
}

std::string describe_point(const Eigen::VectorXd& p) {
  std::ostringstream os;
  os << '(';
  for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
  os << ')';
  return os.str();
}

void require_normalized(const DensityGrid& g, const char* op) {
  require(g.log_z.has_value(), ErrorKind::kRejectedInput,
          std::string(op) + " needs a normalized grid");
}

// Position of v along an axis as (cell index, fraction in [0, 1]).
std::pair<int, double> locate(const GridAxis& a, double v) {
  const double s = (v - a.lo) / a.step();
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, a.res - 2);
  return {i, std::clamp(s - i, 0.0, 1.0)};
}

}  // namespace

double DensityGrid::cell_area() const {
  double area = 1.0;
  for (const auto& a : axes) area *= a.step();
  return area;
}

double DensityGrid::weight(std::size_t flat) const {
  double w = cell_area();
  if (dim() == 1) {
    if (flat == 0 || flat + 1 == values.size()) w *= 0.5;
    return w;
  }
  const auto r1 = static_cast<std::size_t>(axes[1].res);
  const std::size_t i = flat / r1, j = flat % r1;
  if (i == 0 || i + 1 == static_cast<std::size_t>(axes[0].res)) w *= 0.5;
  if (j == 0 || j + 1 == r1) w *= 0.5;
  return w;
}

std::size_t DensityGrid::index(int i, int j) const {
  if (axes.size() == 1) return static_cast<std::size_t>(i);
  return static_cast<std::size_t>(i) * static_cast<std::size_t>(axes[1].res) +
         static_cast<std::size_t>(j);
}

Eigen::VectorXd DensityGrid::point(std::size_t flat) const {
  Eigen::VectorXd p(dim());
  if (dim() == 1) {
    p[0] = axes[0].at(static_cast<int>(flat));
  } else {
    const auto r1 = static_cast<std::size_t>(axes[1].res);
    p[0] = axes[0].at(static_cast<int>(flat / r1));
    p[1] = axes[1].at(static_cast<int>(flat % r1));
  }
  return p;
}

double DensityGrid::normalized(std::size_t flat) const {
  return values[flat] * std::exp(-log_z.value());
}

DensityGrid grid_eval(const DensityFn& density,
                      const std::vector<GridAxis>& axes) {
  check_axes(axes);
  DensityGrid g;
  g.axes = axes;
  g.values.resize(lattice_size(axes));
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const Eigen::VectorXd p = g.point(i);
    const double v = density(p);
    if (!std::isfinite(v) || v < 0.0) {
      raise(ErrorKind::kPoisonedGrid,
            "density is " + std::to_string(v) + " at " + describe_point(p));
    }
    g.values[i] = v;
  }
  return g;
}

DensityGrid grid_eval_log(const BatchLogDensityFn& log_density,
                          const std::vector<GridAxis>& axes) {
  check_axes(axes);
  DensityGrid g;
  g.axes = axes;
  const std::size_t n = lattice_size(axes);
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(axes.size()),
                      static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    pts.col(static_cast<Eigen::Index>(i)) = g.point(i);
  }
  Eigen::VectorXd logs;
  log_density(pts, logs);
  require(logs.size() == static_cast<Eigen::Index>(n),
          ErrorKind::kRejectedInput, "log density returned the wrong length");
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double l = logs[static_cast<Eigen::Index>(i)];
    if (std::isnan(l) || l == std::numeric_limits<double>::infinity()) {
      raise(ErrorKind::kPoisonedGrid, "log density is " + std::to_string(l) +
                                          " at " + describe_point(g.point(i)));
    }
    max_log = std::max(max_log, l);
  }
  require(std::isfinite(max_log), ErrorKind::kZeroMass,
          "density vanishes on the whole lattice");
  g.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.values[i] = std::exp(logs[static_cast<Eigen::Index>(i)] - max_log);
  }
  return g;
}

bool boundary_mass_warning(const DensityGrid& g) {
  const double peak = *std::max_element(g.values.begin(), g.values.end());
  double edge = 0.0;
  if (g.dim() == 1) {
    edge = std::max(g.values.front(), g.values.back());
  } else {
    const int r0 = g.axes[0].res, r1 = g.axes[1].res;
    for (int i = 0; i < r0; ++i) {
      edge = std::max({edge, g.values[g.index(i, 0)], g.values[g.index(i, r1 - 1)]});
    }
    for (int j = 0; j < r1; ++j) {
      edge = std::max({edge, g.values[g.index(0, j)], g.values[g.index(r0 - 1, j)]});
    }
  }
  return edge > 1e-6 * peak;
}

DensityGrid normalize(DensityGrid g, bool warn_on_boundary) {
  check_axes(g.axes);
  double total = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) total += g.weight(i) * g.values[i];
  require(total > 0.0 && std::isfinite(total), ErrorKind::kZeroMass,
          "grid has zero total mass");
  if (warn_on_boundary && boundary_mass_warning(g)) {
    warn("grid boundary carries more than 1e-6 of the peak density; "
         "the lattice may not cover the support");
  }
  g.log_z = std::log(total);
  return g;
}

double interpolate(const DensityGrid& g, const Eigen::VectorXd& v) {
  require_normalized(g, "interpolate");
  require(v.size() == g.dim(), ErrorKind::kRejectedInput,
          "query point dimension does not match the grid");
  for (int a = 0; a < g.dim(); ++a) {
    if (!(v[a] >= g.axes[a].lo && v[a] <= g.axes[a].hi)) {
      raise(ErrorKind::kOutOfSupport,
            "point " + describe_point(v) + " lies outside the grid bounds");
    }
  }
  double value = 0.0;
  if (g.dim() == 1) {
    const auto [i, f] = locate(g.axes[0], v[0]);
    value = (1.0 - f) * g.values[g.index(i)] + f * g.values[g.index(i + 1)];
  } else {
    const auto [i, fi] = locate(g.axes[0], v[0]);
    const auto [j, fj] = locate(g.axes[1], v[1]);
    value = (1 - fi) * (1 - fj) * g.values[g.index(i, j)] +
            (1 - fi) * fj * g.values[g.index(i, j + 1)] +
            fi * (1 - fj) * g.values[g.index(i + 1, j)] +
            fi * fj * g.values[g.index(i + 1, j + 1)];
  }
  return value * std::exp(-*g.log_z);
}

double nll(const DensityGrid& g, const Eigen::VectorXd& v) {
  return -std::log(interpolate(g, v));
}

// ---------------------------------------------------------------------------

GaussianBaseline::GaussianBaseline(Eigen::VectorXd stds)
    : stds_(std::move(stds)) {
  require(stds_.size() >= 1 && (stds_.array() > 0.0).all() && stds_.allFinite(),
          ErrorKind::kRejectedInput, "gaussian baseline needs stds > 0");
}

double GaussianBaseline::log_density(const Eigen::VectorXd& v) const {
  require(v.size() == stds_.size(), ErrorKind::kRejectedInput,
          "gaussian baseline: dimension mismatch");
  const auto k = static_cast<double>(stds_.size());
  return -0.5 * k * kLog2Pi - stds_.array().log().sum() -
         0.5 * (v.array() / stds_.array()).square().sum();
}

double GaussianBaseline::density(const Eigen::VectorXd& v) const {
  return std::exp(log_density(v));
}

GaussianBaseline gaussian_baseline(const Eigen::VectorXd& stds) {
  return GaussianBaseline(stds);
}

Eigen::VectorXd silverman_bandwidths(const Eigen::MatrixXd& samples) {
  const auto k = static_cast<double>(samples.rows());
  const auto n = static_cast<double>(samples.cols());
  require(samples.cols() >= 2, ErrorKind::kRejectedInput,
          "KDE needs at least two samples");
  const Eigen::VectorXd mean = samples.rowwise().mean();
  const Eigen::VectorXd var =
      (samples.colwise() - mean).array().square().rowwise().sum() / (n - 1.0);
  const double factor = std::pow(4.0 / ((k + 2.0) * n), 1.0 / (k + 4.0));
  return var.cwiseSqrt() * factor;
}

KdeDensity::KdeDensity(const Eigen::MatrixXd& samples,
                       std::optional<double> fixed_bandwidth) {
  require(samples.cols() >= 2, ErrorKind::kRejectedInput,
          "KDE needs at least two samples");
  require(samples.allFinite(), ErrorKind::kRejectedInput,
          "KDE samples must be finite");
  const auto k = samples.rows();
  if (fixed_bandwidth) {
    require(*fixed_bandwidth > 0.0, ErrorKind::kRejectedInput,
            "KDE bandwidth must be positive");
    bandwidths_ = Eigen::VectorXd::Constant(k, *fixed_bandwidth);
  } else {
    bandwidths_ = silverman_bandwidths(samples);
    for (Eigen::Index a = 0; a < k; ++a) {
      if (bandwidths_[a] < kKdeBandwidthFloor) {
        bandwidths_[a] = kKdeBandwidthFloor;
        warnings_.push_back("axis " + std::to_string(a) +
                            " has (near) zero sample variance; bandwidth "
                            "floored at 1e-3");
        warn(warnings_.back());
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return samples(0, a) < samples(0, b);
  });
  sorted_.resize(k, samples.cols());
  first_.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    sorted_.col(static_cast<Eigen::Index>(i)) = samples.col(order[i]);
    first_[i] = samples(0, order[i]);
  }
  log_norm_ = -0.5 * static_cast<double>(k) * kLog2Pi -
              bandwidths_.array().log().sum() -
              std::log(static_cast<double>(samples.cols()));
}

double KdeDensity::density(const Eigen::VectorXd& v) const {
  const auto k = sorted_.rows();
  require(v.size() == k, ErrorKind::kRejectedInput, "KDE: dimension mismatch");
  const double r = kKernelRadius * bandwidths_[0];
  const auto lo = std::lower_bound(first_.begin(), first_.end(), v[0] - r);
  const auto hi = std::upper_bound(lo, first_.end(), v[0] + r);
  const Eigen::ArrayXd inv_h = bandwidths_.array().inverse();
  double sum = 0.0;
  for (auto it = lo; it != hi; ++it) {
    const auto i = static_cast<Eigen::Index>(it - first_.begin());
    double q = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
      const double z = (v[a] - sorted_(a, i)) * inv_h[a];
      q += z * z;
    }
    sum += std::exp(-0.5 * q);
  }
  return sum * std::exp(log_norm_);
}

double KdeDensity::log_density(const Eigen::VectorXd& v) const {
  return std::log(density(v));
}

KdeDensity kde_baseline(const Eigen::MatrixXd& samples,
                        std::optional<double> fixed_bandwidth) {
  return KdeDensity(samples, fixed_bandwidth);
}

// ---------------------------------------------------------------------------

void AnalyticPpdModel::log_density_whitened(const Measurement& m,
                                            const Eigen::MatrixXd& points,
                                            Eigen::VectorXd& out) const {
  const GmmParams ppd =
      ppd_analytic(posterior(task_, m.y), m.selection.subspace);
  const Eigen::VectorXd& s = m.selection.stds;
  GmmParams white = ppd;
  for (std::size_t l = 0; l < ppd.components(); ++l) {
    white.means[l] = ppd.means[l].cwiseQuotient(s);
    white.covariances[l] = ppd.covariances[l].cwiseQuotient(s * s.transpose());
  }
  const MixtureDensity density(white);
  out.resize(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out[i] = density.log_density(points.col(i));
  }
}

void EbmPpdModel::log_density_whitened(const Measurement& m,
                                       const Eigen::MatrixXd& points,
                                       Eigen::VectorXd& out) const {
  const Conditioning c =
      features(*params_, m.y, m.selection.subspace, m.selection.stds);
  out = log_density_unnorm_batch(*params_, c, points);
}

void GaussianPpdModel::log_density_whitened(const Measurement& m,
                                            const Eigen::MatrixXd& points,
                                            Eigen::VectorXd& out) const {
  const GaussianBaseline g(m.selection.stds);
  out.resize(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out[i] = g.log_density(points.col(i).cwiseProduct(m.selection.stds));
  }
}

Eigen::MatrixXd KdePpdModel::whitened_samples(const Measurement& m) const {
  Rng rng = derive_rng(seed_, 0x4bde, m.index);
  const Eigen::MatrixXd xs = sample_posterior(posterior(task_, m.y), rng, n_);
  const Subspace& a = m.selection.subspace;
  Eigen::MatrixXd v =
      a.directions().transpose() * (xs.colwise() - a.origin());
  return v.array().colwise() / m.selection.stds.array();
}

void KdePpdModel::log_density_whitened(const Measurement& m,
                                       const Eigen::MatrixXd& points,
                                       Eigen::VectorXd& out) const {
  const KdeDensity kde(whitened_samples(m));
  out.resize(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    out[i] = kde.log_density(points.col(i));
  }
}

std::vector<GridAxis> default_whitened_axes(int k, int resolution) {
  require(k == 1 || k == 2, ErrorKind::kRejectedInput,
          "only 1D and 2D projections are supported");
  const int res = resolution > 0 ? resolution : (k == 1 ? 513 : 257);
  return std::vector<GridAxis>(static_cast<std::size_t>(k),
                               GridAxis{-6.0, 6.0, res});
}

DensityGrid model_grid(const PpdModel& model, const Measurement& m,
                       const std::vector<GridAxis>& axes,
                       bool warn_on_boundary) {
  DensityGrid g = grid_eval_log(
      [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
        model.log_density_whitened(m, pts, out);
      },
      axes);
  g.whitened = true;
  return normalize(std::move(g), warn_on_boundary);
}

Measurement make_measurement(const DenoisingTask& task, const Eigen::VectorXd& y,
                             int k, std::size_t index) {
  return Measurement{index, y, select_subspace(task, y, k)};
}

std::vector<TestPair> draw_test_pairs(const DenoisingTask& task, Rng& rng,
                                      int n) {
  const JointSamples s = sample_joint(task, rng, n);
  std::vector<TestPair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pairs.push_back({s.x.col(i), s.y.col(i)});
  return pairs;
}

NllSummary mean_nll(const PpdModel& model, const DenoisingTask& task,
                    std::span<const TestPair> pairs, int k, int resolution) {
  require(pairs.size() >= 2, ErrorKind::kRejectedInput,
          "mean_nll needs at least two test pairs");
  const auto axes = default_whitened_axes(k, resolution);
  NllSummary s;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Measurement m = make_measurement(task, pairs[i].y, k, i);
    const Eigen::VectorXd v =
        project(pairs[i].x, m.selection.subspace).cwiseQuotient(m.selection.stds);
    const bool inside = ((v.array() >= axes[0].lo) && (v.array() <= axes[0].hi)).all();
    if (!inside) {
      ++s.n_out_of_support;
      s.per_pair.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    // The truth point rides along with the lattice in one model call and is
    // scored exactly; the grid supplies only the normalizer.
    double log_at_v = 0.0, max_log = 0.0;
    DensityGrid g = grid_eval_log(
        [&](const Eigen::MatrixXd& pts, Eigen::VectorXd& out) {
          Eigen::MatrixXd with_v(pts.rows(), pts.cols() + 1);
          with_v << pts, v;
          Eigen::VectorXd all;
          model.log_density_whitened(m, with_v, all);
          out = all.head(pts.cols());
          log_at_v = all[pts.cols()];
          max_log = out.maxCoeff();
        },
        axes);
    g = normalize(std::move(g), false);
    if (boundary_mass_warning(g)) ++s.n_boundary_warnings;
    const double value = -(log_at_v - max_log - *g.log_z) +
                         m.selection.stds.array().log().sum();
    s.per_pair.push_back(value);
    sum += value;
    sum_sq += value * value;
    ++s.n;
  }
  if (s.n_boundary_warnings > 0) {
    warn(model.name() + ": " + std::to_string(s.n_boundary_warnings) + " of " +
         std::to_string(s.n) +
         " grids carry more than 1e-6 of the peak density at the boundary");
  }
  if (s.n > 0) s.mean = sum / s.n;
  if (s.n > 1) {
    const double var = std::max(0.0, (sum_sq - s.n * s.mean * s.mean) / (s.n - 1));
    s.std_error = std::sqrt(var / s.n);
  } else {
    s.std_error = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

// ---------------------------------------------------------------------------

std::vector<double> mass_contour_levels(const DensityGrid& g,
                                        std::span<const double> fractions) {
  require_normalized(g, "mass_contour_levels");
  for (double f : fractions) {
    require(f > 0.0 && f < 1.0, ErrorKind::kRejectedInput,
            "mass fractions must lie in (0, 1)");
  }
  std::vector<std::pair<double, double>> dens(g.values.size());  // (p, mass)
  for (std::size_t i = 0; i < dens.size(); ++i) {
    dens[i] = {g.normalized(i), g.normalized(i) * g.weight(i)};
  }
  std::sort(dens.begin(), dens.end(), std::greater<>());
  std::vector<double> cumulative(dens.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dens.size(); ++i) {
    acc += dens[i].second;
    cumulative[i] = acc;
  }
  std::vector<double> levels;
  for (double f : fractions) {
    const double target = f * acc;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), target);
    const auto idx = std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative.begin()), dens.size() - 1);
    levels.push_back(dens[idx].first);
  }
  return levels;
}

int count_modes(const DensityGrid& g, std::optional<double> min_prominence) {
  require(g.dim() == 1, ErrorKind::kRejectedInput,
          "count_modes works on 1D grids");
  std::vector<double> v(g.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = g.log_z ? g.normalized(i) : g.values[i];
  }
  const double peak = *std::max_element(v.begin(), v.end());
  const double threshold = min_prominence.value_or(0.05 * peak);
  require(threshold >= 0.0, ErrorKind::kRejectedInput,
          "min_prominence must be >= 0");
  int modes = 0;
  const std::size_t n = v.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(v[i] > v[i - 1] && v[i] > v[i + 1])) continue;
    double left_min = v[i];
    for (std::size_t j = i; j-- > 0;) {
      if (v[j] > v[i]) break;
      left_min = std::min(left_min, v[j]);
    }
    double right_min = v[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      if (v[j] > v[i]) break;
      right_min = std::min(right_min, v[j]);
    }
    if (v[i] - std::max(left_min, right_min) > threshold) ++modes;
  }
  return modes;
}

GridComparison compare(const DensityGrid& a, const DensityGrid& b) {
  require(a.axes == b.axes && a.values.size() == b.values.size(),
          ErrorKind::kLatticeMismatch, "grids live on different lattices");
  require_normalized(a, "compare");
  require_normalized(b, "compare");
  GridComparison c;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double pa = a.normalized(i), pb = b.normalized(i), w = a.weight(i);
    c.tv += w * std::abs(pa - pb);
    if (pa > 0.0) c.kl_ab += w * pa * std::log(pa / std::max(pb, 1e-12));
  }
  c.tv *= 0.5;
  return c;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string grid_to_csv(const DensityGrid& g) {
  std::ostringstream os;
  os << "# ppdlab-grid v1; dim=" << g.dim() << "; bounds=";
  for (int a = 0; a < g.dim(); ++a) {
    os << (a ? "," : "") << fmt_double(g.axes[a].lo) << ':'
       << fmt_double(g.axes[a].hi);
  }
  os << "; res=";
  for (int a = 0; a < g.dim(); ++a) os << (a ? "," : "") << g.axes[a].res;
  os << "; log_z=" << (g.log_z ? fmt_double(*g.log_z) : std::string("none"))
     << '\n';
  for (double v : g.values) os << fmt_double(v) << '\n';
  return os.str();
}

std::string grid_to_json(const DensityGrid& g) {
  nlohmann::json j;
  j["format"] = "ppdlab-grid v1";
  j["dim"] = g.dim();
  j["bounds"] = nlohmann::json::array();
  j["res"] = nlohmann::json::array();
  for (const auto& a : g.axes) {
    j["bounds"].push_back({a.lo, a.hi});
    j["res"].push_back(a.res);
  }
  j["log_z"] = g.log_z ? nlohmann::json(*g.log_z) : nlohmann::json(nullptr);
  j["whitened"] = g.whitened;
  j["values"] = g.values;
  return j.dump();
}

DensityGrid grid_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DensityGrid g;
    const auto& bounds = j.at("bounds");
    const auto& res = j.at("res");
    for (std::size_t a = 0; a < bounds.size(); ++a) {
      g.axes.push_back({bounds[a].at(0).get<double>(),
                        bounds[a].at(1).get<double>(), res.at(a).get<int>()});
    }
    check_axes(g.axes);
    if (!j.at("log_z").is_null()) g.log_z = j.at("log_z").get<double>();
    g.whitened = j.value("whitened", true);
    g.values = j.at("values").get<std::vector<double>>();
    require(g.values.size() == lattice_size(g.axes), ErrorKind::kSchema,
            "values: length does not match the lattice");
    return g;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::kSchema, std::string("grid json: ") + e.what());
  }
}

}  // namespace ppdlab
