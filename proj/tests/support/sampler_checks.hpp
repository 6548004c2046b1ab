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

// Known 1D targets for the Langevin-MH sampler and a histogram TV check.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ppdlab/mcd_train.hpp"

namespace ppdlab::sampler {

/// Hard-wired log density with analytic gradient, applied per column.
class FnTarget : public LangevinTarget {
 public:
  using Fn = std::function<void(double v, double& log_p, double& grad)>;
  explicit FnTarget(Fn fn) : fn_(std::move(fn)) {}
  void evaluate(const Eigen::MatrixXd& v, Eigen::VectorXd& log_p,
                Eigen::MatrixXd& grad) const override {
    log_p.resize(v.cols());
    grad.resize(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.cols(); ++i) fn_(v(0, i), log_p[i], grad(0, i));
  }

 private:
  Fn fn_;
};

inline FnTarget standard_normal() {
  return FnTarget([](double v, double& lp, double& g) {
    lp = -0.5 * v * v;
    g = -v;
  });
}

struct Bimodal {
  double m = 1.5, s = 0.6;
  double pdf(double v) const {
    return 0.5 * oracle::normal1(v, -m, s * s) + 0.5 * oracle::normal1(v, m, s * s);
  }
};

inline FnTarget bimodal_target(Bimodal b) {
  return FnTarget([b](double v, double& lp, double& g) {
    const double a = oracle::normal1(v, -b.m, b.s * b.s);
    const double c = oracle::normal1(v, b.m, b.s * b.s);
    lp = std::log(0.5 * a + 0.5 * c);
    g = (a * (-(v + b.m)) + c * (-(v - b.m))) / (b.s * b.s) / (a + c);
  });
}

/// Runs `chains` independent chains, discards `burn_in` steps, then keeps
/// every `thin`-th state until `n_keep` states are collected in total.
inline std::vector<double> draw_states(const LangevinTarget& target, int chains,
                                       int burn_in, int n_keep, int thin,
                                       double step_size, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_keep));
  const int per_chain = n_keep / chains;
  for (int c = 0; c < chains; ++c) {
    Rng rng = derive_rng(seed, 0x5a, static_cast<std::uint64_t>(c));
    std::normal_distribution<double> init(0.0, 2.0);
    const Eigen::MatrixXd s = run_chain(target, Eigen::VectorXd::Constant(1, init(rng)),
                                        burn_in, per_chain, thin, step_size, rng);
    for (Eigen::Index i = 0; i < s.cols(); ++i) out.push_back(s(0, i));
  }
  return out;
}

/// TV between a histogram of `states` and the exact bin masses of `pdf`
/// over [lo, hi] (bin masses by fine midpoint quadrature; tails beyond the
/// range are folded into the end bins on both sides).
inline double histogram_tv(const std::vector<double>& states,
                           const std::function<double(double)>& pdf, double lo,
                           double hi, int bins) {
  const double w = (hi - lo) / bins;
  std::vector<double> emp(bins, 0.0), exact(bins, 0.0);
  for (double s : states) {
    const int b = std::clamp(static_cast<int>(std::floor((s - lo) / w)), 0, bins - 1);
    emp[b] += 1.0 / static_cast<double>(states.size());
  }
  const int sub = 200;
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    for (int j = 0; j < sub; ++j) exact[b] += pdf(lo + w * (b + (j + 0.5) / sub)) * w / sub;
    total += exact[b];
  }
  const double tail = 1.0 - total;
  exact.front() += 0.5 * tail;
  exact.back() += 0.5 * tail;
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += std::abs(emp[b] - exact[b]);
  return 0.5 * tv;
}

}  // namespace ppdlab::sampler
