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

#include "ppdlab/ebm_core.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ppdlab/error.hpp"
#include "ppdlab/rng.hpp"

namespace ppdlab {
namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

ArrayXXd sigmoid(const ArrayXXd& z) { return 1.0 / (1.0 + (-z).exp()); }

MatrixXd silu(const MatrixXd& z) {
  return (z.array() * sigmoid(z.array())).matrix();
}

MatrixXd silu_prime(const MatrixXd& z) {
  const ArrayXXd s = sigmoid(z.array());
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

MatrixXd affine(const DenseLayer& layer, const MatrixXd& x) {
  MatrixXd out = layer.w * x;
  out.colwise() += layer.b;
  return out;
}

// Intermediate values kept for the backward pass.
struct MlpTape {
  std::vector<MatrixXd> inputs;  // input of each layer
  std::vector<MatrixXd> pre;     // pre-activations of hidden layers
};

MatrixXd feature_forward(const EnergyNetParams& p, const MatrixXd& x,
                         MlpTape* tape) {
  MatrixXd u = x;
  const auto n = p.feature_layers.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (tape) tape->inputs.push_back(u);
    MatrixXd z = affine(p.feature_layers[j], u);
    if (j + 1 == n) return z;
    u = silu(z);
    if (tape) tape->pre.push_back(std::move(z));
  }
  return u;
}

void feature_backward(const EnergyNetParams& p, const MlpTape& tape,
                      MatrixXd delta, EnergyNetParams& grad) {
  for (std::size_t j = p.feature_layers.size(); j-- > 0;) {
    if (j + 1 < p.feature_layers.size()) {
      delta = (delta.array() * silu_prime(tape.pre[j]).array()).matrix();
    }
    grad.feature_layers[j].w.noalias() += delta * tape.inputs[j].transpose();
    grad.feature_layers[j].b += delta.rowwise().sum();
    if (j > 0) delta = p.feature_layers[j].w.transpose() * delta;
  }
}

struct HeadTape {
  std::vector<MatrixXd> inputs;  // u_{j-1} per layer (incl. the output layer)
  std::vector<MatrixXd> pre;     // z_j
  std::vector<MatrixXd> act;     // SiLU(z_j)
};

MatrixXd head_forward_taped(const EnergyNetParams& p, const FilmBatch& film,
                            const MatrixXd& v, HeadTape* tape) {
  MatrixXd u = v;
  const auto hidden = p.film_maps.size();
  for (std::size_t j = 0; j < hidden; ++j) {
    if (tape) tape->inputs.push_back(u);
    MatrixXd z = affine(p.head_layers[j], u);
    MatrixXd s = silu(z);
    u = (film.gamma[j].array() * s.array() + film.beta[j].array()).matrix();
    if (tape) {
      tape->pre.push_back(std::move(z));
      tape->act.push_back(std::move(s));
    }
  }
  if (tape) tape->inputs.push_back(u);
  MatrixXd out = affine(p.head_layers[hidden], u);
  if (p.dims.gaussian_anchor) {
    const Eigen::RowVectorXd anchor = -0.5 * v.colwise().squaredNorm();
    out.rowwise() += anchor;
  }
  return out;
}

// Backpropagates d(objective)/d(out) through the head. Optionally
// accumulates parameter gradients, returns dγ/dβ, and the input gradient.
struct HeadBackward {
  std::vector<MatrixXd> d_gamma;
  std::vector<MatrixXd> d_beta;
  MatrixXd d_v;
};

HeadBackward head_backward(const EnergyNetParams& p, const FilmBatch& film,
                           const HeadTape& tape, const MatrixXd& v,
                           const MatrixXd& d_out, EnergyNetParams* grad,
                           bool want_film, bool want_input) {
  HeadBackward r;
  const auto hidden = p.film_maps.size();
  if (want_film) {
    r.d_gamma.resize(hidden);
    r.d_beta.resize(hidden);
  }
  if (grad) {
    grad->head_layers[hidden].w.noalias() +=
        d_out * tape.inputs[hidden].transpose();
    grad->head_layers[hidden].b += d_out.rowwise().sum();
  }
  MatrixXd delta = p.head_layers[hidden].w.transpose() * d_out;
  for (std::size_t j = hidden; j-- > 0;) {
    if (want_film) {
      r.d_gamma[j] = (delta.array() * tape.act[j].array()).matrix();
      r.d_beta[j] = delta;
    }
    MatrixXd dz = (delta.array() * film.gamma[j].array() *
                   silu_prime(tape.pre[j]).array())
                      .matrix();
    if (grad) {
      grad->head_layers[j].w.noalias() += dz * tape.inputs[j].transpose();
      grad->head_layers[j].b += dz.rowwise().sum();
    }
    if (j > 0 || want_input) delta = p.head_layers[j].w.transpose() * dz;
  }
  if (want_input) {
    r.d_v = std::move(delta);
    if (p.dims.gaussian_anchor) {
      const Eigen::RowVectorXd col_weight = d_out.colwise().sum();
      r.d_v -= (v.array().rowwise() * col_weight.array()).matrix();
    }
  }
  return r;
}

void check_input(const EnergyNetParams& p, const VectorXd& v) {
  require(v.size() == p.dims.k, ErrorKind::kRejectedInput,
          "coefficient vector has length " + std::to_string(v.size()) +
              ", network expects K = " + std::to_string(p.dims.k));
}

void check_conditioning(const EnergyNetParams& p, const Conditioning& c) {
  require(c.h.size() == p.dims.h_dim, ErrorKind::kRejectedInput,
          "conditioning vector has length " + std::to_string(c.h.size()) +
              ", network expects h_dim = " + std::to_string(p.dims.h_dim));
}

}  // namespace

void validate(const NetDims& dims) {
  require(dims.d >= 1 && dims.k >= 1 && dims.k <= dims.d,
          ErrorKind::kRejectedInput, "network dims need 1 <= k <= d");
  require(dims.levels >= 2, ErrorKind::kRejectedInput,
          "network needs at least two noise levels");
  require(dims.h_dim >= 1, ErrorKind::kRejectedInput, "h_dim must be >= 1");
  require(!dims.head_widths.empty(), ErrorKind::kRejectedInput,
          "head needs at least one hidden layer");
  for (int w : dims.feature_widths) {
    require(w >= 1, ErrorKind::kRejectedInput, "zero-width feature layer");
  }
  for (int w : dims.head_widths) {
    require(w >= 1, ErrorKind::kRejectedInput, "zero-width head layer");
  }
}

std::vector<std::span<double>> EnergyNetParams::buffers() {
  std::vector<std::span<double>> out;
  auto add = [&](auto& t) {
    out.emplace_back(t.data(), static_cast<std::size_t>(t.size()));
  };
  for (auto& l : feature_layers) {
    add(l.w);
    add(l.b);
  }
  for (auto& l : head_layers) {
    add(l.w);
    add(l.b);
  }
  for (auto& f : film_maps) {
    add(f.scale_w);
    add(f.scale_b);
    add(f.shift_w);
    add(f.shift_b);
  }
  return out;
}

std::vector<std::span<const double>> EnergyNetParams::buffers() const {
  auto spans = const_cast<EnergyNetParams*>(this)->buffers();
  return {spans.begin(), spans.end()};
}

std::size_t EnergyNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : buffers()) n += s.size();
  return n;
}

bool EnergyNetParams::all_finite() const {
  for (const auto& s : buffers()) {
    for (double x : s) {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

EnergyNetParams zeros_like(const EnergyNetParams& p) {
  EnergyNetParams z = p;
  for (auto s : z.buffers()) std::fill(s.begin(), s.end(), 0.0);
  return z;
}

EnergyNetParams init_params(const NetDims& dims, std::uint64_t seed) {
  validate(dims);
  Rng rng = derive_rng(seed, 0x1e17);
  auto dense = [&](int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer l;
    l.w.resize(out, in);
    for (Eigen::Index c = 0; c < l.w.cols(); ++c) {
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = u(rng);
    }
    l.b = VectorXd::Zero(out);
    return l;
  };
  EnergyNetParams p;
  p.dims = dims;
  int in = dims.feature_input_dim();
  for (int w : dims.feature_widths) {
    p.feature_layers.push_back(dense(in, w));
    in = w;
  }
  p.feature_layers.push_back(dense(in, dims.h_dim));
  in = dims.k;
  for (int w : dims.head_widths) {
    p.head_layers.push_back(dense(in, w));
    FilmMap f;
    f.scale_w = MatrixXd::Zero(w, dims.h_dim);
    f.scale_b = VectorXd::Ones(w);
    f.shift_w = MatrixXd::Zero(w, dims.h_dim);
    f.shift_b = VectorXd::Zero(w);
    p.film_maps.push_back(std::move(f));
    in = w;
  }
  p.head_layers.push_back(dense(in, dims.levels));
  return p;
}

VectorXd feature_input(const VectorXd& y, const Subspace& a,
                       const VectorXd& stds) {
  const auto d = a.ambient_dim();
  const auto k = a.rank();
  require(y.size() == d && stds.size() == k, ErrorKind::kRejectedInput,
          "feature_input: measurement/stds do not match the subspace");
  VectorXd in(2 * d + d * k + k);
  in << y, a.origin(),
      Eigen::Map<const VectorXd>(a.directions().data(), d * k), stds;
  return in;
}

MatrixXd features_batch(const EnergyNetParams& p, const MatrixXd& inputs) {
  require(inputs.rows() == p.dims.feature_input_dim(),
          ErrorKind::kRejectedInput,
          "feature input has " + std::to_string(inputs.rows()) +
              " rows, network expects " +
              std::to_string(p.dims.feature_input_dim()));
  return feature_forward(p, inputs, nullptr);
}

Conditioning features(const EnergyNetParams& p, const VectorXd& y,
                      const Subspace& a, const VectorXd& stds) {
  require(a.ambient_dim() == p.dims.d && a.rank() == p.dims.k,
          ErrorKind::kRejectedInput,
          "subspace shape does not match the network dims");
  return {features_batch(p, feature_input(y, a, stds)).col(0)};
}

FilmBatch film_batch(const EnergyNetParams& p, const MatrixXd& h) {
  FilmBatch f;
  for (const auto& m : p.film_maps) {
    MatrixXd g = m.scale_w * h;
    g.colwise() += m.scale_b;
    MatrixXd b = m.shift_w * h;
    b.colwise() += m.shift_b;
    f.gamma.push_back(std::move(g));
    f.beta.push_back(std::move(b));
  }
  return f;
}

MatrixXd head_forward(const EnergyNetParams& p, const FilmBatch& film,
                      const MatrixXd& v) {
  return head_forward_taped(p, film, v, nullptr);
}

void head_level_value_and_grad(const EnergyNetParams& p, const FilmBatch& film,
                               const MatrixXd& v, std::span<const int> levels,
                               VectorXd& values, MatrixXd& grads) {
  const auto n = v.cols();
  HeadTape tape;
  const MatrixXd out = head_forward_taped(p, film, v, &tape);
  MatrixXd d_out = MatrixXd::Zero(out.rows(), n);
  values.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = levels[static_cast<std::size_t>(i)];
    values[i] = out(t, i);
    d_out(t, i) = 1.0;
  }
  grads = head_backward(p, film, tape, v, d_out, nullptr, false, true).d_v;
}

VectorXd logits(const EnergyNetParams& p, const Conditioning& c,
                const VectorXd& v_white) {
  check_input(p, v_white);
  check_conditioning(p, c);
  return head_forward(p, film_batch(p, c.h), v_white).col(0);
}

VectorXd grad_v(const EnergyNetParams& p, const Conditioning& c,
                const VectorXd& v_white, int level) {
  check_input(p, v_white);
  check_conditioning(p, c);
  require(level >= 0 && level < p.dims.levels, ErrorKind::kRejectedInput,
          "level out of range");
  VectorXd values;
  MatrixXd grads;
  const int levels[1] = {level};
  head_level_value_and_grad(p, film_batch(p, c.h), v_white, levels, values,
                            grads);
  return grads.col(0);
}

double log_density_unnorm(const EnergyNetParams& p, const Conditioning& c,
                          const VectorXd& v_white) {
  return logits(p, c, v_white)[0];
}

VectorXd log_density_unnorm_batch(const EnergyNetParams& p,
                                  const Conditioning& c,
                                  const MatrixXd& v_white) {
  require(v_white.rows() == p.dims.k, ErrorKind::kRejectedInput,
          "coefficient rows must equal K");
  require(c.h.size() == p.dims.h_dim, ErrorKind::kRejectedInput,
          "conditioning length must equal h_dim");
  const FilmBatch film = film_batch(p, c.h);
  FilmBatch wide;
  for (std::size_t j = 0; j < film.gamma.size(); ++j) {
    wide.gamma.push_back(film.gamma[j].replicate(1, v_white.cols()));
    wide.beta.push_back(film.beta[j].replicate(1, v_white.cols()));
  }
  return head_forward(p, wide, v_white).row(0).transpose();
}

namespace {

struct BatchMatrices {
  MatrixXd inputs, v, v_neg;
  std::vector<int> levels;
};

BatchMatrices gather(const EnergyNetParams& p,
                     std::span<const CdExample> batch) {
  require(!batch.empty(), ErrorKind::kRejectedInput, "empty training batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  BatchMatrices m;
  m.inputs.resize(p.dims.feature_input_dim(), n);
  m.v.resize(p.dims.k, n);
  m.v_neg.resize(p.dims.k, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = batch[static_cast<std::size_t>(i)];
    require(e.input.size() == m.inputs.rows() && e.v.size() == p.dims.k &&
                e.v_neg.size() == p.dims.k,
            ErrorKind::kRejectedInput,
            "batch element " + std::to_string(i) + " is misaligned");
    require(e.level >= 0 && e.level < p.dims.levels,
            ErrorKind::kRejectedInput,
            "batch element " + std::to_string(i) + " has an invalid level");
    m.inputs.col(i) = e.input;
    m.v.col(i) = e.v;
    m.v_neg.col(i) = e.v_neg;
    m.levels.push_back(e.level);
  }
  return m;
}

// Fills the objective terms and d(objective)/d(out) for both passes.
CdObjective objective_terms(const MatrixXd& out_data, const MatrixXd& out_neg,
                            const std::vector<int>& levels, MatrixXd* d_data,
                            MatrixXd* d_neg) {
  const auto n = out_data.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  CdObjective obj;
  if (d_data) *d_data = MatrixXd::Zero(out_data.rows(), n);
  if (d_neg) *d_neg = MatrixXd::Zero(out_data.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = levels[static_cast<std::size_t>(i)];
    const VectorXd col = out_data.col(i);
    const double m = col.maxCoeff();
    const VectorXd e = (col.array() - m).exp();
    const double lse = m + std::log(e.sum());
    const double ce = lse - col[t];
    const double gap = col[t] - out_neg(t, i);
    obj.ce_loss += ce * inv_n;
    obj.cd_gap += gap * inv_n;
    obj.value += (ce - gap) * inv_n;
    if (d_data) {
      d_data->col(i) = (e / e.sum()) * inv_n;
      (*d_data)(t, i) -= 2.0 * inv_n;
    }
    if (d_neg) (*d_neg)(t, i) = inv_n;
  }
  return obj;
}

}  // namespace

CdObjective grad_params(const EnergyNetParams& p,
                        std::span<const CdExample> batch,
                        EnergyNetParams& grad) {
  const BatchMatrices m = gather(p, batch);
  if (grad.parameter_count() != p.parameter_count()) grad = zeros_like(p);
  else
    for (auto s : grad.buffers()) std::fill(s.begin(), s.end(), 0.0);

  MlpTape ftape;
  const MatrixXd h = feature_forward(p, m.inputs, &ftape);
  const FilmBatch film = film_batch(p, h);
  HeadTape tape_data, tape_neg;
  const MatrixXd out_data = head_forward_taped(p, film, m.v, &tape_data);
  const MatrixXd out_neg = head_forward_taped(p, film, m.v_neg, &tape_neg);
  MatrixXd d_data, d_neg;
  const CdObjective obj =
      objective_terms(out_data, out_neg, m.levels, &d_data, &d_neg);

  const HeadBackward bd =
      head_backward(p, film, tape_data, m.v, d_data, &grad, true, false);
  const HeadBackward bn =
      head_backward(p, film, tape_neg, m.v_neg, d_neg, &grad, true, false);

  MatrixXd d_h = MatrixXd::Zero(h.rows(), h.cols());
  for (std::size_t j = 0; j < p.film_maps.size(); ++j) {
    const MatrixXd dg = bd.d_gamma[j] + bn.d_gamma[j];
    const MatrixXd db = bd.d_beta[j] + bn.d_beta[j];
    auto& gf = grad.film_maps[j];
    gf.scale_w.noalias() += dg * h.transpose();
    gf.scale_b += dg.rowwise().sum();
    gf.shift_w.noalias() += db * h.transpose();
    gf.shift_b += db.rowwise().sum();
    d_h.noalias() += p.film_maps[j].scale_w.transpose() * dg;
    d_h.noalias() += p.film_maps[j].shift_w.transpose() * db;
  }
  feature_backward(p, ftape, std::move(d_h), grad);
  return obj;
}

CdObjective cd_objective(const EnergyNetParams& p,
                         std::span<const CdExample> batch) {
  const BatchMatrices m = gather(p, batch);
  const MatrixXd h = feature_forward(p, m.inputs, nullptr);
  const FilmBatch film = film_batch(p, h);
  return objective_terms(head_forward(p, film, m.v),
                         head_forward(p, film, m.v_neg), m.levels, nullptr,
                         nullptr);
}

}  // namespace ppdlab
