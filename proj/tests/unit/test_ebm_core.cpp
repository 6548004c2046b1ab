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

#include <gtest/gtest.h>

#include <cmath>

#include "fd_checks.hpp"
#include "ppdlab/density_eval.hpp"
#include "ppdlab/ebm_core.hpp"
#include "ppdlab/error.hpp"
#include "ppdlab/gmm_world.hpp"

namespace ppdlab {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Fixture {
  DenoisingTask task = builtin_toy_task();
  VectorXd y{{0.5, -0.5}};
  SelectedSubspace sel = select_subspace(task, y, 1);
};

TEST(InitParams, SameSeedBitIdentical) {
  const auto a = init_params(NetDims{}, 5), b = init_params(NetDims{}, 5);
  const auto ab = a.buffers(), bb = b.buffers();
  ASSERT_EQ(ab.size(), bb.size());
  for (std::size_t i = 0; i < ab.size(); ++i) {
    ASSERT_TRUE(std::equal(ab[i].begin(), ab[i].end(), bb[i].begin(), bb[i].end()));
  }
}

TEST(InitParams, DifferentSeedsDiffer) {
  const auto a = init_params(NetDims{}, 5), b = init_params(NetDims{}, 6);
  EXPECT_NE(a.feature_layers[0].w, b.feature_layers[0].w);
  EXPECT_NE(a.head_layers[0].w, b.head_layers[0].w);
}

TEST(InitParams, Shapes) {
  NetDims dims;
  dims.d = 3;
  dims.k = 2;
  const auto p = init_params(dims, 0);
  EXPECT_EQ(p.feature_layers.front().w.cols(), 3 + 3 + 6 + 2);
  EXPECT_EQ(p.feature_layers.back().w.rows(), dims.h_dim);
  EXPECT_EQ(p.head_layers.front().w.cols(), 2);
  EXPECT_EQ(p.head_layers.back().w.rows(), 16);
  EXPECT_EQ(p.film_maps.size(), dims.head_widths.size());
  for (const auto& l : p.feature_layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.w.cols()));
    EXPECT_LE(l.w.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(l.b, VectorXd::Zero(l.b.size()));
  }
  EXPECT_TRUE(p.all_finite());
}

TEST(InitParams, RejectsZeroWidth) {
  NetDims dims;
  dims.head_widths = {8, 0};
  EXPECT_THROW(init_params(dims, 0), Error);
  dims = NetDims{};
  dims.feature_widths = {0};
  EXPECT_THROW(init_params(dims, 0), Error);
}

TEST(InitParams, LogitsOrderOneAtInit) {
  Fixture f;
  const auto p = init_params(NetDims{}, 1);
  const auto c = features(p, f.y, f.sel.subspace, f.sel.stds);
  for (double v = -3.0; v <= 3.0; v += 0.5) {
    EXPECT_LT(logits(p, c, VectorXd{{v}}).cwiseAbs().maxCoeff(), 10.0);
  }
}

TEST(Features, Deterministic) {
  Fixture f;
  const auto p = init_params(NetDims{}, 2);
  EXPECT_EQ(features(p, f.y, f.sel.subspace, f.sel.stds).h,
            features(p, f.y, f.sel.subspace, f.sel.stds).h);
}

TEST(Features, InputLayout) {
  const Subspace a(VectorXd{{1.0, 2.0, 3.0}}, MatrixXd{{1.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}});
  const VectorXd in = feature_input(VectorXd{{7.0, 8.0, 9.0}}, a, VectorXd{{0.5, 0.25}});
  const VectorXd want{{7, 8, 9, 1, 2, 3, 1, 0, 0, 0, 0, 1, 0.5, 0.25}};
  EXPECT_EQ(in, want);
}

TEST(Features, FiniteForToyInputs) {
  const auto t = builtin_toy_task();
  const auto p = init_params(NetDims{}, 3);
  Rng rng = derive_rng(3);
  const auto s = sample_joint(t, rng, 100);
  for (Eigen::Index i = 0; i < s.y.cols(); ++i) {
    const auto sel = select_subspace(t, s.y.col(i), 1);
    const auto c = features(p, s.y.col(i), sel.subspace, sel.stds);
    ASSERT_TRUE(c.h.allFinite());
    EXPECT_LT(c.h.cwiseAbs().maxCoeff(), 1e3);
  }
}

TEST(Features, RejectsDimensionMismatch) {
  const auto p = init_params(NetDims{}, 0);
  const Subspace a(VectorXd::Zero(3), MatrixXd::Identity(3, 1));
  EXPECT_THROW(features(p, VectorXd::Zero(3), a, VectorXd::Ones(1)), Error);
}

TEST(Logits, CachedFeaturesAreTransparent) {
  Fixture f;
  const auto p = fd::perturbed_params(NetDims{}, 4);
  const auto cached = features(p, f.y, f.sel.subspace, f.sel.stds);
  for (int i = 0; i < 100; ++i) {
    const VectorXd v{{-3.0 + 0.06 * i}};
    const auto fresh = features(p, f.y, f.sel.subspace, f.sel.stds);
    EXPECT_LT((logits(p, cached, v) - logits(p, fresh, v)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Logits, BatchMatchesSinglePoint) {
  Fixture f;
  const auto p = fd::perturbed_params(NetDims{}, 5);
  const auto c = features(p, f.y, f.sel.subspace, f.sel.stds);
  MatrixXd v(1, 50);
  for (int i = 0; i < 50; ++i) v(0, i) = -2.5 + 0.1 * i;
  const VectorXd batch = log_density_unnorm_batch(p, c, v);
  for (int i = 0; i < 50; ++i) {
    EXPECT_NEAR(batch[i], log_density_unnorm(p, c, v.col(i)), 1e-12);
  }
}

TEST(Logits, NeutralModulationIgnoresConditioning) {
  auto p = fd::perturbed_params(NetDims{}, 6);
  for (auto& fm : p.film_maps) {
    fm.scale_w.setZero();
    fm.scale_b.setOnes();
    fm.shift_w.setZero();
    fm.shift_b.setZero();
  }
  Rng rng = derive_rng(6);
  const Conditioning c1{fd::normal_vector(64, rng, 3.0)};
  const Conditioning c2{fd::normal_vector(64, rng, 3.0)};
  for (double v : {-1.0, 0.0, 2.0}) {
    EXPECT_EQ(logits(p, c1, VectorXd{{v}}), logits(p, c2, VectorXd{{v}}));
  }
}

TEST(Logits, DefaultShape) {
  const auto p = init_params(NetDims{}, 0);
  EXPECT_EQ(logits(p, Conditioning{VectorXd::Zero(64)}, VectorXd::Zero(1)).size(), 16);
}

TEST(Logits, LipschitzProbe) {
  const auto p = fd::perturbed_params(NetDims{}, 7);
  Rng rng = derive_rng(7);
  const Conditioning c{fd::normal_vector(64, rng)};
  const double eps = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const VectorXd v = fd::normal_vector(1, rng, 2.0);
    const VectorXd shifted = v + VectorXd::Constant(1, eps);
    const double lip = (logits(p, c, shifted) - logits(p, c, v)).cwiseAbs().maxCoeff() / eps;
    EXPECT_LT(lip, 1e3);
  }
}

TEST(Logits, RejectsDimensionMismatch) {
  const auto p = init_params(NetDims{}, 0);
  EXPECT_THROW(logits(p, Conditioning{VectorXd::Zero(64)}, VectorXd::Zero(2)), Error);
  EXPECT_THROW(logits(p, Conditioning{VectorXd::Zero(3)}, VectorXd::Zero(1)), Error);
}

TEST(GradV, LengthIsK) {
  NetDims dims;
  dims.d = 3;
  dims.k = 2;
  const auto p = init_params(dims, 0);
  EXPECT_EQ(grad_v(p, Conditioning{VectorXd::Zero(64)}, VectorXd::Zero(2), 3).size(), 2);
}

TEST(GradV, ZeroForConstantHead) {
  NetDims dims;
  dims.gaussian_anchor = false;
  auto p = fd::perturbed_params(dims, 8);
  for (auto& l : p.head_layers) l.w.setZero();
  Rng rng = derive_rng(8);
  const Conditioning c{fd::normal_vector(64, rng)};
  for (int level = 0; level < 16; ++level) {
    EXPECT_EQ(grad_v(p, c, fd::normal_vector(1, rng), level), VectorXd::Zero(1));
  }
}

TEST(GradV, AnchorContributesMinusV) {
  NetDims dims;
  auto p = fd::perturbed_params(dims, 9);
  for (auto& l : p.head_layers) l.w.setZero();
  const VectorXd v{{1.7}};
  EXPECT_NEAR(grad_v(p, Conditioning{VectorXd::Zero(64)}, v, 0)[0], -1.7, 1e-15);
}

TEST(GradV, RejectsLevelOutOfRange) {
  const auto p = init_params(NetDims{}, 0);
  EXPECT_THROW(grad_v(p, Conditioning{VectorXd::Zero(64)}, VectorXd::Zero(1), 16), Error);
  EXPECT_THROW(grad_v(p, Conditioning{VectorXd::Zero(64)}, VectorXd::Zero(1), -1), Error);
}

class GradientMatrix : public ::testing::TestWithParam<fd::Arch> {};

TEST_P(GradientMatrix, GradVMatchesFiniteDifferences) {
  EXPECT_LT(fd::worst_grad_v_error(GetParam().dims, 100, 11), 1e-4);
}

TEST_P(GradientMatrix, GradParamsMatchesFiniteDifferences) {
  EXPECT_LT(fd::worst_grad_params_error(GetParam().dims, 100, 12), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Architectures, GradientMatrix,
                         ::testing::ValuesIn(fd::architecture_matrix()),
                         [](const auto& info) { return info.param.name; });

TEST(GradParams, TinyHeadExhaustive) {
  // Smallest architecture: every parameter probed.
  const auto dims = fd::make_dims(1, 1, 2, 1, {}, {1}, false);
  auto p = fd::perturbed_params(dims, 13);
  Rng rng = derive_rng(13);
  const auto batch = fd::random_batch(dims, 4, rng);
  EnergyNetParams g;
  grad_params(p, batch, g);
  auto pb = p.buffers();
  const auto gb = g.buffers();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t i = 0; i < pb[b].size(); ++i) {
      const double o = pb[b][i];
      pb[b][i] = o + 1e-5;
      const double fp = cd_objective(p, batch).value;
      pb[b][i] = o - 1e-5;
      const double fm = cd_objective(p, batch).value;
      pb[b][i] = o;
      EXPECT_LT(fd::rel_error(gb[b][i], (fp - fm) / 2e-5), 1e-4) << b << ":" << i;
    }
  }
}

TEST(GradParams, IdenticalNegativesLeaveOnlyClassification) {
  const auto dims = fd::architecture_matrix()[1].dims;
  const auto p = fd::perturbed_params(dims, 14);
  Rng rng = derive_rng(14);
  auto batch = fd::random_batch(dims, 8, rng);
  for (auto& e : batch) e.v_neg = e.v;
  EnergyNetParams g;
  const auto obj = grad_params(p, batch, g);
  EXPECT_NEAR(obj.cd_gap, 0.0, 1e-15);
  EXPECT_NEAR(obj.value, obj.ce_loss, 1e-13);
  // Oracle for the CE-only gradient: finite differences of the mean CE.
  auto pp = p;
  auto pb = pp.buffers();
  const auto gb = g.buffers();
  for (std::size_t b = 0; b < pb.size(); b += 3) {
    const double o = pb[b][0];
    pb[b][0] = o + 1e-5;
    const double fp = cd_objective(pp, batch).ce_loss;
    pb[b][0] = o - 1e-5;
    const double fm = cd_objective(pp, batch).ce_loss;
    pb[b][0] = o;
    EXPECT_LT(fd::rel_error(gb[b][0], (fp - fm) / 2e-5), 1e-4);
  }
}

TEST(GradParams, DuplicatedBatchSameMeanGradient) {
  const auto dims = fd::architecture_matrix()[2].dims;
  const auto p = fd::perturbed_params(dims, 15);
  Rng rng = derive_rng(15);
  const auto batch = fd::random_batch(dims, 5, rng);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  EnergyNetParams g1, g2;
  const auto o1 = grad_params(p, batch, g1);
  const auto o2 = grad_params(p, doubled, g2);
  EXPECT_NEAR(o1.value, o2.value, 1e-13);
  const auto b1 = g1.buffers(), b2 = g2.buffers();
  for (std::size_t b = 0; b < b1.size(); ++b) {
    for (std::size_t i = 0; i < b1[b].size(); ++i) {
      EXPECT_NEAR(b1[b][i], b2[b][i], 1e-13 * (1.0 + std::abs(b1[b][i])));
    }
  }
}

TEST(GradParams, RejectsMisalignedBatch) {
  const auto dims = fd::architecture_matrix()[1].dims;
  const auto p = init_params(dims, 0);
  Rng rng = derive_rng(16);
  auto batch = fd::random_batch(dims, 3, rng);
  batch[1].v_neg = VectorXd::Zero(2);
  EnergyNetParams g;
  EXPECT_THROW(grad_params(p, batch, g), Error);
  batch = fd::random_batch(dims, 3, rng);
  batch[2].level = dims.levels;
  EXPECT_THROW(grad_params(p, batch, g), Error);
}

TEST(LogDensity, IsFirstLogit) {
  Fixture f;
  const auto p = fd::perturbed_params(NetDims{}, 17);
  const auto c = features(p, f.y, f.sel.subspace, f.sel.stds);
  for (double v : {-2.0, 0.3, 1.1}) {
    EXPECT_EQ(log_density_unnorm(p, c, VectorXd{{v}}), logits(p, c, VectorXd{{v}})[0]);
  }
}

TEST(LogDensity, OutputBiasShiftLeavesNllUnchanged) {
  const auto task = builtin_toy_task();
  auto p = init_params(NetDims{}, 18);
  Rng rng = derive_rng(18);
  const auto pairs = draw_test_pairs(task, rng, 5);
  const auto before = mean_nll(EbmPpdModel(p), task, pairs, 1);
  p.head_layers.back().b[0] += 3.7;
  const auto after = mean_nll(EbmPpdModel(p), task, pairs, 1);
  for (std::size_t i = 0; i < before.per_pair.size(); ++i) {
    EXPECT_NEAR(before.per_pair[i], after.per_pair[i], 1e-8);
  }
}

TEST(LogDensity, FiniteOnEvaluationGrid) {
  Fixture f;
  const auto p = fd::perturbed_params(NetDims{}, 19);
  const auto c = features(p, f.y, f.sel.subspace, f.sel.stds);
  for (const auto& axis : default_whitened_axes(1)) {
    for (int i = 0; i < axis.res; ++i) {
      ASSERT_TRUE(std::isfinite(log_density_unnorm(p, c, VectorXd{{axis.at(i)}})));
    }
  }
}

TEST(Params, ZerosLikeAndCount) {
  const auto p = init_params(NetDims{}, 0);
  const auto z = zeros_like(p);
  std::size_t n = 0;
  for (auto b : z.buffers()) {
    n += b.size();
    for (double x : b) ASSERT_EQ(x, 0.0);
  }
  EXPECT_EQ(n, p.parameter_count());
}

}  // namespace
}  // namespace ppdlab
