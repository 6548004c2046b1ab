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

#include <benchmark/benchmark.h>

#include "ppdlab/density_eval.hpp"
#include "ppdlab/ebm_core.hpp"
#include "ppdlab/gmm_world.hpp"
#include "ppdlab/log.hpp"
#include "ppdlab/mcd_train.hpp"

namespace ppdlab {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Fixture {
  DenoisingTask task = builtin_toy_task();
  Measurement m = make_measurement(task, figure_measurement(), 1);
  NetDims dims = [] {
    NetDims d;
    d.d = 2;
    d.k = 1;
    return d;
  }();
  EnergyNetParams params = init_params(dims, 1);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Posterior(benchmark::State& state) {
  const auto& f = fixture();
  const VectorXd y = figure_measurement();
  for (auto _ : state) benchmark::DoNotOptimize(posterior(f.task, y));
}
BENCHMARK(BM_Posterior);

void BM_Features(benchmark::State& state) {
  const auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        features(f.params, f.m.y, f.m.selection.subspace, f.m.selection.stds));
  }
}
BENCHMARK(BM_Features);

void BM_HeadBatch(benchmark::State& state) {
  const auto& f = fixture();
  const Conditioning c =
      features(f.params, f.m.y, f.m.selection.subspace, f.m.selection.stds);
  const MatrixXd pts = MatrixXd::Random(1, state.range(0)) * 4.0;
  for (auto _ : state) benchmark::DoNotOptimize(log_density_unnorm_batch(f.params, c, pts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HeadBatch)->Arg(64)->Arg(513);

void BM_CdStep(benchmark::State& state) {
  set_warnings_enabled(false);
  const auto& f = fixture();
  TrainConfig cfg;
  cfg.batch_size = static_cast<int>(state.range(0));
  Rng rng = derive_rng(3);
  const JointSamples s = sample_joint(f.task, rng, cfg.batch_size);
  std::vector<TrainingExample> batch;
  for (Eigen::Index i = 0; i < s.x.cols(); ++i) {
    batch.push_back(make_training_example(f.task, s.x.col(i), s.y.col(i), 1));
  }
  EnergyNetParams p = f.params;
  AdamState adam = make_adam_state(p);
  const NoiseSchedule sched = default_schedule(16);
  long long step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(cd_step(p, adam, batch, sched, cfg, ++step));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CdStep)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_AnalyticGrid(benchmark::State& state) {
  const auto& f = fixture();
  const int k = static_cast<int>(state.range(0));
  const Measurement m = make_measurement(f.task, figure_measurement(), k);
  const auto axes = default_whitened_axes(k);
  const AnalyticPpdModel model(f.task);
  for (auto _ : state) benchmark::DoNotOptimize(model_grid(model, m, axes, false));
}
BENCHMARK(BM_AnalyticGrid)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_EbmGrid(benchmark::State& state) {
  const auto& f = fixture();
  const EbmPpdModel model(f.params);
  const auto axes = default_whitened_axes(1);
  for (auto _ : state) benchmark::DoNotOptimize(model_grid(model, f.m, axes, false));
}
BENCHMARK(BM_EbmGrid)->Unit(benchmark::kMillisecond);

void BM_KdeGrid(benchmark::State& state) {
  const auto& f = fixture();
  const KdePpdModel model(f.task, static_cast<int>(state.range(0)), 5);
  const auto axes = default_whitened_axes(1);
  for (auto _ : state) benchmark::DoNotOptimize(model_grid(model, f.m, axes, false));
}
BENCHMARK(BM_KdeGrid)->Arg(100)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace ppdlab

BENCHMARK_MAIN();
