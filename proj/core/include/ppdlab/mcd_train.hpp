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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ppdlab/density_eval.hpp"
#include "ppdlab/ebm_core.hpp"
#include "ppdlab/error.hpp"
#include "ppdlab/gmm_world.hpp"
#include "ppdlab/rng.hpp"

namespace ppdlab {

/// Mixing coefficients α_1 = 1 > ... > α_T = 0 and the level prior p(t).
/// Levels are 0-based in code: level 0 is the clean distribution.
struct NoiseSchedule {
  std::vector<double> alphas;
  std::vector<double> level_prior;

  int levels() const { return static_cast<int>(alphas.size()); }
};

void validate(const NoiseSchedule& sched);

/// α_t = cos(((t-1)/(T-1)) π/2) with a uniform level prior.
NoiseSchedule default_schedule(int levels);

enum class LrDecay { kNone, kCosine };

struct TrainConfig {
  double learning_rate = 1e-3;
  LrDecay lr_decay = LrDecay::kNone;  // cosine: lr · ½(1 + cos(π s / total_steps))
  int batch_size = 128;
  int total_steps = 6000;
  int langevin_steps = 20;
  double langevin_step_size = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  int eval_every = 1000;
  int val_pairs = 64;
  int val_resolution = 0;  // 0: scoring default (513 / 257²)
  int threads = 1;
  NetDims net;  // d and k are overwritten from the task
};

void validate(const TrainConfig& cfg);

Eigen::VectorXd whiten(const Eigen::VectorXd& v, const Eigen::VectorXd& stds);
Eigen::VectorXd unwhiten(const Eigen::VectorXd& v_white,
                         const Eigen::VectorXd& stds);

/// ṽ = α_t v + √(1 - α_t²) n.
Eigen::VectorXd mix(const Eigen::VectorXd& v_white, const Eigen::VectorXd& n,
                    int level, const NoiseSchedule& sched);

/// Batched log density with gradient, one chain per column.
class LangevinTarget {
 public:
  virtual ~LangevinTarget() = default;
  virtual void evaluate(const Eigen::MatrixXd& v, Eigen::VectorXd& log_p,
                        Eigen::MatrixXd& grad) const = 0;
};

/// f_{level_i} of the energy network for chain i with its own conditioning.
class EnergyTarget : public LangevinTarget {
 public:
  EnergyTarget(const EnergyNetParams& params, FilmBatch film,
               std::vector<int> levels);
  void evaluate(const Eigen::MatrixXd& v, Eigen::VectorXd& log_p,
                Eigen::MatrixXd& grad) const override;

 private:
  const EnergyNetParams* params_;
  FilmBatch film_;
  std::vector<int> levels_;
};

struct ChainBatchResult {
  Eigen::MatrixXd v;
  Eigen::VectorXd acceptance;  // per chain, fraction of accepted proposals
};

/// Metropolis-adjusted Langevin: proposal v' = v + (ε²/2)∇log p(v) + ε ξ,
/// accepted with min(1, p(v') q(v|v') / (p(v) q(v'|v))). Chain i draws only
/// from rngs[i]. Throws kChainDiverged on non-finite energies.
ChainBatchResult langevin_mh_batch(const LangevinTarget& target,
                                   Eigen::MatrixXd v_init, int steps,
                                   double step_size, std::span<Rng> rngs);

struct LangevinResult {
  Eigen::VectorXd v;
  double acceptance = 0.0;
};

LangevinResult langevin_mh(const LangevinTarget& target,
                           const Eigen::VectorXd& v_init, int steps,
                           double step_size, Rng& rng);

LangevinResult langevin_mh(const EnergyNetParams& p, const Conditioning& c,
                           int level, const Eigen::VectorXd& v_init, int steps,
                           double step_size, Rng& rng);

/// Long single chain: `burn_in` discarded steps, then `n_keep` states taken
/// every `thin` steps (K × n_keep).
Eigen::MatrixXd run_chain(const LangevinTarget& target, Eigen::VectorXd v0,
                          int burn_in, int n_keep, int thin, double step_size,
                          Rng& rng, double* acceptance = nullptr);

struct AdamState {
  EnergyNetParams m;
  EnergyNetParams v;
  long long step = 0;
};

AdamState make_adam_state(const EnergyNetParams& p);

void adam_update(EnergyNetParams& p, const EnergyNetParams& grad,
                 AdamState& state, const TrainConfig& cfg);

/// One (x, y) draw prepared for training.
struct TrainingExample {
  Eigen::VectorXd input;  // feature_input(y, A(y), σ)
  Eigen::VectorXd v;      // raw coefficients Wᵀ(x - x₀)
  Eigen::VectorXd stds;
};

TrainingExample make_training_example(const DenoisingTask& task,
                                      const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& y, int k);

struct StepDiagnostics {
  double cd_gap = 0.0;
  double ce_loss = 0.0;
  double acceptance = 0.0;
  double objective = 0.0;
};

/// One multilevel-CD update. Per element i, randomness comes from the stream
/// (cfg.seed, step, i), so results do not depend on thread count.
StepDiagnostics cd_step(EnergyNetParams& params, AdamState& adam,
                        std::span<const TrainingExample> batch,
                        const NoiseSchedule& sched, const TrainConfig& cfg,
                        long long step);

struct TrainLogRecord {
  long long step = 0;
  double cd_gap = 0.0;
  double ce_loss = 0.0;
  double acceptance = 0.0;
  std::optional<double> val_nll;
};

struct TrainResult {
  EnergyNetParams params;
  std::vector<TrainLogRecord> log;
  double initial_val_nll = 0.0;
};

/// Raised when training cannot continue (non-finite loss, or a diverged
/// chain with kind kChainDiverged); carries the last finite parameters.
class TrainingFailed : public Error {
 public:
  TrainingFailed(const std::string& what, EnergyNetParams last_good,
                 long long step, ErrorKind kind = ErrorKind::kTrainingFailed)
      : Error(kind, what),
        last_good_(std::move(last_good)),
        step_(step) {}
  const EnergyNetParams& last_good() const { return last_good_; }
  long long step() const { return step_; }

 private:
  EnergyNetParams last_good_;
  long long step_;
};

/// Held-out pairs used for validation NLL during training.
std::vector<TestPair> validation_pairs(const DenoisingTask& task,
                                       const TrainConfig& cfg);

using TrainCallback = std::function<void(const TrainLogRecord&)>;

/// Trains on fresh (x, y) draws from the task. `on_record` sees every log
/// record as it is produced.
TrainResult train(const DenoisingTask& task, int k, const NoiseSchedule& sched,
                  const TrainConfig& cfg, const TrainCallback& on_record = {});

/// Worker count from PPDLAB_THREADS (defaults to 1).
int threads_from_env();

}  // namespace ppdlab
