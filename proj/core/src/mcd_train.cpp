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

#include "ppdlab/mcd_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>
#include <thread>

#include "ppdlab/density_eval.hpp"

namespace ppdlab {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Chains are advanced in fixed-size column blocks so that the floating-point
// work per chain is identical for any worker count.
constexpr Eigen::Index kChainBlock = 32;

constexpr std::uint64_t kCdStream = 1;
constexpr std::uint64_t kDataStream = 2;

template <typename Fn>
void parallel_blocks(Eigen::Index n_blocks, int threads, Fn&& fn) {
  if (threads <= 1 || n_blocks <= 1) {
    for (Eigen::Index b = 0; b < n_blocks; ++b) fn(b);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const auto workers = std::min<Eigen::Index>(threads, n_blocks);
  for (Eigen::Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Eigen::Index b = w; b < n_blocks; b += workers) fn(b);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

FilmBatch slice(const FilmBatch& f, Eigen::Index start, Eigen::Index len) {
  FilmBatch s;
  for (std::size_t j = 0; j < f.gamma.size(); ++j) {
    s.gamma.push_back(f.gamma[j].middleCols(start, len));
    s.beta.push_back(f.beta[j].middleCols(start, len));
  }
  return s;
}

}  // namespace

void validate(const NoiseSchedule& sched) {
  const int T = sched.levels();
  require(T >= 2, ErrorKind::kRejectedInput, "schedule needs T >= 2 levels");
  require(static_cast<int>(sched.level_prior.size()) == T,
          ErrorKind::kRejectedInput, "level_prior length must equal T");
  require(sched.alphas.front() == 1.0 && sched.alphas.back() == 0.0,
          ErrorKind::kRejectedInput, "alphas must run from exactly 1 to 0");
  for (int t = 1; t < T; ++t) {
    require(sched.alphas[static_cast<std::size_t>(t)] <
                sched.alphas[static_cast<std::size_t>(t - 1)],
            ErrorKind::kRejectedInput, "alphas must be strictly decreasing");
  }
  double sum = 0.0;
  for (double p : sched.level_prior) {
    require(p >= 0.0, ErrorKind::kRejectedInput, "level_prior must be >= 0");
    sum += p;
  }
  require(std::abs(sum - 1.0) < 1e-12, ErrorKind::kRejectedInput,
          "level_prior must sum to 1");
}

NoiseSchedule default_schedule(int levels) {
  require(levels >= 2, ErrorKind::kRejectedInput,
          "schedule needs T >= 2 levels");
  NoiseSchedule s;
  for (int t = 0; t < levels; ++t) {
    const double frac = static_cast<double>(t) / (levels - 1);
    s.alphas.push_back(std::cos(frac * std::numbers::pi / 2.0));
  }
  s.alphas.front() = 1.0;
  s.alphas.back() = 0.0;  // cos(π/2) is 6e-17 in floating point
  s.level_prior.assign(static_cast<std::size_t>(levels), 1.0 / levels);
  return s;
}

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate >= 0.0 && cfg.batch_size >= 1 &&
              cfg.total_steps >= 0 && cfg.langevin_steps >= 1 &&
              cfg.langevin_step_size > 0.0 && cfg.adam_beta1 >= 0.0 &&
              cfg.adam_beta1 < 1.0 && cfg.adam_beta2 >= 0.0 &&
              cfg.adam_beta2 < 1.0 && cfg.adam_epsilon > 0.0 &&
              cfg.eval_every >= 1 && cfg.val_pairs >= 2 && cfg.threads >= 1,
          ErrorKind::kRejectedInput, "invalid training configuration");
}

VectorXd whiten(const VectorXd& v, const VectorXd& stds) {
  require(v.size() == stds.size(), ErrorKind::kRejectedInput,
          "whiten: dimension mismatch");
  require((stds.array() > 0.0).all(), ErrorKind::kRejectedInput,
          "whiten: stds must be positive");
  return v.cwiseQuotient(stds);
}

VectorXd unwhiten(const VectorXd& v_white, const VectorXd& stds) {
  require(v_white.size() == stds.size(), ErrorKind::kRejectedInput,
          "unwhiten: dimension mismatch");
  require((stds.array() > 0.0).all(), ErrorKind::kRejectedInput,
          "unwhiten: stds must be positive");
  return v_white.cwiseProduct(stds);
}

VectorXd mix(const VectorXd& v_white, const VectorXd& n, int level,
             const NoiseSchedule& sched) {
  require(level >= 0 && level < sched.levels(), ErrorKind::kRejectedInput,
          "level out of range");
  require(v_white.size() == n.size(), ErrorKind::kRejectedInput,
          "mix: dimension mismatch");
  const double a = sched.alphas[static_cast<std::size_t>(level)];
  return a * v_white + std::sqrt(std::max(0.0, 1.0 - a * a)) * n;
}

EnergyTarget::EnergyTarget(const EnergyNetParams& params, FilmBatch film,
                           std::vector<int> levels)
    : params_(&params), film_(std::move(film)), levels_(std::move(levels)) {}

void EnergyTarget::evaluate(const MatrixXd& v, VectorXd& log_p,
                            MatrixXd& grad) const {
  head_level_value_and_grad(*params_, film_, v, levels_, log_p, grad);
}

ChainBatchResult langevin_mh_batch(const LangevinTarget& target,
                                   MatrixXd v_init, int steps,
                                   double step_size, std::span<Rng> rngs) {
  require(steps >= 1, ErrorKind::kRejectedInput, "langevin needs steps >= 1");
  require(step_size > 0.0, ErrorKind::kRejectedInput,
          "langevin step size must be positive");
  const auto k = v_init.rows();
  const auto n = v_init.cols();
  require(static_cast<Eigen::Index>(rngs.size()) == n,
          ErrorKind::kRejectedInput, "one generator per chain required");

  const double drift = 0.5 * step_size * step_size;
  const double inv_two_var = 1.0 / (2.0 * step_size * step_size);
  std::vector<std::normal_distribution<double>> normal(
      static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  MatrixXd v = std::move(v_init);
  VectorXd f, f_prop;
  MatrixXd g, g_prop;
  target.evaluate(v, f, g);
  require(f.allFinite() && g.allFinite(), ErrorKind::kChainDiverged,
          "non-finite energy at the chain start");

  VectorXd accepted = VectorXd::Zero(n);
  MatrixXd xi(k, n);
  for (int s = 0; s < steps; ++s) {
    std::vector<double> u(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& rng = rngs[static_cast<std::size_t>(i)];
      for (Eigen::Index a = 0; a < k; ++a) {
        xi(a, i) = normal[static_cast<std::size_t>(i)](rng);
      }
      u[static_cast<std::size_t>(i)] = uniform(rng);
    }
    const MatrixXd proposal = v + drift * g + step_size * xi;
    target.evaluate(proposal, f_prop, g_prop);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(f_prop[i]) || !g_prop.col(i).allFinite()) {
        raise(ErrorKind::kChainDiverged,
              "non-finite energy at Langevin step " + std::to_string(s));
      }
      const double fwd = (step_size * xi.col(i)).squaredNorm();
      const double bwd =
          (v.col(i) - proposal.col(i) - drift * g_prop.col(i)).squaredNorm();
      const double log_ratio =
          f_prop[i] - f[i] - bwd * inv_two_var + fwd * inv_two_var;
      if (std::log(u[static_cast<std::size_t>(i)]) < log_ratio) {
        v.col(i) = proposal.col(i);
        f[i] = f_prop[i];
        g.col(i) = g_prop.col(i);
        accepted[i] += 1.0;
      }
    }
  }
  return {std::move(v), accepted / static_cast<double>(steps)};
}

LangevinResult langevin_mh(const LangevinTarget& target, const VectorXd& v_init,
                           int steps, double step_size, Rng& rng) {
  std::span<Rng> one(&rng, 1);
  auto r = langevin_mh_batch(target, v_init, steps, step_size, one);
  return {r.v.col(0), r.acceptance[0]};
}

LangevinResult langevin_mh(const EnergyNetParams& p, const Conditioning& c,
                           int level, const VectorXd& v_init, int steps,
                           double step_size, Rng& rng) {
  require(level >= 0 && level < p.dims.levels, ErrorKind::kRejectedInput,
          "level out of range");
  require(v_init.size() == p.dims.k, ErrorKind::kRejectedInput,
          "chain start has the wrong dimension");
  EnergyTarget target(p, film_batch(p, c.h), {level});
  return langevin_mh(target, v_init, steps, step_size, rng);
}

MatrixXd run_chain(const LangevinTarget& target, VectorXd v0, int burn_in,
                   int n_keep, int thin, double step_size, Rng& rng,
                   double* acceptance) {
  require(burn_in >= 0 && n_keep >= 1 && thin >= 1, ErrorKind::kRejectedInput,
          "run_chain: invalid schedule");
  MatrixXd draws(v0.size(), n_keep);
  double acc = 0.0;
  if (burn_in > 0) {
    auto r = langevin_mh(target, v0, burn_in, step_size, rng);
    v0 = r.v;
  }
  for (int i = 0; i < n_keep; ++i) {
    auto r = langevin_mh(target, v0, thin, step_size, rng);
    v0 = r.v;
    acc += r.acceptance;
    draws.col(i) = v0;
  }
  if (acceptance) *acceptance = acc / n_keep;
  return draws;
}

AdamState make_adam_state(const EnergyNetParams& p) {
  return {zeros_like(p), zeros_like(p), 0};
}

void adam_update(EnergyNetParams& p, const EnergyNetParams& grad,
                 AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  double lr = cfg.learning_rate;
  if (cfg.lr_decay == LrDecay::kCosine && cfg.total_steps > 0) {
    const double s = std::min(1.0, static_cast<double>(state.step - 1) / cfg.total_steps);
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * s));
  }
  auto ps = p.buffers();
  const auto gs = grad.buffers();
  auto ms = state.m.buffers();
  auto vs = state.v.buffers();
  for (std::size_t b = 0; b < ps.size(); ++b) {
    for (std::size_t i = 0; i < ps[b].size(); ++i) {
      const double g = gs[b][i];
      ms[b][i] = b1 * ms[b][i] + (1.0 - b1) * g;
      vs[b][i] = b2 * vs[b][i] + (1.0 - b2) * g * g;
      const double mhat = ms[b][i] / c1;
      const double vhat = vs[b][i] / c2;
      ps[b][i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
    }
  }
}

TrainingExample make_training_example(const DenoisingTask& task,
                                      const VectorXd& x, const VectorXd& y,
                                      int k) {
  const SelectedSubspace sel = select_subspace(task, y, k);
  return {feature_input(y, sel.subspace, sel.stds), project(x, sel.subspace),
          sel.stds};
}

StepDiagnostics cd_step(EnergyNetParams& params, AdamState& adam,
                        std::span<const TrainingExample> batch,
                        const NoiseSchedule& sched, const TrainConfig& cfg,
                        long long step) {
  require(!batch.empty(), ErrorKind::kRejectedInput, "empty training batch");
  require(sched.levels() == params.dims.levels, ErrorKind::kRejectedInput,
          "schedule and network disagree on the number of levels");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const int k = params.dims.k;

  MatrixXd inputs(params.dims.feature_input_dim(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inputs.col(i) = batch[static_cast<std::size_t>(i)].input;
  }
  const FilmBatch film = film_batch(params, features_batch(params, inputs));

  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(n));
  std::vector<int> levels(static_cast<std::size_t>(n));
  MatrixXd mixed(k, n);
  std::discrete_distribution<int> pick_level(sched.level_prior.begin(),
                                             sched.level_prior.end());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = batch[static_cast<std::size_t>(i)];
    rngs.push_back(derive_rng(cfg.seed,
                              (static_cast<std::uint64_t>(step) << 8) | kCdStream,
                              static_cast<std::uint64_t>(i)));
    Rng& rng = rngs.back();
    pick_level.reset();
    const int t = pick_level(rng);
    std::normal_distribution<double> normal;
    VectorXd noise(k);
    for (int a = 0; a < k; ++a) noise[a] = normal(rng);
    levels[static_cast<std::size_t>(i)] = t;
    mixed.col(i) = mix(whiten(e.v, e.stds), noise, t, sched);
  }

  MatrixXd negatives(k, n);
  VectorXd acceptance(n);
  const Eigen::Index n_blocks = (n + kChainBlock - 1) / kChainBlock;
  parallel_blocks(n_blocks, cfg.threads, [&](Eigen::Index b) {
    const Eigen::Index start = b * kChainBlock;
    const Eigen::Index len = std::min(kChainBlock, n - start);
    EnergyTarget target(
        params, slice(film, start, len),
        std::vector<int>(levels.begin() + start, levels.begin() + start + len));
    auto r = langevin_mh_batch(
        target, mixed.middleCols(start, len), cfg.langevin_steps,
        cfg.langevin_step_size,
        std::span<Rng>(rngs.data() + start, static_cast<std::size_t>(len)));
    negatives.middleCols(start, len) = r.v;
    acceptance.segment(start, len) = r.acceptance;
  });

  std::vector<CdExample> examples;
  examples.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    examples.push_back({batch[static_cast<std::size_t>(i)].input, mixed.col(i),
                        negatives.col(i), levels[static_cast<std::size_t>(i)]});
  }
  EnergyNetParams grad;
  const CdObjective obj = grad_params(params, examples, grad);
  if (!std::isfinite(obj.value) || !grad.all_finite()) {
    throw TrainingFailed("non-finite training loss at step " +
                             std::to_string(step),
                         params, step);
  }
  adam_update(params, grad, adam, cfg);
  return {obj.cd_gap, obj.ce_loss, acceptance.mean(), obj.value};
}

std::vector<TestPair> validation_pairs(const DenoisingTask& task,
                                       const TrainConfig& cfg) {
  Rng rng = derive_rng(cfg.seed, 0x7a11d);
  return draw_test_pairs(task, rng, cfg.val_pairs);
}

TrainResult train(const DenoisingTask& task, int k, const NoiseSchedule& sched,
                  const TrainConfig& cfg, const TrainCallback& on_record) {
  validate(task);
  validate(sched);
  validate(cfg);
  NetDims dims = cfg.net;
  dims.d = static_cast<int>(task.prior.dim());
  dims.k = k;
  dims.levels = sched.levels();

  TrainResult result;
  result.params = init_params(dims, cfg.seed);
  AdamState adam = make_adam_state(result.params);
  const auto val = validation_pairs(task, cfg);
  auto val_nll = [&] {
    return mean_nll(EbmPpdModel(result.params), task, val, k,
                    cfg.val_resolution)
        .mean;
  };
  result.initial_val_nll = val_nll();

  std::vector<TrainingExample> batch(static_cast<std::size_t>(cfg.batch_size));
  for (long long step = 1; step <= cfg.total_steps; ++step) {
    Rng rng = derive_rng(cfg.seed,
                         (static_cast<std::uint64_t>(step) << 8) | kDataStream);
    const JointSamples s = sample_joint(task, rng, cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      batch[static_cast<std::size_t>(i)] =
          make_training_example(task, s.x.col(i), s.y.col(i), k);
    }
    StepDiagnostics diag;
    try {
      diag = cd_step(result.params, adam, batch, sched, cfg, step);
    } catch (const TrainingFailed&) {
      throw;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kChainDiverged) throw;
      throw TrainingFailed(e.what(), result.params, step, e.kind());
    }
    TrainLogRecord rec{step, diag.cd_gap, diag.ce_loss, diag.acceptance, {}};
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
      const double v = val_nll();
      if (!std::isfinite(v)) {
        throw TrainingFailed("non-finite validation NLL at step " +
                                 std::to_string(step),
                             result.params, step);
      }
      rec.val_nll = v;
    }
    if (on_record) on_record(rec);
    result.log.push_back(rec);
  }
  return result;
}

int threads_from_env() {
  const char* env = std::getenv("PPDLAB_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

}  // namespace ppdlab
