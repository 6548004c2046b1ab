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

#include <CLI11.hpp>
#include <json.hpp>
#include <pthread.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "png.hpp"
#include "ppdlab/density_eval.hpp"
#include "ppdlab/error.hpp"
#include "ppdlab/gmm_world.hpp"
#include "ppdlab/io.hpp"
#include "ppdlab/log.hpp"
#include "ppdlab/mcd_train.hpp"
#include "ppdlab/server.hpp"

#ifndef PPDLAB_VERSION
#define PPDLAB_VERSION "unknown"
#endif

namespace ppdlab::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Stream tags for derive_rng, one per command.
constexpr std::uint64_t kGenTaskStream = 0x6e7a;
constexpr std::uint64_t kEvalStream = 0xe7a1;

/// Bad user input (missing file, malformed flag value): exit code 2.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

json vec_json(const VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

/// Command record written next to the outputs.
class Manifest {
 public:
  explicit Manifest(std::string command)
      : command_(std::move(command)), started_(utc_now()) {}

  json config = json::object();
  json inputs = json::object();
  json outputs = json::array();
  std::uint64_t seed = 0;

  void output(const fs::path& p) { outputs.push_back(p.string()); }

  void write(const fs::path& dir) const {
    const json j{{"command", command_},
                 {"version", PPDLAB_VERSION},
                 {"seed", seed},
                 {"config", config},
                 {"inputs", inputs},
                 {"outputs", outputs},
                 {"started_at", started_},
                 {"finished_at", utc_now()}};
    write_file_atomic(dir / (command_ + ".manifest.json"), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::string started_;
};

fs::path existing_file(const std::string& path, const char* what) {
  if (path.empty()) throw InvalidInput(std::string("missing --") + what);
  if (!fs::is_regular_file(path)) {
    throw InvalidInput(std::string(what) + " file not found: " + path);
  }
  return path;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw InvalidInput("cannot create output directory " + dir.string());
  }
}

void write_text(Manifest& m, const fs::path& path, const std::string& text) {
  write_file_atomic(path, text);
  m.output(path);
}

void write_png_output(Manifest& m, const fs::path& path, const Image& img) {
  const fs::path tmp = fs::path(path).concat(".tmp");
  write_png(tmp, img);
  fs::rename(tmp, path);
  m.output(path);
}

void write_grid(Manifest& m, const fs::path& stem, const DensityGrid& g) {
  write_text(m, fs::path(stem).concat(".csv"), grid_to_csv(g));
  write_text(m, fs::path(stem).concat(".json"), grid_to_json(g) + "\n");
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

DenoisingTask builtin_task(const std::string& name) {
  if (name == "toy") return builtin_toy_task();
  if (name == "single") return builtin_single_gaussian_task();
  throw InvalidInput("unknown builtin task '" + name + "' (toy|single)");
}

// ---------------------------------------------------------------------------
// gen-task

struct GenTaskArgs {
  std::string builtin = "toy";
  std::string task;
  std::string out;
  double noise_std = 0.4;
  bool noise_given = false;
  long long n = 1000;
  std::uint64_t seed = 0;
};

int cmd_gen_task(const GenTaskArgs& a) {
  Manifest man("gen-task");
  DenoisingTask task;
  if (!a.task.empty()) {
    const fs::path in = existing_file(a.task, "task");
    task = task_from_json(read_file(in));
    man.inputs["task"] = in.string();
  } else {
    task = builtin_task(a.builtin);
    man.inputs["builtin"] = a.builtin;
  }
  if (a.noise_given || a.task.empty()) task.noise_std = a.noise_std;
  validate(task);
  if (a.n < 1) throw InvalidInput("--n must be at least 1");

  const fs::path out = a.out;
  ensure_dir(out);
  Rng rng = derive_rng(a.seed, kGenTaskStream);
  const JointSamples s = sample_joint(task, rng, a.n);

  std::string csv;
  const auto d = task.prior.dim();
  for (Eigen::Index i = 0; i < d; ++i) csv += (i ? ",x" : "x") + std::to_string(i);
  for (Eigen::Index i = 0; i < d; ++i) csv += ",y" + std::to_string(i);
  csv += "\n";
  for (Eigen::Index c = 0; c < s.x.cols(); ++c) {
    for (Eigen::Index i = 0; i < d; ++i) csv += (i ? "," : "") + format_g(s.x(i, c));
    for (Eigen::Index i = 0; i < d; ++i) csv += "," + format_g(s.y(i, c));
    csv += "\n";
  }
  write_text(man, out / "task.json", task_to_json(task) + "\n");
  write_text(man, out / "pairs.csv", csv);
  man.seed = a.seed;
  man.config = {{"n", a.n}, {"noise_std", task.noise_std}};
  man.write(out);
  std::cout << "wrote " << (out / "task.json").string() << " and " << a.n
            << " pairs to " << (out / "pairs.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string task;
  std::string out;
  std::string config;
  std::optional<long long> steps;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
};

int cmd_train(const TrainArgs& a) {
  Manifest man("train");
  const fs::path task_path = existing_file(a.task, "task");
  const DenoisingTask task = task_from_json(read_file(task_path));
  man.inputs["task"] = task_path.string();

  TrainSettings s;
  if (!a.config.empty()) {
    const fs::path cfg_path = existing_file(a.config, "config");
    s = settings_from_json(read_file(cfg_path), s);
    man.inputs["config"] = cfg_path.string();
  }
  if (a.steps) {
    if (*a.steps < 0) throw InvalidInput("--steps must be nonnegative");
    s.config.total_steps = static_cast<int>(*a.steps);
  }
  if (a.seed) s.config.seed = *a.seed;
  if (a.k) s.k = *a.k;
  if (std::getenv("PPDLAB_THREADS")) s.config.threads = threads_from_env();
  if (s.k < 1 || s.k > task.prior.dim()) {
    throw InvalidInput("k must lie in [1, d]");
  }

  const fs::path out = a.out;
  ensure_dir(out);
  man.seed = s.config.seed;
  man.config = json::parse(settings_to_json(s));

  std::string log;
  auto on_record = [&](const TrainLogRecord& r) {
    log += log_record_to_json(r) + "\n";
    if (r.val_nll) {
      std::cout << "step " << r.step << "  val_nll " << std::setprecision(6)
                << *r.val_nll << "  acceptance " << r.acceptance << "\n"
                << std::flush;
    }
  };
  try {
    const TrainResult res = train(task, s.k, s.schedule, s.config, on_record);
    write_text(man, out / "checkpoint.json", checkpoint_to_json(res.params) + "\n");
    write_text(man, out / "train_log.ndjson", log);
    man.write(out);
    std::cout << "initial val_nll " << res.initial_val_nll << "\n"
              << "wrote " << (out / "checkpoint.json").string() << "\n";
    return kExitOk;
  } catch (const TrainingFailed& e) {
    const fs::path last = out / "checkpoint.last_good.json";
    write_text(man, last, checkpoint_to_json(e.last_good()) + "\n");
    write_text(man, out / "train_log.ndjson", log);
    man.write(out);
    std::cerr << "ppdlab: training failed at step " << e.step() << ": "
              << e.what() << "\nlast good checkpoint: " << last.string() << "\n";
    return kExitRuntime;
  }
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string task;
  std::string checkpoint;
  std::string out;
  long long n = 500;
  std::uint64_t seed = 0;
  int kde_samples = 100;
  int res = 0;
};

int cmd_eval(const EvalArgs& a) {
  Manifest man("eval");
  const fs::path task_path = existing_file(a.task, "task");
  const fs::path ckpt_path = existing_file(a.checkpoint, "checkpoint");
  const DenoisingTask task = task_from_json(read_file(task_path));
  const EnergyNetParams params = checkpoint_from_json(read_file(ckpt_path));
  if (params.dims.d != task.prior.dim()) {
    throw InvalidInput("checkpoint dimension does not match the task");
  }
  if (a.n < 2) throw InvalidInput("--n must be at least 2");
  if (a.kde_samples < 2) throw InvalidInput("--kde-samples must be at least 2");
  const int k = params.dims.k;

  Rng rng = derive_rng(a.seed, kEvalStream);
  const auto pairs = draw_test_pairs(task, rng, static_cast<int>(a.n));
  const AnalyticPpdModel analytic(task);
  const EbmPpdModel ebm(params);
  const GaussianPpdModel gaussian;
  const KdePpdModel kde(task, a.kde_samples, a.seed);
  const PpdModel* models[] = {&analytic, &ebm, &gaussian, &kde};

  json rows = json::array();
  std::ostringstream table;
  table << std::left << std::setw(10) << "model" << std::right << std::setw(12)
        << "mean_nll" << std::setw(12) << "stderr" << std::setw(8) << "n"
        << std::setw(16) << "out_of_support" << "\n";
  for (const PpdModel* model : models) {
    const NllSummary s = mean_nll(*model, task, pairs, k, a.res);
    rows.push_back({{"task", task_path.string()},
                    {"model", model->name()},
                    {"mean_nll", s.mean},
                    {"stderr", s.std_error},
                    {"n", s.n},
                    {"n_out_of_support", s.n_out_of_support}});
    table << std::left << std::setw(10) << model->name() << std::right
          << std::fixed << std::setprecision(5) << std::setw(12) << s.mean
          << std::setw(12) << s.std_error << std::setw(8) << s.n
          << std::setw(16) << s.n_out_of_support << "\n";
  }
  const json report{{"task", task_path.string()},
                    {"checkpoint", ckpt_path.string()},
                    {"k", k},
                    {"n_pairs", a.n},
                    {"seed", a.seed},
                    {"kde_samples", a.kde_samples},
                    {"rows", rows}};
  std::cout << table.str();
  if (!a.out.empty()) {
    const fs::path out = a.out;
    ensure_dir(out);
    write_text(man, out / "eval_report.json", report.dump(2) + "\n");
    write_text(man, out / "eval_report.txt", table.str());
    man.inputs = {{"task", task_path.string()}, {"checkpoint", ckpt_path.string()}};
    man.seed = a.seed;
    man.config = {{"n", a.n}, {"kde_samples", a.kde_samples}, {"res", a.res}};
    man.write(out);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// figure

struct FigureArgs {
  std::string task;
  std::string checkpoint;
  std::string out;
  std::vector<double> y;
  int res = 0;
};

// Ambient box covering every prior component to ±6σ and the measurement.
std::vector<GridAxis> ambient_axes(const DenoisingTask& task, const VectorXd& y) {
  const auto d = task.prior.dim();
  VectorXd lo = y, hi = y;
  for (std::size_t l = 0; l < task.prior.components(); ++l) {
    const VectorXd sd = task.prior.covariances[l].diagonal().cwiseSqrt();
    lo = lo.cwiseMin(task.prior.means[l] - 6.0 * sd);
    hi = hi.cwiseMax(task.prior.means[l] + 6.0 * sd);
  }
  std::vector<GridAxis> axes;
  for (Eigen::Index i = 0; i < d; ++i) axes.push_back({lo[i], hi[i], 257});
  return axes;
}

void overlay_line(Image& img, const std::vector<GridAxis>& axes,
                  const MatrixXd& points) {
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const double fx = (points(0, c) - axes[0].lo) / (axes[0].hi - axes[0].lo);
    const double fy = (points(1, c) - axes[1].lo) / (axes[1].hi - axes[1].lo);
    const int px = static_cast<int>(std::lround(fx * (img.width - 1)));
    const int py = img.height - 1 - static_cast<int>(std::lround(fy * (img.height - 1)));
    img.set(px, py, 230, 40, 40);
  }
}

std::vector<double> curve(const DensityGrid& g) {
  std::vector<double> out(g.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.normalized(i);
  return out;
}

int cmd_figure(const FigureArgs& a) {
  Manifest man("figure");
  const fs::path task_path = existing_file(a.task, "task");
  const DenoisingTask task = task_from_json(read_file(task_path));
  man.inputs["task"] = task_path.string();
  if (task.prior.dim() != 2) throw InvalidInput("figure needs a 2D task");
  std::optional<EnergyNetParams> params;
  if (!a.checkpoint.empty()) {
    const fs::path ckpt = existing_file(a.checkpoint, "checkpoint");
    params = checkpoint_from_json(read_file(ckpt));
    if (params->dims.d != 2) throw InvalidInput("checkpoint dimension does not match the task");
    man.inputs["checkpoint"] = ckpt.string();
  }
  VectorXd y = figure_measurement();
  if (!a.y.empty()) {
    if (a.y.size() != 2) throw InvalidInput("--y needs two comma-separated values");
    y = Eigen::Map<const VectorXd>(a.y.data(), 2);
  }
  const fs::path out = a.out;
  ensure_dir(out);

  const GmmParams post = posterior(task, y);
  const std::vector<double> fractions(std::begin(kDefaultContourFractions),
                                      std::end(kDefaultContourFractions));

  // (a) prior and (b) posterior with the subspace line.
  const auto box = ambient_axes(task, y);
  const MixtureDensity prior_pdf(task.prior), post_pdf(post);
  DensityGrid prior_grid = grid_eval_log(
      [&](const MatrixXd& pts, VectorXd& v) {
        v.resize(pts.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) v[i] = prior_pdf.log_density(pts.col(i));
      },
      box);
  prior_grid.whitened = false;
  prior_grid = normalize(std::move(prior_grid));
  DensityGrid post_grid = grid_eval_log(
      [&](const MatrixXd& pts, VectorXd& v) {
        v.resize(pts.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) v[i] = post_pdf.log_density(pts.col(i));
      },
      box);
  post_grid.whitened = false;
  post_grid = normalize(std::move(post_grid));
  const auto post_levels = mass_contour_levels(post_grid, fractions);

  const Measurement m1 = make_measurement(task, y, 1);
  const Subspace& a1 = m1.selection.subspace;
  const double s1 = m1.selection.stds[0];
  MatrixXd line(2, 201);
  std::string line_csv = "t,x0,x1\n";
  for (int i = 0; i < 201; ++i) {
    const double t = (-6.0 + 12.0 * i / 200.0) * s1;
    line.col(i) = reconstruct(VectorXd::Constant(1, t), a1);
    line_csv += format_g(t) + "," + format_g(line(0, i)) + "," + format_g(line(1, i)) + "\n";
  }
  write_grid(man, out / "prior", prior_grid);
  write_png_output(man, out / "prior.png", heatmap(prior_grid));
  write_grid(man, out / "posterior", post_grid);
  Image post_img = heatmap(post_grid, post_levels);
  overlay_line(post_img, box, line);
  write_png_output(man, out / "posterior.png", post_img);
  write_text(man, out / "subspace_line.csv", line_csv);

  // (c) grid-normalized sliced posterior vs projected posterior along PC1.
  const auto axes1 = default_whitened_axes(1, a.res);
  const DensityGrid projected = model_grid(AnalyticPpdModel(task), m1, axes1);
  DensityGrid sliced = grid_eval_log(
      [&](const MatrixXd& pts, VectorXd& v) {
        v.resize(pts.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) {
          v[i] = post_pdf.log_density(reconstruct(pts.col(i) * s1, a1));
        }
      },
      axes1);
  sliced = normalize(std::move(sliced));
  const auto proj_c = curve(projected), slice_c = curve(sliced);
  std::vector<double> xs(proj_c.size());
  std::string sp_csv = "v_whitened,v,sliced,projected\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = axes1[0].at(static_cast<int>(i));
    sp_csv += format_g(xs[i]) + "," + format_g(xs[i] * s1) + "," +
              format_g(slice_c[i]) + "," + format_g(proj_c[i]) + "\n";
  }
  write_text(man, out / "slice_vs_projection.csv", sp_csv);
  write_png_output(man, out / "slice_vs_projection.png",
                   line_plot(xs, {{slice_c, 220, 120, 20}, {proj_c, 30, 90, 200}}));
  const GridComparison sp = compare(sliced, projected);

  json summary{{"y", vec_json(y)},
               {"subspace", json::parse(subspace_to_json(a1))},
               {"stds", vec_json(m1.selection.stds)},
               {"modes_projected", count_modes(projected)},
               {"modes_sliced", count_modes(sliced)},
               {"tv_slice_vs_projected", sp.tv},
               {"contour_fractions", fractions},
               {"posterior_contour_levels", post_levels}};

  // 2D projected posterior with mass contours.
  const Measurement m2 = make_measurement(task, y, 2);
  const DensityGrid ppd2 =
      model_grid(AnalyticPpdModel(task), m2, default_whitened_axes(2, a.res));
  const auto ppd2_levels = mass_contour_levels(ppd2, fractions);
  write_grid(man, out / "ppd2d", ppd2);
  write_png_output(man, out / "ppd2d.png", heatmap(ppd2, ppd2_levels));
  summary["ppd2d_contour_levels"] = ppd2_levels;
  write_text(man, out / "contours.json",
             json{{"fractions", fractions},
                  {"posterior_levels", post_levels},
                  {"ppd2d_levels", ppd2_levels}}
                     .dump(2) + "\n");

  // (d) learned vs ground truth.
  if (params) {
    const int k = params->dims.k;
    const Measurement mk = k == 1 ? m1 : m2;
    const auto axes = default_whitened_axes(k, a.res);
    const DensityGrid gt = k == 1 ? projected : ppd2;
    const DensityGrid learned = model_grid(EbmPpdModel(*params), mk, axes);
    const GridComparison c = compare(gt, learned);
    write_grid(man, out / "learned", learned);
    if (k == 1) {
      const auto lc = curve(learned);
      std::string csv = "v_whitened,analytic,learned\n";
      for (std::size_t i = 0; i < xs.size(); ++i) {
        csv += format_g(xs[i]) + "," + format_g(proj_c[i]) + "," + format_g(lc[i]) + "\n";
      }
      write_text(man, out / "learned_vs_gt.csv", csv);
      write_png_output(man, out / "learned_vs_gt.png",
                       line_plot(xs, {{proj_c, 30, 90, 200}, {lc, 200, 30, 60}}));
    } else {
      write_png_output(man, out / "learned.png",
                       heatmap(learned, mass_contour_levels(learned, fractions)));
    }
    summary["learned"] = {{"k", k}, {"tv_vs_analytic", c.tv}, {"kl_analytic_learned", c.kl_ab}};
  } else {
    std::cout << "notice: no checkpoint given; learned-vs-ground-truth panel skipped\n";
    summary["learned"] = nullptr;
  }
  write_text(man, out / "figure.json", summary.dump(2) + "\n");
  man.config = {{"y", vec_json(y)}, {"res", a.res}};
  man.write(out);
  std::cout << "projected modes " << summary["modes_projected"] << ", sliced modes "
            << summary["modes_sliced"] << ", TV(slice, projection) " << sp.tv << "\n"
            << "wrote figure bundle to " << out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serve

struct ServeArgs {
  std::string task;
  std::string checkpoint;
  std::string host = "127.0.0.1";
  std::string static_dir;
  int port = 8080;
  int k = 1;
  bool readonly = false;
  std::uint64_t seed = 0;
};

int cmd_serve(const ServeArgs& a) {
  const fs::path task_path = existing_file(a.task, "task");
  DenoisingTask task = task_from_json(read_file(task_path));
  std::optional<EnergyNetParams> params;
  if (!a.checkpoint.empty()) {
    params = checkpoint_from_json(read_file(existing_file(a.checkpoint, "checkpoint")));
  }
  ServerOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.readonly = a.readonly;
  opts.seed = a.seed;
  opts.k = a.k;
  opts.static_dir = a.static_dir;
  Server server(opts);
  server.load(std::move(task), std::move(params));

  // Signals are taken synchronously on this thread; the server runs on another.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  const int port = server.bind();
  std::cout << "listening on http://" << a.host << ":" << port << "\n" << std::flush;
  std::thread worker([&] { server.serve(); });
  int sig = 0;
  sigwait(&set, &sig);
  std::cout << "shutting down\n";
  server.stop();
  worker.join();
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kSchema:
    case ErrorKind::kRejectedInput:
    case ErrorKind::kDegenerateTask:
    case ErrorKind::kDegenerateDirections:
      return kExitInvalid;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"ppdlab: projected posterior estimation on Gaussian-mixture denoising tasks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", PPDLAB_VERSION);

  GenTaskArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-task", "write a task file and sampled (x, y) pairs");
  gen_cmd->add_option("--builtin", gen.builtin, "builtin task: toy or single")
      ->capture_default_str();
  auto* gen_task_opt = gen_cmd->add_option("--task", gen.task, "custom task JSON to validate and copy");
  gen_cmd->get_option("--builtin")->excludes(gen_task_opt);
  auto* noise = gen_cmd->add_option("--noise-std", gen.noise_std, "measurement noise σ_n")
                    ->capture_default_str();
  gen_cmd->add_option("--n", gen.n, "number of sampled pairs")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the energy network");
  train_cmd->add_option("--task", tr.task)->required();
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--config", tr.config, "JSON training config");
  train_cmd->add_option("--steps", tr.steps, "override total_steps");
  train_cmd->add_option("--seed", tr.seed, "override seed");
  train_cmd->add_option("--k", tr.k, "subspace rank");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "NLL comparison of analytic, EBM and baselines");
  eval_cmd->add_option("--task", ev.task)->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--out", ev.out, "directory for the JSON and text report");
  eval_cmd->add_option("--n", ev.n, "held-out pairs")->capture_default_str();
  eval_cmd->add_option("--seed", ev.seed)->capture_default_str();
  eval_cmd->add_option("--kde-samples", ev.kde_samples, "posterior samples per measurement")
      ->capture_default_str();
  eval_cmd->add_option("--res", ev.res, "grid resolution per axis (0: default)");

  FigureArgs fig;
  auto* fig_cmd = app.add_subcommand("figure", "export the denoising figure bundle");
  fig_cmd->add_option("--task", fig.task)->required();
  fig_cmd->add_option("--checkpoint", fig.checkpoint);
  fig_cmd->add_option("--out", fig.out, "output directory")->required();
  fig_cmd->add_option("--y", fig.y, "measurement, e.g. --y 0,1.05")->delimiter(',');
  fig_cmd->add_option("--res", fig.res, "grid resolution per axis (0: default)");

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "start the HTTP API");
  serve_cmd->add_option("--task", sv.task)->required();
  serve_cmd->add_option("--checkpoint", sv.checkpoint);
  serve_cmd->add_option("--port", sv.port)->capture_default_str();
  serve_cmd->add_option("--host", sv.host)->capture_default_str();
  serve_cmd->add_option("--seed", sv.seed)->capture_default_str();
  serve_cmd->add_option("--k", sv.k, "subspace rank without a checkpoint")->capture_default_str();
  serve_cmd->add_option("--static-dir", sv.static_dir, "explorer bundle served at /");
  serve_cmd->add_flag("--readonly", sv.readonly, "refuse POST /api/measurements");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*gen_cmd) {
      gen.noise_given = noise->count() > 0;
      return cmd_gen_task(gen);
    }
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*fig_cmd) return cmd_figure(fig);
    if (*serve_cmd) return cmd_serve(sv);
  } catch (const InvalidInput& e) {
    std::cerr << "ppdlab: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Error& e) {
    std::cerr << "ppdlab: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "ppdlab: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitInvalid;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace ppdlab::cli
