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
// Eigen before httplib: <resolv.h> defines _res.
#include <Eigen/Dense>
#include <httplib.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <json.hpp>
#include <sstream>

#include "cli.hpp"
#include "ppdlab/ebm_core.hpp"
#include "ppdlab/gmm_world.hpp"
#include "ppdlab/io.hpp"
#include "temp_dir.hpp"

namespace ppdlab {
namespace {

using json = nlohmann::json;
using testing::TempDir;

int run(std::vector<std::string> args) { return cli::run(args); }

std::string slurp(const std::filesystem::path& p) { return read_file(p); }

// Exit status of the real binary, output discarded.
int run_binary(const std::string& args) {
  const std::string cmd =
      std::string(PPDLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kTinyConfig = R"({
  "batch_size": 8, "total_steps": 4, "langevin_steps": 2, "langevin_step_size": 0.3,
  "learning_rate": 0.003, "eval_every": 2, "val_pairs": 4, "val_resolution": 65,
  "seed": 5, "k": 1,
  "net": {"h_dim": 6, "feature_widths": [8], "head_widths": [8]},
  "schedule": {"levels": 3}
})";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run({"gen-task", "--builtin", "toy", "--n", "20", "--seed", "1",
                   "--out", dir_.path().string()}),
              0);
    task_ = (dir_ / "task.json").string();
    config_ = (dir_ / "tiny.json").string();
    write_file_atomic(config_, kTinyConfig);
  }

  TempDir dir_{"cli"};
  std::string task_;
  std::string config_;
};

TEST_F(CliTest, GenTaskWritesTaskAndPairs) {
  const DenoisingTask t = task_from_json(slurp(task_));
  EXPECT_EQ(t.prior.components(), 6u);
  EXPECT_DOUBLE_EQ(t.noise_std, 0.4);
  std::ifstream in(dir_ / "pairs.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x0,x1,y0,y1");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 20);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "gen-task.manifest.json"));
}

TEST_F(CliTest, GenTaskIsDeterministicPerSeed) {
  TempDir a("gen_a"), b("gen_b"), c("gen_c");
  for (auto* d : {&a, &b}) {
    ASSERT_EQ(run({"gen-task", "--builtin", "single", "--n", "50", "--seed", "9",
                   "--out", d->path().string()}),
              0);
  }
  ASSERT_EQ(run({"gen-task", "--builtin", "single", "--n", "50", "--seed", "10",
                 "--out", c.path().string()}),
            0);
  EXPECT_EQ(slurp(a / "pairs.csv"), slurp(b / "pairs.csv"));
  EXPECT_NE(slurp(a / "pairs.csv"), slurp(c / "pairs.csv"));
}

TEST_F(CliTest, GenTaskNoiseOverride) {
  TempDir out("gen_noise");
  ASSERT_EQ(run({"gen-task", "--task", task_, "--noise-std", "0.25", "--n", "1",
                 "--out", out.path().string()}),
            0);
  EXPECT_DOUBLE_EQ(task_from_json(slurp(out / "task.json")).noise_std, 0.25);
}

TEST_F(CliTest, ExitCodesForInvalidInput) {
  TempDir out("bad");
  const std::string bad_task = (out / "bad_task.json").string();
  write_file_atomic(bad_task, R"({"weights":[1],"means":[[0,0]],
      "covariances":[[[1,2],[2,1]]],"noise_std":0.4})");
  EXPECT_EQ(run({"gen-task", "--task", bad_task, "--out", (out / "o").string()}), 2);
  EXPECT_EQ(run({"gen-task", "--builtin", "toy"}), 2);  // --out missing
  EXPECT_EQ(run({"gen-task", "--builtin", "nope", "--out", out.path().string()}), 2);
  EXPECT_EQ(run({"train", "--task", (out / "missing.json").string(), "--out",
                 out.path().string()}),
            2);
  EXPECT_EQ(run({"train", "--task", task_, "--out", out.path().string(), "--k", "3"}), 2);
  EXPECT_EQ(run({"no-such-command"}), 2);

  const std::string bad_cfg = (out / "cfg.json").string();
  write_file_atomic(bad_cfg, R"({"batch_size": 8, "nonsense": 1})");
  EXPECT_EQ(run({"train", "--task", task_, "--config", bad_cfg, "--out",
                 out.path().string()}),
            2);
}

TEST_F(CliTest, BinaryExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("gen-task --builtin toy"), 2);
  EXPECT_EQ(run_binary("eval --task " + task_ + " --checkpoint /nonexistent.json"), 2);
  TempDir out("bin");
  EXPECT_EQ(run_binary("gen-task --builtin toy --n 3 --out " + out.path().string()), 0);
}

TEST_F(CliTest, TrainZeroStepsWritesInitialParameters) {
  TempDir out("train0");
  ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--steps", "0",
                 "--out", out.path().string()}),
            0);
  const EnergyNetParams p = checkpoint_from_json(slurp(out / "checkpoint.json"));
  NetDims dims;
  dims.d = 2;
  dims.k = 1;
  dims.levels = 3;
  dims.h_dim = 6;
  dims.feature_widths = {8};
  dims.head_widths = {8};
  const EnergyNetParams init = init_params(dims, 5);
  EXPECT_EQ(checkpoint_to_json(p), checkpoint_to_json(init));
}

TEST_F(CliTest, TrainIsReproducibleAndLogsValidation) {
  TempDir a("train_a"), b("train_b");
  for (auto* d : {&a, &b}) {
    ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--out",
                   d->path().string()}),
              0);
  }
  EXPECT_EQ(slurp(a / "checkpoint.json"), slurp(b / "checkpoint.json"));
  EXPECT_EQ(slurp(a / "train_log.ndjson"), slurp(b / "train_log.ndjson"));

  std::istringstream log(slurp(a / "train_log.ndjson"));
  int lines = 0, with_val = 0;
  for (std::string line; std::getline(log, line); ++lines) {
    const json r = json::parse(line);
    EXPECT_EQ(r["step"].get<int>(), lines + 1);
    if (r.contains("val_nll")) ++with_val;
  }
  EXPECT_EQ(lines, 4);
  EXPECT_EQ(with_val, 2);
  const json manifest = json::parse(slurp(a / "train.manifest.json"));
  EXPECT_EQ(manifest["seed"].get<int>(), 5);

  TempDir c("train_c");
  ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--seed", "6",
                 "--out", c.path().string()}),
            0);
  EXPECT_NE(slurp(a / "checkpoint.json"), slurp(c / "checkpoint.json"));
}

TEST_F(CliTest, TrainFailureKeepsLastGoodCheckpoint) {
  TempDir out("train_fail");
  const std::string cfg = (out / "explode.json").string();
  json j = json::parse(kTinyConfig);
  j["learning_rate"] = 1e300;
  j["net"]["gaussian_anchor"] = false;
  write_file_atomic(cfg, j.dump());
  EXPECT_EQ(run({"train", "--task", task_, "--config", cfg, "--steps", "50",
                 "--out", out.path().string()}),
            1);
  ASSERT_TRUE(std::filesystem::exists(out / "checkpoint.last_good.json"));
  EXPECT_FALSE(std::filesystem::exists(out / "checkpoint.json"));
  const EnergyNetParams p =
      checkpoint_from_json(slurp(out / "checkpoint.last_good.json"));
  for (const auto b : p.buffers()) {
    for (double v : b) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST_F(CliTest, EvalReportRows) {
  TempDir ck("eval_ck"), out("eval_out");
  ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--out",
                 ck.path().string()}),
            0);
  ASSERT_EQ(run({"eval", "--task", task_, "--checkpoint",
                 (ck / "checkpoint.json").string(), "--n", "40", "--res", "257",
                 "--out", out.path().string()}),
            0);
  const json rep = json::parse(slurp(out / "eval_report.json"));
  EXPECT_EQ(rep["kde_samples"].get<int>(), 100);
  ASSERT_EQ(rep["rows"].size(), 4u);
  std::map<std::string, json> rows;
  for (const auto& r : rep["rows"]) rows[r["model"].get<std::string>()] = r;
  ASSERT_EQ(rows.size(), 4u);
  for (const char* m : {"analytic", "ebm", "gaussian", "kde"}) {
    ASSERT_TRUE(rows.count(m)) << m;
    EXPECT_EQ(rows[m]["n"].get<int>() + rows[m]["n_out_of_support"].get<int>(), 40);
  }
  const double a = rows["analytic"]["mean_nll"].get<double>();
  EXPECT_EQ(rows["analytic"]["n_out_of_support"].get<int>(), 0);
  for (const char* m : {"ebm", "gaussian"}) {
    const double se = rows[m]["stderr"].get<double>() +
                      rows["analytic"]["stderr"].get<double>();
    EXPECT_LE(a, rows[m]["mean_nll"].get<double>() + 2.0 * se) << m;
  }
  EXPECT_TRUE(std::filesystem::exists(out / "eval_report.txt"));

  TempDir again("eval_again");
  ASSERT_EQ(run({"eval", "--task", task_, "--checkpoint",
                 (ck / "checkpoint.json").string(), "--n", "40", "--res", "257",
                 "--out", again.path().string()}),
            0);
  EXPECT_EQ(slurp(out / "eval_report.json"), slurp(again / "eval_report.json"));
}

TEST_F(CliTest, EvalRejectsDimensionMismatch) {
  TempDir other("eval_mm");
  const std::string task3 = (other / "task3.json").string();
  write_file_atomic(task3, R"({"weights":[1],"means":[[0,0,0]],
      "covariances":[[[1,0,0],[0,1,0],[0,0,1]]],"noise_std":0.4})");
  TempDir ck("eval_mm_ck");
  ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--steps", "0",
                 "--out", ck.path().string()}),
            0);
  EXPECT_EQ(run({"eval", "--task", task3, "--checkpoint",
                 (ck / "checkpoint.json").string()}),
            2);
}

TEST_F(CliTest, FigureBundle) {
  TempDir out("figure");
  ::testing::internal::CaptureStdout();
  ASSERT_EQ(run({"figure", "--task", task_, "--out", out.path().string()}), 0);
  const std::string stdout_text = ::testing::internal::GetCapturedStdout();
  EXPECT_NE(stdout_text.find("notice"), std::string::npos);

  const json fig = json::parse(slurp(out / "figure.json"));
  EXPECT_EQ(fig["modes_projected"].get<int>(), 3);
  EXPECT_GT(fig["tv_slice_vs_projected"].get<double>(), 0.05);
  EXPECT_TRUE(fig["learned"].is_null());
  EXPECT_EQ(fig["contour_fractions"].get<std::vector<double>>(),
            (std::vector<double>{0.5, 0.8, 0.9, 0.98}));

  std::ifstream in(out / "slice_vs_projection.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "v_whitened,v,sliced,projected");
  std::vector<double> xs, sl, pr;
  while (std::getline(in, line)) {
    double x, v, s, p;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &v, &s, &p), 4);
    xs.push_back(x);
    sl.push_back(s);
    pr.push_back(p);
  }
  ASSERT_GT(xs.size(), 2u);
  const double h = xs[1] - xs[0];
  double ms = 0, mp = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double w = i == 0 || i + 1 == xs.size() ? 0.5 * h : h;  // trapezoid
    ms += sl[i] * w;
    mp += pr[i] * w;
  }
  EXPECT_NEAR(ms, 1.0, 1e-9);
  EXPECT_NEAR(mp, 1.0, 1e-9);

  for (const char* f : {"prior.png", "posterior.png", "slice_vs_projection.png",
                        "ppd2d.png", "contours.json", "subspace_line.csv",
                        "figure.manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  std::ifstream png(out / "prior.png", std::ios::binary);
  char magic[4] = {};
  png.read(magic, 4);
  EXPECT_EQ(std::string(magic + 1, 3), "PNG");
}

TEST_F(CliTest, FigureWithCheckpoint) {
  TempDir ck("fig_ck"), out("fig_out");
  ASSERT_EQ(run({"train", "--task", task_, "--config", config_, "--steps", "0",
                 "--out", ck.path().string()}),
            0);
  ASSERT_EQ(run({"figure", "--task", task_, "--checkpoint",
                 (ck / "checkpoint.json").string(), "--res", "129", "--out",
                 out.path().string()}),
            0);
  const json fig = json::parse(slurp(out / "figure.json"));
  ASSERT_TRUE(fig["learned"].is_object());
  const double tv = fig["learned"]["tv_vs_analytic"].get<double>();
  EXPECT_GE(tv, 0.0);
  EXPECT_LE(tv, 1.0);
  EXPECT_TRUE(std::filesystem::exists(out / "learned_vs_gt.csv"));
}

TEST_F(CliTest, FigureRejectsBadY) {
  TempDir out("fig_bad");
  EXPECT_EQ(run({"figure", "--task", task_, "--y", "1,2,3", "--out",
                 out.path().string()}),
            2);
}

// Starts `ppdlab serve` on an ephemeral port and returns (pid, port).
std::pair<pid_t, int> spawn_server(const std::vector<std::string>& extra) {
  int fds[2];
  if (pipe(fds) != 0) return {-1, 0};
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<std::string> args{PPDLAB_CLI_PATH, "serve", "--port", "0"};
    args.insert(args.end(), extra.begin(), extra.end());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(argv[0], argv.data());
    _exit(127);
  }
  close(fds[1]);
  std::string line;
  char c;
  while (read(fds[0], &c, 1) == 1 && c != '\n') line += c;
  close(fds[0]);
  const auto colon = line.rfind(':');
  if (colon == std::string::npos) return {pid, 0};
  return {pid, std::stoi(line.substr(colon + 1))};
}

int stop_server(pid_t pid) {
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(CliTest, ServeAnswersHealthAndShutsDownCleanly) {
  const auto [pid, port] = spawn_server({"--task", task_, "--readonly"});
  ASSERT_GT(pid, 0);
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["status"], "ok");
  auto post = client.Post("/api/measurements", R"({"y":[0,1]})", "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 403);
  EXPECT_EQ(stop_server(pid), 0);
}

TEST_F(CliTest, ServeRejectsMissingTask) {
  EXPECT_EQ(run_binary("serve --task /nonexistent/task.json --port 0"), 2);
}

}  // namespace
}  // namespace ppdlab
