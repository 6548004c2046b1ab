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
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <thread>

#include "oracles.hpp"
#include "ppdlab/density_eval.hpp"
#include "ppdlab/error.hpp"
#include "ppdlab/io.hpp"
#include "ppdlab/server.hpp"

namespace ppdlab {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

const std::filesystem::path kToyCheckpoint =
    std::filesystem::path(PPDLAB_DATA_DIR) / "toy_checkpoint.json";

/// A server on an ephemeral port, serving on a background thread.
class Running {
 public:
  Running(ServerOptions opts, std::optional<DenoisingTask> task,
          std::optional<EnergyNetParams> params = std::nullopt)
      : server_(std::move(opts)) {
    if (task) server_.load(std::move(*task), std::move(params));
    port_ = server_.bind();
    thread_ = std::thread([this] { server_.serve(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(300, 0);
  }
  ~Running() {
    server_.stop();
    thread_.join();
  }

  httplib::Client& http() { return *client_; }
  Server& server() { return server_; }
  int port() const { return port_; }

  json get(const std::string& path, int want = 200) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, want) << path << ": " << r->body;
    return json::parse(r->body);
  }
  json post(const std::string& path, const json& body, int want = 200) {
    auto r = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, want) << path << ": " << r->body;
    return json::parse(r->body);
  }

 private:
  Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

ServerOptions ephemeral(bool readonly = false) {
  ServerOptions o;
  o.port = 0;
  o.seed = 3;
  o.readonly = readonly;
  return o;
}

DensityGrid grid_of(const json& payload) { return grid_from_json(payload["grid"].dump()); }

VectorXd vec(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

class ToyServer : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_TRUE(std::filesystem::exists(kToyCheckpoint)) << kToyCheckpoint;
    params_ = new EnergyNetParams(checkpoint_from_json(read_file(kToyCheckpoint)));
    running_ = new Running(ephemeral(), builtin_toy_task(), *params_);
  }
  static void TearDownTestSuite() {
    delete running_;
    delete params_;
  }
  static Running& srv() { return *running_; }
  static const EnergyNetParams& params() { return *params_; }

  static Running* running_;
  static EnergyNetParams* params_;
};

Running* ToyServer::running_ = nullptr;
EnergyNetParams* ToyServer::params_ = nullptr;

TEST(ServerLifecycle, UnloadedAnswers503) {
  Running r(ephemeral(), std::nullopt);
  r.get("/health");
  r.get("/api/task", 503);
  r.get("/api/measurements", 503);
  r.get("/api/ppd?id=0", 503);
}

TEST(ServerLifecycle, PortInUseRejected) {
  Running a(ephemeral(), builtin_toy_task());
  ServerOptions o = ephemeral();
  o.port = a.port();
  Server b(o);
  try {
    b.bind();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRejectedInput);
  }
}

TEST_F(ToyServer, Health) { EXPECT_EQ(srv().get("/health"), (json{{"status", "ok"}})); }

TEST_F(ToyServer, TaskSummary) {
  const json t = srv().get("/api/task");
  EXPECT_EQ(t, (json{{"d", 2}, {"L", 6}, {"noise_std", 0.4}, {"K", 1}, {"model_loaded", true}}));
  EXPECT_EQ(srv().get("/api/task"), t);
}

TEST_F(ToyServer, PreRegisteredMeasurements) {
  const json list = srv().get("/api/measurements");
  ASSERT_GE(list.size(), 9u);
  EXPECT_EQ(list[0]["id"], 0);
  EXPECT_EQ(vec(list[0]["y"]), figure_measurement());
  EXPECT_TRUE(list[0]["x_true"].is_null());
  for (std::size_t i = 1; i < 9; ++i) {
    EXPECT_EQ(list[i]["id"], i);
    EXPECT_EQ(list[i]["x_true"].size(), 2u);
  }
}

TEST_F(ToyServer, SeededMeasurementsReproducible) {
  const json a = srv().post("/api/measurements", {{"count", 5}, {"seed", 42}});
  const json b = srv().post("/api/measurements", {{"count", 5}, {"seed", 42}});
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a[i]["y"], b[i]["y"]);
    EXPECT_EQ(a[i]["x_true"], b[i]["x_true"]);
  }
  long long last = -1;
  for (const json* list : {&a, &b}) {
    for (const auto& m : *list) {
      EXPECT_GT(m["id"].get<long long>(), last);
      last = m["id"].get<long long>();
    }
  }
}

TEST_F(ToyServer, MeasurementNoiseMatchesTask) {
  const json list = srv().post("/api/measurements", {{"count", 10000}, {"seed", 9}});
  ASSERT_EQ(list.size(), 10000u);
  double sum = 0.0, sum_sq = 0.0;
  int n = 0;
  for (const auto& m : list) {
    const VectorXd e = vec(m["y"]) - vec(m["x_true"]);
    for (double v : e) {
      sum += v;
      sum_sq += v * v;
      ++n;
    }
  }
  const double mean = sum / n;
  const double sd = std::sqrt(sum_sq / n - mean * mean);
  // Standard error of a normal sample std is σ/√(2n) ≈ 0.002.
  EXPECT_NEAR(sd, 0.4, 0.01);
}

TEST_F(ToyServer, MeasurementRequestValidation) {
  srv().post("/api/measurements", {{"count", 0}}, 400);
  srv().post("/api/measurements", {{"count", "three"}}, 400);
  srv().post("/api/measurements", {{"count", 2}, {"seed", -1}}, 400);
  auto r = srv().http().Post("/api/measurements", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
}

TEST(ServerReadonly, RefusesResampling) {
  Running r(ephemeral(true), builtin_toy_task());
  r.post("/api/measurements", {{"count", 1}}, 403);
  EXPECT_EQ(r.get("/api/measurements").size(), 9u);
  r.get("/api/ppd?id=1");
}

TEST_F(ToyServer, AnalyticGridIntegratesToOne) {
  const json p = srv().get("/api/ppd?id=1&model=analytic");
  EXPECT_EQ(p["model"], "analytic");
  const DensityGrid g = grid_of(p);
  ASSERT_TRUE(g.log_z.has_value());
  double mass = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) mass += g.normalized(i) * g.cell_area();
  EXPECT_NEAR(mass, 1.0, 1e-3);
  EXPECT_EQ(p["stds"].size(), 1u);
  EXPECT_TRUE(p["v_true"].is_array());
  EXPECT_TRUE(p["nll_true"].is_number());
}

TEST_F(ToyServer, GaussianGridIsClosedForm) {
  for (int k : {1, 2}) {
    const json p = srv().get("/api/ppd?id=2&model=gaussian&res=65&k=" + std::to_string(k));
    const DensityGrid g = grid_of(p);
    // Whitened coordinates: the baseline is a standard normal.
    const double ref = g.values[0] / std::exp(-0.5 * g.point(0).squaredNorm());
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double closed = std::exp(-0.5 * g.point(i).squaredNorm());
      EXPECT_NEAR(g.values[i] / closed / ref, 1.0, 1e-10);
    }
    const double peak = k == 1 ? 1.0 / std::sqrt(2 * std::numbers::pi) : 1.0 / (2 * std::numbers::pi);
    EXPECT_NEAR(g.normalized(g.values.size() / 2), peak, 1e-6);
  }
}

TEST_F(ToyServer, ShippedCheckpointCloseToAnalytic) {
  for (int id = 0; id < 9; ++id) {
    const auto q = "/api/ppd?id=" + std::to_string(id);
    const auto a = grid_of(srv().get(q + "&model=analytic"));
    const auto e = grid_of(srv().get(q + "&model=ebm"));
    EXPECT_LT(compare(a, e).tv, 0.1) << "measurement " << id;
  }
}

TEST_F(ToyServer, KdeGridReproducible) {
  const json a = srv().get("/api/ppd?id=3&model=kde&n=100&res=129");
  const json b = srv().get("/api/ppd?id=3&model=kde&n=100&res=129");
  EXPECT_EQ(a["grid"], b["grid"]);
  // Same draws as the library model with the session seed.
  const auto m = make_measurement(builtin_toy_task(), vec(srv().get("/api/measurements")[3]["y"]), 1, 3);
  const auto direct = model_grid(KdePpdModel(builtin_toy_task(), 100, 3), m,
                                 default_whitened_axes(1, 129), false);
  EXPECT_EQ(grid_of(a).values, direct.values);
}

TEST_F(ToyServer, ErrorStatuses) {
  srv().get("/api/ppd?id=100000", 404);
  srv().get("/api/ppd?id=1&model=ebm&k=2", 409);
  srv().get("/api/ppd?id=1&model=banana", 400);
  srv().get("/api/ppd?id=1&res=3", 400);
  srv().get("/api/ppd?id=1&k=3", 400);
  srv().get("/api/ppd", 400);
  srv().get("/api/slice?id=100000", 404);
  srv().get("/api/contours?id=1&fractions=0.5,1.5", 400);
}

TEST(ServerNoCheckpoint, EbmUnavailable) {
  Running r(ephemeral(), builtin_toy_task());
  EXPECT_EQ(r.get("/api/task")["model_loaded"], false);
  r.get("/api/ppd?id=1&model=ebm", 409);
}

TEST_F(ToyServer, ConditioningComputedOnce) {
  const json m = srv().post("/api/measurements", {{"count", 1}, {"seed", 77}});
  const auto id = std::to_string(m[0]["id"].get<long long>());
  const json s0 = srv().get("/api/stats");
  srv().get("/api/ppd?model=ebm&id=" + id);
  const json s1 = srv().get("/api/stats");
  EXPECT_EQ(s1["feature_evaluations"].get<long long>() - s0["feature_evaluations"].get<long long>(), 1);
  EXPECT_EQ(s1["grid_cache_misses"].get<long long>() - s0["grid_cache_misses"].get<long long>(), 1);
  srv().get("/api/ppd?model=ebm&id=" + id);
  const json s2 = srv().get("/api/stats");
  EXPECT_EQ(s2["feature_evaluations"], s1["feature_evaluations"]);
  EXPECT_EQ(s2["grid_cache_hits"].get<long long>() - s1["grid_cache_hits"].get<long long>(), 1);
  // A new lattice needs a new grid but not new features.
  srv().get("/api/ppd?model=ebm&res=129&id=" + id);
  srv().get("/api/contours?model=ebm&id=" + id);
  const json s3 = srv().get("/api/stats");
  EXPECT_EQ(s3["feature_evaluations"], s1["feature_evaluations"]);
}

TEST_F(ToyServer, ConcurrentRequestsBuildGridOnce) {
  const json m = srv().post("/api/measurements", {{"count", 1}, {"seed", 78}});
  const auto path = "/api/ppd?model=ebm&res=257&id=" + std::to_string(m[0]["id"].get<long long>());
  const json s0 = srv().get("/api/stats");
  std::vector<std::thread> threads;
  std::vector<std::string> bodies(6);
  for (int t = 0; t < 6; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", srv().port());
      c.set_read_timeout(300, 0);
      auto r = c.Get(path);
      if (r && r->status == 200) bodies[t] = r->body;
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
  const json s1 = srv().get("/api/stats");
  EXPECT_EQ(s1["feature_evaluations"].get<long long>() - s0["feature_evaluations"].get<long long>(), 1);
  EXPECT_EQ(s1["grid_cache_misses"].get<long long>() - s0["grid_cache_misses"].get<long long>(), 1);
  EXPECT_EQ(s1["grid_cache_hits"].get<long long>() - s0["grid_cache_hits"].get<long long>(), 5);
}

TEST_F(ToyServer, SliceSeparatesFromProjection) {
  const json s = srv().get("/api/slice?id=0");
  const json p = srv().get("/api/ppd?id=0");
  EXPECT_EQ(s["normalized_for_display"], true);
  const auto gs = grid_of(s), gp = grid_of(p);
  EXPECT_EQ(gs.axes, gp.axes);
  EXPECT_GT(compare(gs, gp).tv, 0.05);
  EXPECT_EQ(count_modes(gp), 3);
}

TEST(ServerIsotropic, SliceEqualsProjection) {
  DenoisingTask t;
  t.prior.weights = VectorXd::Ones(1);
  t.prior.means = {VectorXd{{0.3, -0.4}}};
  t.prior.covariances = {0.5 * MatrixXd::Identity(2, 2)};
  t.noise_std = 0.4;
  Running r(ephemeral(), t);
  for (int k : {1, 2}) {
    const auto q = "?id=1&res=65&k=" + std::to_string(k);
    const auto gs = grid_of(r.get("/api/slice" + q));
    const auto gp = grid_of(r.get("/api/ppd" + q));
    ASSERT_EQ(gs.axes, gp.axes);
    for (std::size_t i = 0; i < gs.values.size(); ++i) {
      EXPECT_NEAR(gs.normalized(i), gp.normalized(i), 1e-8);
    }
  }
}

TEST_F(ToyServer, Reconstruct) {
  const auto task = builtin_toy_task();
  const json list = srv().get("/api/measurements");
  const VectorXd y = vec(list[4]["y"]);
  const auto post = posterior(task, y);
  const json zero = srv().post("/api/reconstruct", {{"id", 4}, {"v", {0.0}}});
  EXPECT_LT((vec(zero["x"]) - posterior_mean(post)).norm(), 1e-12);

  const json r = srv().post("/api/reconstruct", {{"id", 4}, {"v", {0.37, -0.2}}, {"k", 2}});
  const auto sel = select_subspace(post, 2);
  const VectorXd x = vec(r["x"]);
  EXPECT_LT((project(x, sel.subspace) - VectorXd{{0.37, -0.2}}).norm(), 1e-10);
  EXPECT_NEAR(r["posterior_density_at_x"].get<double>(), prior_density(post, x), 1e-12);
  EXPECT_NEAR(r["prior_density_at_x"].get<double>(), prior_density(task.prior, x), 1e-12);
  EXPECT_LT((vec(r["v_whitened"]) - VectorXd{{0.37, -0.2}}.cwiseQuotient(sel.stds)).norm(), 1e-12);

  srv().post("/api/reconstruct", {{"id", 4}, {"v", {0.1, 0.2}}}, 400);
  srv().post("/api/reconstruct", {{"id", 4}, {"v", "x"}}, 400);
  srv().post("/api/reconstruct", {{"id", 99999}, {"v", {0.0}}}, 404);
}

TEST_F(ToyServer, ContourDefaults) {
  const json c = srv().get("/api/contours?id=1");
  EXPECT_EQ(c["fractions"], json::array({0.5, 0.8, 0.9, 0.98}));
  const auto levels = c["levels"].get<std::vector<double>>();
  ASSERT_EQ(levels.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LE(levels[i], levels[i - 1]);
  const json custom = srv().get("/api/contours?id=1&fractions=0.25");
  EXPECT_EQ(custom["fractions"], json::array({0.25}));
}

TEST(ServerSingleGaussian, HalfMassContourClosedForm) {
  Running r(ephemeral(), builtin_single_gaussian_task());
  const json c = r.get("/api/contours?id=1&k=2&fractions=0.5");
  // Whitened 2D projected posterior is N(0, I): HDR level 1/(4π).
  EXPECT_NEAR(c["levels"][0].get<double>(), 1.0 / (4.0 * std::numbers::pi), 1e-3);
}

TEST_F(ToyServer, CorsAndPreflight) {
  auto r = srv().http().Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
  auto o = srv().http().Options("/api/ppd");
  ASSERT_TRUE(o);
  EXPECT_EQ(o->status, 204);
  auto root = srv().http().Get("/");
  ASSERT_TRUE(root);
  EXPECT_EQ(root->status, 200);
}

TEST_F(ToyServer, StatsFields) {
  const json s = srv().get("/api/stats");
  for (const char* f : {"feature_evaluations", "grid_cache_hits", "grid_cache_misses", "measurements"}) {
    EXPECT_TRUE(s.contains(f)) << f;
  }
  EXPECT_EQ(s["measurements"].get<std::size_t>(), srv().get("/api/measurements").size());
  EXPECT_EQ(srv().server().stats().measurements, s["measurements"].get<std::size_t>());
}

}  // namespace
}  // namespace ppdlab
