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

#include "ppdlab/server.hpp"

#include <atomic>
#include <future>
#include <httplib.h>
#include <json.hpp>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>

#include "ppdlab/density_eval.hpp"
#include "ppdlab/error.hpp"
#include "ppdlab/io.hpp"
#include "ppdlab/rng.hpp"

namespace ppdlab {
namespace {

using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kMaxResolution = 4097;
constexpr int kMaxMeasurementsPerRequest = 100000;
constexpr int kMaxKdeSamples = 1000000;

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>ppdlab</title>"
    "</head><body><h1>ppdlab server</h1><p>No explorer bundle is installed. "
    "The JSON API lives under <code>/api/</code>; see <code>/api/task</code>."
    "</p></body></html>";

struct HttpError {
  int status;
  std::string message;
};

[[noreturn]] void fail(int status, const std::string& message) {
  throw HttpError{status, message};
}

json to_json(const VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

struct MeasurementEntry {
  std::size_t id = 0;
  VectorXd y;
  std::optional<VectorXd> x_true;
};

struct Selection {
  GmmParams post;
  SelectedSubspace sel;
};

long long query_int(const httplib::Request& req, const std::string& key,
                    std::optional<long long> fallback) {
  if (!req.has_param(key)) {
    if (fallback) return *fallback;
    fail(400, "missing query parameter '" + key + "'");
  }
  const std::string text = req.get_param_value(key);
  std::size_t used = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    fail(400, "query parameter '" + key + "' must be an integer");
  }
  return value;
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double f = 0.0;
    try {
      f = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !(f > 0.0 && f < 1.0)) {
      fail(400, "fractions must be a comma-separated list in (0, 1)");
    }
    out.push_back(f);
  }
  if (out.empty()) fail(400, "fractions must not be empty");
  return out;
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) fail(400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(400, std::string("malformed JSON body: ") + e.what());
  }
}

}  // namespace

struct Server::Impl {
  ServerOptions opts;
  httplib::Server http;
  std::mutex run_mu;
  bool serving = false;
  bool stop_requested = false;

  mutable std::shared_mutex state_mu;
  bool loaded = false;
  std::optional<DenoisingTask> task;
  std::optional<EnergyNetParams> params;
  int k = 1;
  std::vector<MeasurementEntry> registry;
  Rng rng;

  std::mutex cache_mu;
  std::map<std::string, std::shared_future<std::shared_ptr<const void>>> cache;

  std::atomic<long long> feature_evaluations{0};
  std::atomic<long long> grid_hits{0};
  std::atomic<long long> grid_misses{0};

  explicit Impl(ServerOptions o) : opts(std::move(o)) { routes(); }

  // Computes `make` at most once per key; concurrent callers wait for it.
  template <typename T, typename Fn>
  std::shared_ptr<const T> memo(const std::string& key, Fn&& make,
                                bool count = false) {
    std::promise<std::shared_ptr<const void>> promise;
    std::shared_future<std::shared_ptr<const void>> fut;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(cache_mu);
      auto it = cache.find(key);
      if (it != cache.end()) {
        fut = it->second;
      } else {
        fut = promise.get_future().share();
        cache.emplace(key, fut);
        owner = true;
      }
    }
    if (count) (owner ? grid_misses : grid_hits).fetch_add(1);
    if (owner) {
      try {
        promise.set_value(std::make_shared<const T>(make()));
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard<std::mutex> lock(cache_mu);
        cache.erase(key);
      }
    }
    return std::static_pointer_cast<const T>(fut.get());
  }

  void require_loaded() const {
    if (!loaded) fail(503, "no task loaded");
  }

  MeasurementEntry entry(long long id) const {
    std::shared_lock lock(state_mu);
    require_loaded();
    if (id < 0 || static_cast<std::size_t>(id) >= registry.size()) {
      fail(404, "unknown measurement id " + std::to_string(id));
    }
    return registry[static_cast<std::size_t>(id)];
  }

  int rank_param(const httplib::Request& req) const {
    const long long kk = query_int(req, "k", k);
    if (kk < 1 || kk > 2 || kk > task->prior.dim()) {
      fail(400, "k must be 1 or 2 and at most the task dimension");
    }
    return static_cast<int>(kk);
  }

  int resolution_param(const httplib::Request& req) const {
    const long long res = query_int(req, "res", 0);
    if (res != 0 && (res < kMinGridResolution || res > kMaxResolution)) {
      fail(400, "res must lie in [" + std::to_string(kMinGridResolution) +
                    ", " + std::to_string(kMaxResolution) + "]");
    }
    return static_cast<int>(res);
  }

  std::shared_ptr<const Selection> selection(const MeasurementEntry& m,
                                             int kk) {
    return memo<Selection>(
        "sel|" + std::to_string(m.id) + "|" + std::to_string(kk), [&] {
          GmmParams post = posterior(*task, m.y);
          SelectedSubspace sel = select_subspace(post, kk);
          return Selection{std::move(post), std::move(sel)};
        });
  }

  std::shared_ptr<const Conditioning> conditioning(const MeasurementEntry& m,
                                                   const Selection& s) {
    return memo<Conditioning>("cond|" + std::to_string(m.id), [&] {
      feature_evaluations.fetch_add(1);
      return features(*params, m.y, s.sel.subspace, s.sel.stds);
    });
  }

  std::shared_ptr<const DensityGrid> ppd_grid(const MeasurementEntry& m, int kk,
                                              const std::string& model, int res,
                                              int n_kde) {
    const auto sel = selection(m, kk);
    if (model == "ebm") {
      if (!params) fail(409, "model 'ebm' unavailable: no checkpoint loaded");
      if (params->dims.k != kk) {
        fail(409, "model 'ebm' was trained for k=" +
                      std::to_string(params->dims.k));
      }
    } else if (model != "analytic" && model != "gaussian" && model != "kde") {
      fail(400, "model must be one of analytic, ebm, gaussian, kde");
    }
    std::string key = "grid|" + model + "|" + std::to_string(m.id) + "|" +
                      std::to_string(kk) + "|" + std::to_string(res);
    if (model == "kde") key += "|" + std::to_string(n_kde);
    return memo<DensityGrid>(
        key,
        [&] {
          const Measurement meas{m.id, m.y, sel->sel};
          const auto axes = default_whitened_axes(kk, res);
          if (model == "analytic") {
            return model_grid(AnalyticPpdModel(*task), meas, axes, false);
          }
          if (model == "gaussian") {
            return model_grid(GaussianPpdModel(), meas, axes, false);
          }
          if (model == "kde") {
            return model_grid(KdePpdModel(*task, n_kde, opts.seed), meas, axes,
                              false);
          }
          const auto cond = conditioning(m, *sel);
          DensityGrid g = grid_eval_log(
              [&](const MatrixXd& pts, VectorXd& out) {
                out = log_density_unnorm_batch(*params, *cond, pts);
              },
              axes);
          return normalize(std::move(g), false);
        },
        true);
  }

  std::shared_ptr<const DensityGrid> slice_grid(const MeasurementEntry& m,
                                                int kk, int res) {
    const auto sel = selection(m, kk);
    return memo<DensityGrid>(
        "slice|" + std::to_string(m.id) + "|" + std::to_string(kk) + "|" +
            std::to_string(res),
        [&] {
          const MixtureDensity post(sel->post);
          const Subspace& a = sel->sel.subspace;
          const VectorXd& stds = sel->sel.stds;
          DensityGrid g = grid_eval_log(
              [&](const MatrixXd& pts, VectorXd& out) {
                out.resize(pts.cols());
                for (Eigen::Index i = 0; i < pts.cols(); ++i) {
                  out[i] = post.log_density(
                      reconstruct(pts.col(i).cwiseProduct(stds), a));
                }
              },
              default_whitened_axes(kk, res));
          return normalize(std::move(g), false);
        },
        true);
  }

  json grid_payload(const MeasurementEntry& m, const Selection& s,
                    const DensityGrid& g) const {
    json out{{"id", m.id},
             {"grid", json::parse(grid_to_json(g))},
             {"subspace", json::parse(subspace_to_json(s.sel.subspace))},
             {"stds", to_json(s.sel.stds)},
             {"v_true", nullptr},
             {"nll_true", nullptr}};
    if (m.x_true) {
      const VectorXd v =
          project(*m.x_true, s.sel.subspace).cwiseQuotient(s.sel.stds);
      out["v_true"] = to_json(v);
      try {
        out["nll_true"] = nll(g, v) + s.sel.stds.array().log().sum();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kOutOfSupport) throw;
      }
    }
    return out;
  }

  json measurement_json(const MeasurementEntry& m) const {
    return {{"id", m.id},
            {"y", to_json(m.y)},
            {"x_true", m.x_true ? to_json(*m.x_true) : json(nullptr)}};
  }

  // ---------------------------------------------------------------------

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, 200, fn(req));
      } catch (const HttpError& e) {
        reply(res, e.status, {{"error", e.message}});
      } catch (const Error& e) {
        const bool client = e.kind() == ErrorKind::kRejectedInput ||
                            e.kind() == ErrorKind::kOutOfSupport;
        reply(res, client ? 400 : 500, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  }

  void routes() {
    // No SO_REUSEPORT: a second server on the same port must fail to bind.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    http.set_default_headers(
        {{"Access-Control-Allow-Origin", "*"},
         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
         {"Access-Control-Allow-Headers", "Content-Type"}});
    http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
    });

    if (!opts.static_dir.empty() &&
        std::filesystem::exists(opts.static_dir / "index.html")) {
      http.set_mount_point("/", opts.static_dir.string());
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html");
      });
    }

    http.Get("/health", guarded([](const httplib::Request&) {
               return json{{"status", "ok"}};
             }));

    http.Get("/api/task", guarded([this](const httplib::Request&) {
               std::shared_lock lock(state_mu);
               require_loaded();
               return json{{"d", task->prior.dim()},
                           {"L", task->prior.components()},
                           {"noise_std", task->noise_std},
                           {"K", k},
                           {"model_loaded", params.has_value()}};
             }));

    http.Get("/api/measurements", guarded([this](const httplib::Request&) {
               std::shared_lock lock(state_mu);
               require_loaded();
               json list = json::array();
               for (const auto& m : registry) list.push_back(measurement_json(m));
               return list;
             }));

    http.Post("/api/measurements", guarded([this](const httplib::Request& req) {
                if (opts.readonly) fail(403, "server is read-only");
                const json body = parse_body(req);
                if (!body.contains("count") || !body["count"].is_number_integer()) {
                  fail(400, "count must be an integer");
                }
                const long long count = body["count"].get<long long>();
                if (count < 1 || count > kMaxMeasurementsPerRequest) {
                  fail(400, "count must lie in [1, " +
                                std::to_string(kMaxMeasurementsPerRequest) + "]");
                }
                std::unique_lock lock(state_mu);
                require_loaded();
                JointSamples s;
                if (body.contains("seed") && !body["seed"].is_null()) {
                  if (!body["seed"].is_number_unsigned()) {
                    fail(400, "seed must be a nonnegative integer");
                  }
                  Rng seeded = derive_rng(body["seed"].get<std::uint64_t>(), 0x3ea5);
                  s = sample_joint(*task, seeded, count);
                } else {
                  s = sample_joint(*task, rng, count);
                }
                json list = json::array();
                for (Eigen::Index i = 0; i < count; ++i) {
                  registry.push_back(
                      {registry.size(), s.y.col(i), VectorXd(s.x.col(i))});
                  list.push_back(measurement_json(registry.back()));
                }
                return list;
              }));

    http.Get("/api/ppd", guarded([this](const httplib::Request& req) {
               const MeasurementEntry m = entry(query_int(req, "id", {}));
               const int kk = rank_param(req);
               const int res = resolution_param(req);
               const std::string model =
                   req.has_param("model") ? req.get_param_value("model")
                                          : "analytic";
               const int n = kde_samples(req);
               const auto g = ppd_grid(m, kk, model, res, n);
               json out = grid_payload(m, *selection(m, kk), *g);
               out["model"] = model;
               return out;
             }));

    http.Get("/api/slice", guarded([this](const httplib::Request& req) {
               const MeasurementEntry m = entry(query_int(req, "id", {}));
               const int kk = rank_param(req);
               const auto g = slice_grid(m, kk, resolution_param(req));
               json out = grid_payload(m, *selection(m, kk), *g);
               out["model"] = "slice";
               out["normalized_for_display"] = true;
               return out;
             }));

    http.Post("/api/reconstruct", guarded([this](const httplib::Request& req) {
                const json body = parse_body(req);
                if (!body.contains("id") || !body["id"].is_number_integer()) {
                  fail(400, "id must be an integer");
                }
                const MeasurementEntry m = entry(body["id"].get<long long>());
                int kk = k;
                if (body.contains("k")) {
                  if (!body["k"].is_number_integer()) fail(400, "k must be an integer");
                  kk = body["k"].get<int>();
                  if (kk < 1 || kk > 2 || kk > task->prior.dim()) {
                    fail(400, "k must be 1 or 2 and at most the task dimension");
                  }
                }
                if (!body.contains("v") || !body["v"].is_array()) {
                  fail(400, "v must be an array");
                }
                const json& jv = body["v"];
                if (static_cast<int>(jv.size()) != kk) {
                  fail(400, "v must have length " + std::to_string(kk));
                }
                VectorXd v(kk);
                for (int i = 0; i < kk; ++i) {
                  if (!jv[static_cast<std::size_t>(i)].is_number()) {
                    fail(400, "v entries must be numbers");
                  }
                  v[i] = jv[static_cast<std::size_t>(i)].get<double>();
                  if (!std::isfinite(v[i])) fail(400, "v entries must be finite");
                }
                const auto sel = selection(m, kk);
                const VectorXd x = reconstruct(v, sel->sel.subspace);
                return json{
                    {"id", m.id},
                    {"x", to_json(x)},
                    {"v", to_json(v)},
                    {"v_whitened", to_json(v.cwiseQuotient(sel->sel.stds))},
                    {"posterior_density_at_x", MixtureDensity(sel->post).density(x)},
                    {"prior_density_at_x", prior_density(task->prior, x)}};
              }));

    http.Get("/api/contours", guarded([this](const httplib::Request& req) {
               const MeasurementEntry m = entry(query_int(req, "id", {}));
               const int kk = rank_param(req);
               const int res = resolution_param(req);
               const std::string model =
                   req.has_param("model") ? req.get_param_value("model")
                                          : "analytic";
               std::vector<double> fractions(std::begin(kDefaultContourFractions),
                                             std::end(kDefaultContourFractions));
               if (req.has_param("fractions")) {
                 fractions = parse_fractions(req.get_param_value("fractions"));
               }
               const auto g = ppd_grid(m, kk, model, res, kde_samples(req));
               return json{{"id", m.id},
                           {"model", model},
                           {"fractions", fractions},
                           {"levels", mass_contour_levels(*g, fractions)}};
             }));

    http.Get("/api/stats", guarded([this](const httplib::Request&) {
               const ServerStats s = snapshot();
               return json{{"feature_evaluations", s.feature_evaluations},
                           {"grid_cache_hits", s.grid_cache_hits},
                           {"grid_cache_misses", s.grid_cache_misses},
                           {"measurements", s.measurements}};
             }));
  }

  int kde_samples(const httplib::Request& req) const {
    const long long n = query_int(req, "n", opts.default_kde_samples);
    if (n < 2 || n > kMaxKdeSamples) {
      fail(400, "n must lie in [2, " + std::to_string(kMaxKdeSamples) + "]");
    }
    return static_cast<int>(n);
  }

  ServerStats snapshot() const {
    std::shared_lock lock(state_mu);
    return {feature_evaluations.load(), grid_hits.load(), grid_misses.load(),
            registry.size()};
  }
};

Server::Server(ServerOptions opts)
    : impl_(std::make_unique<Impl>(std::move(opts))) {}

Server::~Server() { stop(); }

void Server::load(DenoisingTask task, std::optional<EnergyNetParams> params) {
  validate(task);
  int k = impl_->opts.k;
  if (params) {
    require(params->dims.d == task.prior.dim(), ErrorKind::kRejectedInput,
            "checkpoint dimension does not match the task");
    k = params->dims.k;
  }
  require(k >= 1 && k <= 2 && k <= task.prior.dim(), ErrorKind::kRejectedInput,
          "server supports K = 1 or 2");

  std::unique_lock lock(impl_->state_mu);
  {
    std::lock_guard<std::mutex> cache_lock(impl_->cache_mu);
    impl_->cache.clear();
  }
  impl_->registry.clear();
  impl_->rng = derive_rng(impl_->opts.seed, 0x5e55);
  if (task.prior.dim() == 2) {
    impl_->registry.push_back({0, figure_measurement(), std::nullopt});
  }
  if (impl_->opts.initial_measurements > 0) {
    Rng rng = derive_rng(impl_->opts.seed, 0x1417);
    const JointSamples s =
        sample_joint(task, rng, impl_->opts.initial_measurements);
    for (Eigen::Index i = 0; i < s.y.cols(); ++i) {
      impl_->registry.push_back(
          {impl_->registry.size(), s.y.col(i), VectorXd(s.x.col(i))});
    }
  }
  impl_->task = std::move(task);
  impl_->params = std::move(params);
  impl_->k = k;
  impl_->loaded = true;
}

int Server::bind() {
  auto& http = impl_->http;
  if (impl_->opts.port == 0) {
    const int port = http.bind_to_any_port(impl_->opts.host);
    require(port > 0, ErrorKind::kRejectedInput,
            "cannot bind " + impl_->opts.host);
    return port;
  }
  require(http.bind_to_port(impl_->opts.host, impl_->opts.port),
          ErrorKind::kRejectedInput,
          "cannot bind " + impl_->opts.host + ":" +
              std::to_string(impl_->opts.port) + " (port in use?)");
  return impl_->opts.port;
}

void Server::serve() {
  {
    std::lock_guard lock(impl_->run_mu);
    if (impl_->stop_requested) return;
    impl_->serving = true;
  }
  impl_->http.listen_after_bind();
}

void Server::stop() {
  {
    std::lock_guard lock(impl_->run_mu);
    impl_->stop_requested = true;
    if (!impl_->serving) return;
  }
  // httplib ignores stop() until the accept loop is running.
  impl_->http.wait_until_ready();
  impl_->http.stop();
}

ServerStats Server::stats() const { return impl_->snapshot(); }

}  // namespace ppdlab
