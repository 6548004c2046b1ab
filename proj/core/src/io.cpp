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

#include "ppdlab/io.hpp"

#include <unistd.h>

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace ppdlab {
namespace {

using json = nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

[[noreturn]] void schema(const std::string& path, const std::string& msg) {
  raise(ErrorKind::kSchema, path + ": " + msg);
}

json parse(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    raise(ErrorKind::kSchema, what + ": " + e.what());
  }
}

const json& field(const json& j, const std::string& key,
                  const std::string& path) {
  if (!j.is_object()) schema(path.empty() ? "<root>" : path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) schema(path.empty() ? key : path + "." + key, "missing");
  return *it;
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string at(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) schema(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) schema(path, "not finite");
  return v;
}

long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema(path, "expected an integer");
  return j.get<long long>();
}

VectorXd vector(const json& j, const std::string& path) {
  if (!j.is_array()) schema(path, "expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], at(path, i));
  }
  return v;
}

MatrixXd rows(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) schema(path, "expected a non-empty array of rows");
  const std::size_t n_cols = j[0].is_array() ? j[0].size() : 0;
  MatrixXd m(static_cast<Eigen::Index>(j.size()),
             static_cast<Eigen::Index>(n_cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const VectorXd row = vector(j[r], at(path, r));
    if (static_cast<std::size_t>(row.size()) != n_cols) {
      schema(at(path, r), "ragged row");
    }
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json to_json(const VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

json rows_to_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.push_back(to_json(m.row(r).transpose()));
  }
  return out;
}

std::vector<int> widths(const json& j, const std::string& path) {
  if (!j.is_array()) schema(path, "expected an array");
  std::vector<int> w;
  for (std::size_t i = 0; i < j.size(); ++i) {
    w.push_back(static_cast<int>(integer(j[i], at(path, i))));
  }
  return w;
}

void check_shape(const MatrixXd& got, const MatrixXd& want,
                 const std::string& path) {
  if (got.rows() != want.rows() || got.cols() != want.cols()) {
    schema(path, "expected " + std::to_string(want.rows()) + "x" +
                     std::to_string(want.cols()) + ", got " +
                     std::to_string(got.rows()) + "x" +
                     std::to_string(got.cols()));
  }
}

DenseLayer layer_from(const json& j, const DenseLayer& shape,
                      const std::string& path) {
  DenseLayer l{rows(field(j, "w", path), join(path, "w")),
               vector(field(j, "b", path), join(path, "b"))};
  check_shape(l.w, shape.w, join(path, "w"));
  check_shape(l.b, shape.b, join(path, "b"));
  return l;
}

json layer_to(const DenseLayer& l) {
  return {{"w", rows_to_json(l.w)}, {"b", to_json(l.b)}};
}

}  // namespace

std::string subspace_to_json(const Subspace& a) {
  json dirs = json::array();
  for (Eigen::Index c = 0; c < a.rank(); ++c) {
    dirs.push_back(to_json(a.directions().col(c)));
  }
  return json{{"origin", to_json(a.origin())}, {"directions", dirs}}.dump();
}

Subspace subspace_from_json(const std::string& text) {
  const json j = parse(text, "subspace");
  const VectorXd origin = vector(field(j, "origin", ""), "origin");
  // Stored as a list of columns, so the row-major reader yields Wᵀ.
  const MatrixXd cols = rows(field(j, "directions", ""), "directions");
  if (cols.cols() != origin.size()) {
    schema("directions", "column length must equal origin length");
  }
  try {
    return Subspace(origin, cols.transpose());
  } catch (const Error& e) {
    schema("directions", e.what());
  }
}

std::string task_to_json(const DenoisingTask& task) {
  json means = json::array(), covs = json::array();
  for (const auto& m : task.prior.means) means.push_back(to_json(m));
  for (const auto& c : task.prior.covariances) covs.push_back(rows_to_json(c));
  return json{{"weights", to_json(task.prior.weights)},
              {"means", means},
              {"covariances", covs},
              {"noise_std", task.noise_std}}
      .dump(2);
}

DenoisingTask task_from_json(const std::string& text) {
  const json j = parse(text, "task");
  DenoisingTask t;
  t.prior.weights = vector(field(j, "weights", ""), "weights");
  const json& means = field(j, "means", "");
  if (!means.is_array()) schema("means", "expected an array");
  for (std::size_t i = 0; i < means.size(); ++i) {
    t.prior.means.push_back(vector(means[i], at("means", i)));
  }
  const json& covs = field(j, "covariances", "");
  if (!covs.is_array()) schema("covariances", "expected an array");
  for (std::size_t i = 0; i < covs.size(); ++i) {
    t.prior.covariances.push_back(rows(covs[i], at("covariances", i)));
  }
  t.noise_std = number(field(j, "noise_std", ""), "noise_std");
  validate(t);
  return t;
}

std::string checkpoint_to_json(const EnergyNetParams& p) {
  json feature = json::array(), head = json::array(), film = json::array();
  for (const auto& l : p.feature_layers) feature.push_back(layer_to(l));
  for (const auto& l : p.head_layers) head.push_back(layer_to(l));
  for (const auto& f : p.film_maps) {
    film.push_back({{"scale_w", rows_to_json(f.scale_w)},
                    {"scale_b", to_json(f.scale_b)},
                    {"shift_w", rows_to_json(f.shift_w)},
                    {"shift_b", to_json(f.shift_b)}});
  }
  const NetDims& d = p.dims;
  json dims{{"d", d.d},
            {"K", d.k},
            {"T", d.levels},
            {"h_dim", d.h_dim},
            {"feature_widths", d.feature_widths},
            {"head_widths", d.head_widths},
            {"gaussian_anchor", d.gaussian_anchor}};
  return json{{"version", kCheckpointVersion},
              {"dims", dims},
              {"feature_layers", feature},
              {"head_layers", head},
              {"film_maps", film}}
      .dump();
}

EnergyNetParams checkpoint_from_json(const std::string& text) {
  const json j = parse(text, "checkpoint");
  const json& version = field(j, "version", "");
  if (!version.is_string() || version.get<std::string>() != kCheckpointVersion) {
    schema("version", std::string("expected \"") + kCheckpointVersion + "\"");
  }
  const json& jd = field(j, "dims", "");
  NetDims dims;
  dims.d = static_cast<int>(integer(field(jd, "d", "dims"), "dims.d"));
  dims.k = static_cast<int>(integer(field(jd, "K", "dims"), "dims.K"));
  dims.levels = static_cast<int>(integer(field(jd, "T", "dims"), "dims.T"));
  dims.h_dim = static_cast<int>(integer(field(jd, "h_dim", "dims"), "dims.h_dim"));
  dims.feature_widths =
      widths(field(jd, "feature_widths", "dims"), "dims.feature_widths");
  dims.head_widths = widths(field(jd, "head_widths", "dims"), "dims.head_widths");
  if (jd.contains("gaussian_anchor")) {
    if (!jd["gaussian_anchor"].is_boolean()) {
      schema("dims.gaussian_anchor", "expected a boolean");
    }
    dims.gaussian_anchor = jd["gaussian_anchor"].get<bool>();
  }
  try {
    validate(dims);
  } catch (const Error& e) {
    schema("dims", e.what());
  }

  // The initialized network supplies the expected shapes.
  EnergyNetParams p = init_params(dims, 0);
  auto read_layers = [&](const char* key, std::vector<DenseLayer>& layers) {
    const json& arr = field(j, key, "");
    if (!arr.is_array() || arr.size() != layers.size()) {
      schema(key, "expected " + std::to_string(layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i] = layer_from(arr[i], layers[i], at(key, i));
    }
  };
  read_layers("feature_layers", p.feature_layers);
  read_layers("head_layers", p.head_layers);
  const json& film = field(j, "film_maps", "");
  if (!film.is_array() || film.size() != p.film_maps.size()) {
    schema("film_maps",
           "expected " + std::to_string(p.film_maps.size()) + " entries");
  }
  for (std::size_t i = 0; i < p.film_maps.size(); ++i) {
    const std::string path = at("film_maps", i);
    FilmMap& f = p.film_maps[i];
    FilmMap g{rows(field(film[i], "scale_w", path), join(path, "scale_w")),
              vector(field(film[i], "scale_b", path), join(path, "scale_b")),
              rows(field(film[i], "shift_w", path), join(path, "shift_w")),
              vector(field(film[i], "shift_b", path), join(path, "shift_b"))};
    check_shape(g.scale_w, f.scale_w, join(path, "scale_w"));
    check_shape(g.scale_b, f.scale_b, join(path, "scale_b"));
    check_shape(g.shift_w, f.shift_w, join(path, "shift_w"));
    check_shape(g.shift_b, f.shift_b, join(path, "shift_b"));
    f = std::move(g);
  }
  return p;
}

TrainSettings settings_from_json(const std::string& text, TrainSettings s) {
  const json j = parse(text, "config");
  if (!j.is_object()) schema("<root>", "expected an object");
  static const std::set<std::string> known{
      "learning_rate", "lr_decay",     "batch_size",   "total_steps",  "langevin_steps",
      "langevin_step_size", "adam_beta1", "adam_beta2", "adam_epsilon",
      "seed",          "eval_every",   "val_pairs",    "val_resolution",
      "threads",       "k",            "net",          "schedule"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) schema(key, "unknown field");
  }
  TrainConfig& c = s.config;
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = number(j[key], key);
  };
  auto integral = [&](const char* key, auto& out) {
    if (j.contains(key)) {
      out = static_cast<std::remove_reference_t<decltype(out)>>(
          integer(j[key], key));
    }
  };
  num("learning_rate", c.learning_rate);
  if (j.contains("lr_decay")) {
    const json& d = j["lr_decay"];
    if (d == "none") {
      c.lr_decay = LrDecay::kNone;
    } else if (d == "cosine") {
      c.lr_decay = LrDecay::kCosine;
    } else {
      schema("lr_decay", "expected \"none\" or \"cosine\"");
    }
  }
  integral("batch_size", c.batch_size);
  integral("total_steps", c.total_steps);
  integral("langevin_steps", c.langevin_steps);
  num("langevin_step_size", c.langevin_step_size);
  num("adam_beta1", c.adam_beta1);
  num("adam_beta2", c.adam_beta2);
  num("adam_epsilon", c.adam_epsilon);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) schema("seed", "expected a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  integral("eval_every", c.eval_every);
  integral("val_pairs", c.val_pairs);
  integral("val_resolution", c.val_resolution);
  integral("threads", c.threads);
  integral("k", s.k);
  if (j.contains("net")) {
    const json& n = j["net"];
    if (!n.is_object()) schema("net", "expected an object");
    for (const auto& [key, value] : n.items()) {
      if (key == "h_dim") {
        c.net.h_dim = static_cast<int>(integer(value, "net.h_dim"));
      } else if (key == "feature_widths") {
        c.net.feature_widths = widths(value, "net.feature_widths");
      } else if (key == "head_widths") {
        c.net.head_widths = widths(value, "net.head_widths");
      } else if (key == "gaussian_anchor") {
        if (!value.is_boolean()) schema("net.gaussian_anchor", "expected a boolean");
        c.net.gaussian_anchor = value.get<bool>();
      } else {
        schema("net." + key, "unknown field");
      }
    }
  }
  if (j.contains("schedule")) {
    const json& sj = j["schedule"];
    if (sj.contains("levels")) {
      s.schedule = default_schedule(
          static_cast<int>(integer(sj["levels"], "schedule.levels")));
    } else {
      NoiseSchedule sched;
      const VectorXd a = vector(field(sj, "alphas", "schedule"), "schedule.alphas");
      const VectorXd p =
          vector(field(sj, "level_prior", "schedule"), "schedule.level_prior");
      sched.alphas.assign(a.begin(), a.end());
      sched.level_prior.assign(p.begin(), p.end());
      s.schedule = sched;
    }
    try {
      validate(s.schedule);
    } catch (const Error& e) {
      schema("schedule", e.what());
    }
  }
  try {
    validate(c);
  } catch (const Error& e) {
    schema("<root>", e.what());
  }
  require(s.k >= 1, ErrorKind::kSchema, "k: must be >= 1");
  return s;
}

std::string settings_to_json(const TrainSettings& s) {
  const TrainConfig& c = s.config;
  return json{{"learning_rate", c.learning_rate},
              {"lr_decay", c.lr_decay == LrDecay::kCosine ? "cosine" : "none"},
              {"batch_size", c.batch_size},
              {"total_steps", c.total_steps},
              {"langevin_steps", c.langevin_steps},
              {"langevin_step_size", c.langevin_step_size},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"val_pairs", c.val_pairs},
              {"val_resolution", c.val_resolution},
              {"threads", c.threads},
              {"k", s.k},
              {"net",
               {{"h_dim", c.net.h_dim},
                {"feature_widths", c.net.feature_widths},
                {"head_widths", c.net.head_widths},
                {"gaussian_anchor", c.net.gaussian_anchor}}},
              {"schedule",
               {{"alphas", s.schedule.alphas},
                {"level_prior", s.schedule.level_prior}}}}
      .dump(2);
}

std::string log_record_to_json(const TrainLogRecord& r) {
  json j{{"step", r.step},
         {"cd_gap", r.cd_gap},
         {"ce_loss", r.ce_loss},
         {"acceptance", r.acceptance}};
  if (r.val_nll) j["val_nll"] = *r.val_nll;
  return j.dump();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kRejectedInput,
          "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::kRejectedInput,
            "cannot write " + tmp.string());
    out << content;
    out.flush();
    require(static_cast<bool>(out), ErrorKind::kRejectedInput,
            "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    raise(ErrorKind::kRejectedInput,
          "cannot move " + tmp.string() + " to " + path.string());
  }
}

}  // namespace ppdlab
