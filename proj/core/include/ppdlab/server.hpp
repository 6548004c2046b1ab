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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "ppdlab/ebm_core.hpp"
#include "ppdlab/gmm_world.hpp"

namespace ppdlab {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  bool readonly = false;
  std::uint64_t seed = 0;
  int k = 1;  // subspace rank when no checkpoint is loaded
  // Registered at load time: the figure measurement, then seeded draws.
  int initial_measurements = 8;
  int default_kde_samples = 100;
  std::filesystem::path static_dir;  // empty: built-in placeholder page
};

struct ServerStats {
  long long feature_evaluations = 0;
  long long grid_cache_hits = 0;
  long long grid_cache_misses = 0;
  std::size_t measurements = 0;
};

/// JSON API over one task and an optional trained network.
///
/// GET  /health
/// GET  /api/task
/// GET  /api/measurements            (registered measurements)
/// POST /api/measurements {count, seed?}
/// GET  /api/ppd?id&model&res&k&n
/// GET  /api/slice?id&res&k
/// POST /api/reconstruct {id, v, k?}
/// GET  /api/contours?id&model&fractions&res&k&n
/// GET  /api/stats
///
/// Grids are whitened and normalized. Endpoints answer 503 until load().
class Server {
 public:
  explicit Server(ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void load(DenoisingTask task, std::optional<EnergyNetParams> params);

  /// Binds the socket and returns the port. Throws kRejectedInput when the
  /// address is unavailable.
  int bind();
  /// Serves until stop(); call bind() first.
  void serve();
  /// Safe from any thread, before or after serve() starts.
  void stop();

  ServerStats stats() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ppdlab
