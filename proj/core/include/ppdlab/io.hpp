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

#include <filesystem>
#include <string>

#include "ppdlab/ebm_core.hpp"
#include "ppdlab/gmm_world.hpp"
#include "ppdlab/mcd_train.hpp"
#include "ppdlab/subspace.hpp"

namespace ppdlab {

// JSON text formats. Parsers throw kSchema with the offending field path.

/// {"origin": [...], "directions": [[column 0], [column 1], ...]}
std::string subspace_to_json(const Subspace& a);
Subspace subspace_from_json(const std::string& text);

/// {"weights", "means", "covariances" (row-major), "noise_std"}
std::string task_to_json(const DenoisingTask& task);
DenoisingTask task_from_json(const std::string& text);

inline constexpr const char* kCheckpointVersion = "ppdlab-ckpt-1";

std::string checkpoint_to_json(const EnergyNetParams& p);
EnergyNetParams checkpoint_from_json(const std::string& text);

/// Training settings as read from a config file.
struct TrainSettings {
  TrainConfig config;
  NoiseSchedule schedule = default_schedule(16);
  int k = 1;
};

/// Fields present in `text` override `base`. Field names follow TrainConfig;
/// the schedule lives under "schedule" as {"levels": T} or
/// {"alphas": [...], "level_prior": [...]}, and network sizes under "net".
TrainSettings settings_from_json(const std::string& text, TrainSettings base);
std::string settings_to_json(const TrainSettings& s);

/// One NDJSON line (without the trailing newline).
std::string log_record_to_json(const TrainLogRecord& r);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

}  // namespace ppdlab
