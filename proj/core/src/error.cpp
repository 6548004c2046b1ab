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

#include "ppdlab/error.hpp"

namespace ppdlab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kRejectedInput: return "rejected-input";
    case ErrorKind::kDegenerateDirections: return "degenerate-directions";
    case ErrorKind::kDegenerateTask: return "degenerate-task";
    case ErrorKind::kChainDiverged: return "chain-diverged";
    case ErrorKind::kTrainingFailed: return "training-failed";
    case ErrorKind::kPoisonedGrid: return "poisoned-grid";
    case ErrorKind::kZeroMass: return "zero-mass";
    case ErrorKind::kOutOfSupport: return "out-of-support";
    case ErrorKind::kLatticeMismatch: return "lattice-mismatch";
    case ErrorKind::kSchema: return "schema";
  }
  return "unknown";
}

void raise(ErrorKind kind, const std::string& what) {
  throw Error(kind, std::string(to_string(kind)) + ": " + what);
}

}  // namespace ppdlab
