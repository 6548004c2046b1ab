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

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppdlab {

enum class ErrorKind {
  kRejectedInput,         // dimension mismatch, out-of-range argument
  kDegenerateDirections,  // rank-deficient subspace basis
  kDegenerateTask,        // failed Cholesky / non-PSD covariance
  kChainDiverged,         // non-finite energy inside an MCMC chain
  kTrainingFailed,        // non-finite training loss
  kPoisonedGrid,          // non-finite density on a lattice point
  kZeroMass,              // grid integrates to zero
  kOutOfSupport,          // query point outside grid bounds
  kLatticeMismatch,       // comparing grids on different lattices
  kSchema,                // malformed JSON input
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& what);

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) raise(kind, what);
}

}  // namespace ppdlab
