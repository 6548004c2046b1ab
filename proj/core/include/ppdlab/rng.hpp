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
#include <random>

namespace ppdlab {

/// The project-wide generator. Every sampling routine takes one explicitly.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent streams from a seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream derivation: the stream for (seed, a, b) does not
/// depend on how many other streams were created before it.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t a = 0,
                      std::uint64_t b = 0) {
  return Rng(mix64(mix64(mix64(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL)));
}

}  // namespace ppdlab
