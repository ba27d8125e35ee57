// Copyright 2026 The Subsidy Authors.
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
#include <initializer_list>
#include <random>

namespace subsidy {

// Counter-based helpers: a value keyed by (seed, stream, ...) is reproducible
// no matter in which order or on which thread it is requested.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

/// Uniform in [0,1) with 53 random bits.
constexpr double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline std::mt19937_64 keyed_engine(std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(hash_keys(keys));
}

// Named streams split off the global seed.
enum class Stream : std::uint64_t {
  kWorld = 1,
  kQueries = 2,
  kLogging = 3,
  kOutcome = 4,
  kRevenue = 5,
  kTrain = 6,
  kSim = 7,
  kEval = 8,
};

}  // namespace subsidy
