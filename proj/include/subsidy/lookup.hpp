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
#include <string>
#include <string_view>
#include <unordered_map>

#include "subsidy/allocator.hpp"

namespace subsidy {

struct LookupResult {
  double amount = 0.0;
  bool fallback = false;
};

/// Immutable in-memory view of an allocation dictionary. Raw request keys
/// are coarsened the same way the plan was built.
class LookupTable {
 public:
  LookupTable() = default;
  explicit LookupTable(const AllocationDictionary& dictionary);

  LookupResult lookup(int k, const ClusterKey& raw) const;
  std::size_t size() const { return table_.size(); }
  const Coarsening& coarsening() const { return coarsening_; }

 private:
  static std::uint64_t pack(int k, const ClusterKey& key);

  Coarsening coarsening_;
  std::unordered_map<std::uint64_t, double> table_;
};

/// One protocol exchange. Requests:
///   {"k":0,"origin":1,"dest":2,"time_bucket":3}  -> {"amount":x}
///   unknown key                                  -> {"amount":0,"fallback":true}
///   anything unparsable                          -> {"error":"bad_request"}
/// The returned line carries no trailing newline.
std::string handle_request(const LookupTable& table, std::string_view line);

}  // namespace subsidy
