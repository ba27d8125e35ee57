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

#include "subsidy/lookup.hpp"

#include "json.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

constexpr std::string_view kBadRequest = R"({"error":"bad_request"})";

bool int_field(const json& j, const char* name, int& out) {
  auto it = j.find(name);
  if (it == j.end() || !it->is_number_integer()) return false;
  const auto v = it->get<long long>();
  if (v < 0 || v > 0xFFFF) return false;
  out = static_cast<int>(v);
  return true;
}

}  // namespace

LookupTable::LookupTable(const AllocationDictionary& dictionary) : coarsening_(dictionary.coarsening) {
  table_.reserve(dictionary.entries.size());
  for (const auto& e : dictionary.entries) table_[pack(e.k, e.key)] = e.amount;
}

// 16 bits per field; keys outside that range never match.
std::uint64_t LookupTable::pack(int k, const ClusterKey& key) {
  auto f = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint16_t>(v)); };
  return f(k) << 48 | f(key.origin_zone) << 32 | f(key.dest_zone) << 16 | f(key.time_bucket);
}

LookupResult LookupTable::lookup(int k, const ClusterKey& raw) const {
  const auto key = coarsening_.apply(raw);
  if (k < 0 || k > 0xFFFF || key.origin_zone < 0 || key.origin_zone > 0xFFFF || key.dest_zone < 0 ||
      key.dest_zone > 0xFFFF || key.time_bucket < 0 || key.time_bucket > 0xFFFF) {
    return {0.0, true};
  }
  auto it = table_.find(pack(k, key));
  if (it == table_.end()) return {0.0, true};
  return {it->second, false};
}

std::string handle_request(const LookupTable& table, std::string_view line) {
  json req = json::parse(line.begin(), line.end(), nullptr, false);
  if (req.is_discarded() || !req.is_object()) return std::string(kBadRequest);
  int k = 0;
  ClusterKey key;
  if (!int_field(req, "k", k) || !int_field(req, "origin", key.origin_zone) ||
      !int_field(req, "dest", key.dest_zone) || !int_field(req, "time_bucket", key.time_bucket)) {
    return std::string(kBadRequest);
  }
  const auto r = table.lookup(k, key);
  json resp = {{"amount", r.amount}};
  if (r.fallback) resp["fallback"] = true;
  return resp.dump();
}

}  // namespace subsidy
