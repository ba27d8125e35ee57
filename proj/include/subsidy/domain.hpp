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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "subsidy/error.hpp"

namespace subsidy {

/// Ordered subsidy amounts. Index 0 is the control arm (amount 0).
class TreatmentGrid {
 public:
  TreatmentGrid() = default;
  /// Throws kConfig unless levels[0] == 0, levels strictly increase and
  /// there are at least two levels.
  explicit TreatmentGrid(std::vector<double> levels);

  static TreatmentGrid default_grid() { return TreatmentGrid({0, 1, 2, 3, 5}); }

  const std::vector<double>& levels() const { return levels_; }
  std::size_t size() const { return levels_.size(); }
  double amount(std::size_t j) const { return levels_.at(j); }

  friend bool operator==(const TreatmentGrid&, const TreatmentGrid&) = default;

 private:
  std::vector<double> levels_;
};

/// Index of `amount` on the grid; kNotOnGrid when it is not a level.
std::size_t treatment_index(const TreatmentGrid& grid, double amount);

struct ServiceClass {
  int id = 0;
  // Probability that an order of this class is fulfilled by supply.
  double gamma = 1.0;

  friend bool operator==(const ServiceClass&, const ServiceClass&) = default;
};

struct Query {
  std::uint64_t id = 0;
  int origin_zone = 0;
  int dest_zone = 0;
  int time_bucket = 0;
  std::vector<double> features;
  int service_class = 0;

  friend bool operator==(const Query&, const Query&) = default;
};

struct OutcomeRecord {
  Query query;
  int treatment_idx = 0;
  int converted = 0;
  double revenue_if_converted = 0.0;

  friend bool operator==(const OutcomeRecord&, const OutcomeRecord&) = default;
};

enum class Provenance { kObservational, kRct };

std::string_view provenance_name(Provenance p);
Provenance parse_provenance(std::string_view name);

struct Dataset {
  TreatmentGrid grid;
  std::vector<ServiceClass> services;
  std::size_t feature_dim = 0;
  Provenance provenance = Provenance::kObservational;
  std::vector<OutcomeRecord> records;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Conversion probability per treatment level.
struct ElasticityCurve {
  std::vector<double> p;

  /// True when every entry is in [0,1] and the curve is nondecreasing.
  bool valid() const;

  friend bool operator==(const ElasticityCurve&, const ElasticityCurve&) = default;
};

struct ClusterKey {
  int origin_zone = 0;
  int dest_zone = 0;
  int time_bucket = 0;

  friend auto operator<=>(const ClusterKey&, const ClusterKey&) = default;
  friend bool operator==(const ClusterKey&, const ClusterKey&) = default;
};

struct ClusterKeyHash {
  std::size_t operator()(const ClusterKey& k) const noexcept;
};

enum class ViolationKind {
  kEmptyDataset,
  kIndexOutOfRange,
  kFeatureLength,
  kProbabilityRange,
  kBadOutcome,
  kEmptyArm,
};

std::string_view violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  // Record index, or -1 for dataset-level findings.
  long long record = -1;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
};

ValidationReport validate_dataset(const Dataset& d);

// Dataset file: one JSON header line, then one JSON object per record.
void write_dataset(const Dataset& d, std::ostream& out);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace subsidy
