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

#include "subsidy/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace subsidy {

using nlohmann::json;

namespace {

constexpr std::string_view kDatasetFormat = "subsidy-dataset/1";

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotOnGrid: return "not_on_grid";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kTape: return "tape";
    case ErrorCode::kEmptyBatch: return "empty_batch";
    case ErrorCode::kData: return "data";
    case ErrorCode::kDegenerateLabels: return "degenerate_labels";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kInstanceTooLarge: return "instance_too_large";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

TreatmentGrid::TreatmentGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) {
    throw Error(ErrorCode::kConfig, "treatment grid needs at least two levels");
  }
  if (levels_[0] != 0.0) {
    throw Error(ErrorCode::kConfig, "treatment grid level 0 must be the zero-subsidy control");
  }
  for (std::size_t j = 1; j < levels_.size(); ++j) {
    if (!(levels_[j] > levels_[j - 1]) || !std::isfinite(levels_[j])) {
      throw Error(ErrorCode::kConfig, "treatment grid levels must be finite and strictly increasing");
    }
  }
}

std::size_t treatment_index(const TreatmentGrid& grid, double amount) {
  const auto& levels = grid.levels();
  auto it = std::lower_bound(levels.begin(), levels.end(), amount);
  if (it == levels.end() || *it != amount) {
    throw Error(ErrorCode::kNotOnGrid, "amount " + std::to_string(amount) + " is not a treatment level");
  }
  return static_cast<std::size_t>(it - levels.begin());
}

std::string_view provenance_name(Provenance p) {
  return p == Provenance::kRct ? "rct" : "observational";
}

Provenance parse_provenance(std::string_view name) {
  if (name == "rct") return Provenance::kRct;
  if (name == "observational") return Provenance::kObservational;
  throw Error(ErrorCode::kConfig, "unknown provenance '" + std::string(name) + "'");
}

bool ElasticityCurve::valid() const {
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0 && p[j] <= 1.0)) return false;
    if (j > 0 && p[j] < p[j - 1]) return false;
  }
  return !p.empty();
}

std::size_t ClusterKeyHash::operator()(const ClusterKey& k) const noexcept {
  std::uint64_t h = static_cast<std::uint32_t>(k.origin_zone);
  h = h * 0x9E3779B97F4A7C15ULL + static_cast<std::uint32_t>(k.dest_zone);
  h = h * 0x9E3779B97F4A7C15ULL + static_cast<std::uint32_t>(k.time_bucket);
  h ^= h >> 29;
  return static_cast<std::size_t>(h);
}

std::string_view violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kEmptyDataset: return "EmptyDataset";
    case ViolationKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ViolationKind::kFeatureLength: return "FeatureLength";
    case ViolationKind::kProbabilityRange: return "ProbabilityRange";
    case ViolationKind::kBadOutcome: return "BadOutcome";
    case ViolationKind::kEmptyArm: return "EmptyArm";
  }
  return "Unknown";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate_dataset(const Dataset& d) {
  ValidationReport report;
  auto add = [&](ViolationKind kind, long long record, std::string detail) {
    report.violations.push_back({kind, record, std::move(detail)});
  };
  if (d.records.empty()) add(ViolationKind::kEmptyDataset, -1, "dataset has no records");
  for (const auto& s : d.services) {
    if (!(s.gamma >= 0.0 && s.gamma <= 1.0)) {
      add(ViolationKind::kProbabilityRange, -1, "service " + std::to_string(s.id) + " gamma outside [0,1]");
    }
  }
  const auto levels = static_cast<long long>(d.grid.size());
  std::vector<std::size_t> arm_counts(d.grid.size(), 0);
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto& r = d.records[i];
    const auto idx = static_cast<long long>(i);
    if (r.treatment_idx < 0 || r.treatment_idx >= levels) {
      add(ViolationKind::kIndexOutOfRange, idx, "treatment_idx " + std::to_string(r.treatment_idx));
    } else {
      ++arm_counts[static_cast<std::size_t>(r.treatment_idx)];
    }
    if (r.query.features.size() != d.feature_dim) {
      add(ViolationKind::kFeatureLength, idx,
          "feature length " + std::to_string(r.query.features.size()) + " != " + std::to_string(d.feature_dim));
    }
    if ((r.converted != 0 && r.converted != 1) || !(r.revenue_if_converted >= 0.0)) {
      add(ViolationKind::kBadOutcome, idx, "converted must be 0/1 and revenue nonnegative");
    }
  }
  if (!d.records.empty()) {
    for (std::size_t j = 0; j < arm_counts.size(); ++j) {
      if (arm_counts[j] == 0) add(ViolationKind::kEmptyArm, -1, "no records at treatment level " + std::to_string(j));
    }
  }
  return report;
}

namespace {

json header_json(const Dataset& d) {
  json services = json::array();
  for (const auto& s : d.services) services.push_back({{"id", s.id}, {"gamma", s.gamma}});
  return {{"format", kDatasetFormat},
          {"grid", d.grid.levels()},
          {"services", services},
          {"feature_dim", d.feature_dim},
          {"provenance", provenance_name(d.provenance)}};
}

json record_json(const OutcomeRecord& r) {
  const auto& q = r.query;
  return {{"id", q.id},
          {"origin", q.origin_zone},
          {"dest", q.dest_zone},
          {"time_bucket", q.time_bucket},
          {"k", q.service_class},
          {"x", q.features},
          {"t", r.treatment_idx},
          {"y", r.converted},
          {"revenue", r.revenue_if_converted}};
}

}  // namespace

void write_dataset(const Dataset& d, std::ostream& out) {
  out << header_json(d).dump() << '\n';
  for (const auto& r : d.records) out << record_json(r).dump() << '\n';
}

Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  try {
    if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "dataset file is empty");
    ++line_no;
    const json header = json::parse(line);
    if (header.value("format", std::string()) != kDatasetFormat) {
      throw Error(ErrorCode::kParse, "unrecognized dataset format header");
    }
    d.grid = TreatmentGrid(header.at("grid").get<std::vector<double>>());
    for (const auto& s : header.at("services")) {
      d.services.push_back({s.at("id").get<int>(), s.at("gamma").get<double>()});
    }
    d.feature_dim = header.at("feature_dim").get<std::size_t>();
    d.provenance = parse_provenance(header.at("provenance").get<std::string>());
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      OutcomeRecord r;
      r.query.id = j.at("id").get<std::uint64_t>();
      r.query.origin_zone = j.at("origin").get<int>();
      r.query.dest_zone = j.at("dest").get<int>();
      r.query.time_bucket = j.at("time_bucket").get<int>();
      r.query.service_class = j.at("k").get<int>();
      r.query.features = j.at("x").get<std::vector<double>>();
      r.treatment_idx = j.at("t").get<int>();
      r.converted = j.at("y").get<int>();
      r.revenue_if_converted = j.at("revenue").get<double>();
      d.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "dataset line " + std::to_string(line_no) + ": " + e.what());
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path + " for writing");
  write_dataset(d, out);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_dataset(in);
}

}  // namespace subsidy
