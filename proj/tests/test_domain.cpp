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

#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "subsidy/domain.hpp"
#include "test_util.hpp"

using namespace subsidy;
using subsidy::testing::code_of;

namespace {

Dataset small_dataset(Provenance prov = Provenance::kObservational) {
  Dataset d;
  d.grid = TreatmentGrid::default_grid();
  d.services = {{0, 0.6}, {1, 0.3}};
  d.feature_dim = 3;
  d.provenance = prov;
  for (int i = 0; i < 10; ++i) {
    OutcomeRecord r;
    r.query.id = static_cast<std::uint64_t>(i);
    r.query.origin_zone = i % 3;
    r.query.dest_zone = (i + 1) % 3;
    r.query.time_bucket = i;
    r.query.features = {0.1 * i, 0.5, 1.0 - 0.1 * i};
    r.query.service_class = i % 2;
    r.treatment_idx = i % 5;
    r.converted = i % 2;
    r.revenue_if_converted = 10.0 + i;
    d.records.push_back(r);
  }
  return d;
}

}  // namespace

TEST_CASE("treatment_index maps amounts to grid positions") {
  const TreatmentGrid grid({0, 2, 4});
  CHECK(treatment_index(grid, 0) == 0);
  CHECK(treatment_index(grid, 2) == 1);
  CHECK(treatment_index(grid, 4) == 2);
  CHECK(code_of([&] { treatment_index(grid, 3); }) == ErrorCode::kNotOnGrid);
  CHECK(code_of([&] { treatment_index(grid, -1); }) == ErrorCode::kNotOnGrid);
}

TEST_CASE("grid construction rejects malformed level lists") {
  CHECK(code_of([] { TreatmentGrid({1, 2}); }) == ErrorCode::kConfig);
  CHECK(code_of([] { TreatmentGrid({0}); }) == ErrorCode::kConfig);
  CHECK(code_of([] { TreatmentGrid({0, 2, 2}); }) == ErrorCode::kConfig);
  CHECK(code_of([] { TreatmentGrid({0, 3, 1}); }) == ErrorCode::kConfig);
  CHECK(TreatmentGrid::default_grid().size() == 5);
}

TEST_CASE("validate_dataset") {
  SUBCASE("well-formed set has no violations") {
    CHECK(validate_dataset(small_dataset()).ok());
  }
  SUBCASE("treatment index equal to J") {
    auto d = small_dataset();
    d.records[9].treatment_idx = 5;
    const auto report = validate_dataset(d);
    CHECK(report.violations.size() == 1);
    CHECK(report.count(ViolationKind::kIndexOutOfRange) == 1);
    CHECK(report.violations[0].record == 9);
  }
  SUBCASE("rct set without control records") {
    auto d = small_dataset(Provenance::kRct);
    for (auto& r : d.records) {
      if (r.treatment_idx == 0) r.treatment_idx = 1;
    }
    CHECK(validate_dataset(d).count(ViolationKind::kEmptyArm) >= 1);
  }
  SUBCASE("empty dataset") {
    auto d = small_dataset();
    d.records.clear();
    CHECK(validate_dataset(d).count(ViolationKind::kEmptyDataset) == 1);
  }
  SUBCASE("feature length, outcome and range errors") {
    auto d = small_dataset();
    d.records[0].query.features.pop_back();
    d.records[1].converted = 2;
    d.records[2].query.features[0] = std::numeric_limits<double>::quiet_NaN();
    const auto report = validate_dataset(d);
    CHECK(report.count(ViolationKind::kFeatureLength) == 1);
    CHECK(report.count(ViolationKind::kBadOutcome) == 1);
    CHECK_FALSE(report.ok());
  }
}

TEST_CASE("dataset serialization round-trips bit-exactly") {
  auto d = small_dataset(Provenance::kRct);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& r : d.records) {
    for (auto& f : r.query.features) f = u(rng);
    r.revenue_if_converted = 100.0 * u(rng);
  }
  d.records[0].query.id = 0xFFFFFFFFFFFFULL;
  std::stringstream buf;
  write_dataset(d, buf);
  const Dataset back = read_dataset(buf);
  CHECK(back == d);

  std::stringstream again;
  write_dataset(back, again);
  std::stringstream first;
  write_dataset(d, first);
  CHECK(again.str() == first.str());
}

TEST_CASE("malformed dataset text is a parse error") {
  std::stringstream buf("{not json\n");
  CHECK(code_of([&] { read_dataset(buf); }) == ErrorCode::kParse);
}

TEST_CASE("elasticity curve invariants") {
  CHECK(ElasticityCurve{{0.1, 0.2, 0.2, 0.9}}.valid());
  CHECK_FALSE(ElasticityCurve{{0.3, 0.2}}.valid());
  CHECK_FALSE(ElasticityCurve{{0.3, 1.2}}.valid());
  CHECK_FALSE(ElasticityCurve{{-0.1, 0.2}}.valid());
}

TEST_CASE("cluster keys order lexicographically") {
  CHECK(ClusterKey{0, 5, 5} < ClusterKey{1, 0, 0});
  CHECK(ClusterKey{1, 0, 9} < ClusterKey{1, 1, 0});
  CHECK(ClusterKey{1, 1, 0} < ClusterKey{1, 1, 1});
  CHECK(ClusterKeyHash{}(ClusterKey{1, 2, 3}) == ClusterKeyHash{}(ClusterKey{1, 2, 3}));
}
