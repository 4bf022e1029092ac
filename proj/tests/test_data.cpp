#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "exfilt/dataset.hpp"
#include "exfilt/errors.hpp"
#include "exfilt/rng.hpp"

using namespace exfilt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("clamp_to_domain projects values into each domain kind") {
  DatasetSchema schema;
  schema.n_classes = 2;
  schema.features = {FeatureDomain::binary(), FeatureDomain::continuous(0.0, 1.0),
                     FeatureDomain::categorical(3)};

  std::vector<double> in_domain = {1.0, 0.25, 2.0};
  CHECK(clamped(in_domain, schema) == in_domain);  // projection fixed point

  std::vector<double> messy = {0.4, 1.7, 2.6};
  const std::vector<double> fixed = clamped(messy, schema);
  CHECK(fixed[0] == 0.0);  // rounded to binary
  CHECK(fixed[1] == 1.0);  // clipped
  CHECK(fixed[2] == 3.0);  // rounded then clipped
}

TEST_CASE("csv round-trip is bit-exact and validates on load") {
  DatasetSchema schema = DatasetSchema::binary(3, 2);
  TabularDataset data;
  data.schema = schema;
  data.samples = Matrix(2, 3);
  data.samples(0, 0) = 1;
  data.samples(1, 2) = 1;
  data.labels = {0, 1};

  const std::string path = temp_path("exfilt_roundtrip.csv");
  write_csv(data, path);
  const TabularDataset back = load_csv(path, schema);
  REQUIRE(back.size() == 2);
  CHECK(back.samples == data.samples);
  CHECK(back.labels == data.labels);
  std::remove(path.c_str());
}

TEST_CASE("csv loader rejects bad labels, bad domains, and ragged rows") {
  const DatasetSchema schema = DatasetSchema::binary(2, 2);
  const std::string path = temp_path("exfilt_bad.csv");

  auto write_file = [&](const char* body) {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(body, f);
    std::fclose(f);
  };

  write_file("f0,f1,label\n0,1,2\n");  // label == n_c
  CHECK_THROWS_AS(load_csv(path, schema), SchemaError);

  write_file("f0,f1,label\n0,0.5,0\n");  // non-binary value
  CHECK_THROWS_AS(load_csv(path, schema), SchemaError);

  write_file("f0,f1,label\n0,1\n");  // wrong column count
  CHECK_THROWS_AS(load_csv(path, schema), SchemaError);

  write_file("f0,f1,label\n0,x,0\n");  // parse failure
  CHECK_THROWS_AS(load_csv(path, schema), SchemaError);

  std::remove(path.c_str());
}

TEST_CASE("csv round-trips the membership column") {
  DatasetSchema schema = DatasetSchema::binary(2, 2);
  TabularDataset data;
  data.schema = schema;
  data.samples = Matrix(3, 2);
  data.samples(0, 0) = 1;
  data.labels = {0, 1, 1};
  data.membership = std::vector<std::uint8_t>{1, 0, 1};
  const std::string path = temp_path("exfilt_member.csv");
  write_csv(data, path);
  const TabularDataset back = load_csv(path, schema);
  REQUIRE(back.membership.has_value());
  CHECK(*back.membership == *data.membership);
  std::remove(path.c_str());
}

TEST_CASE("csv round-trips awkward doubles exactly") {
  DatasetSchema schema;
  schema.n_classes = 2;
  schema.features = {FeatureDomain::continuous(-10, 10)};
  TabularDataset data;
  data.schema = schema;
  data.samples = Matrix(3, 1);
  data.samples(0, 0) = 0.1;
  data.samples(1, 0) = 1.0 / 3.0;
  data.samples(2, 0) = 1e-7;
  data.labels = {0, 1, 0};
  const std::string path = temp_path("exfilt_doubles.csv");
  write_csv(data, path);
  const TabularDataset back = load_csv(path, schema);
  CHECK(back.samples == data.samples);
  std::remove(path.c_str());
}

TEST_CASE("split produces disjoint parts and a flagged membership set") {
  const DatasetSchema schema = DatasetSchema::binary(8, 4);
  const TabularDataset data = synth_generate(schema, 400, 0.6, 123);

  SplitSpec spec;
  spec.train_size = 120;
  spec.aux_size = 40;
  spec.neutral_size = 60;
  spec.mem_members = 50;
  spec.mem_nonmembers = 50;
  spec.seed = 5;
  const SplitResult parts = split(data, spec);

  CHECK(parts.train.size() == 120);
  CHECK(parts.aux.size() == 40);
  CHECK(parts.neutral.size() == 60);
  CHECK(parts.membership_eval.size() == 100);

  const std::set<std::size_t> train_idx(parts.train_indices.begin(),
                                        parts.train_indices.end());
  for (std::size_t i : parts.aux_indices) CHECK(train_idx.count(i) == 0);
  for (std::size_t i : parts.neutral_indices) CHECK(train_idx.count(i) == 0);
  for (std::size_t i : parts.nonmember_indices) CHECK(train_idx.count(i) == 0);
  for (std::size_t i : parts.member_indices) CHECK(train_idx.count(i) == 1);

  REQUIRE(parts.membership_eval.membership.has_value());
  std::size_t members = 0;
  for (std::uint8_t f : *parts.membership_eval.membership) members += f;
  CHECK(members == 50);

  // Deterministic under the seed.
  const SplitResult again = split(data, spec);
  CHECK(again.train_indices == parts.train_indices);
  CHECK(again.member_indices == parts.member_indices);
}

TEST_CASE("split rejects infeasible sizes") {
  const DatasetSchema schema = DatasetSchema::binary(4, 2);
  const TabularDataset data = synth_generate(schema, 50, 0.5, 1);
  SplitSpec spec;
  spec.train_size = 40;
  spec.aux_size = 20;
  CHECK_THROWS_AS(split(data, spec), ConfigError);

  SplitSpec spec2;
  spec2.train_size = 10;
  spec2.mem_members = 11;
  CHECK_THROWS_AS(split(data, spec2), ConfigError);
}

TEST_CASE("split with all sizes zero yields four empty datasets") {
  const DatasetSchema schema = DatasetSchema::binary(4, 2);
  const TabularDataset data = synth_generate(schema, 20, 0.5, 1);
  const SplitResult parts = split(data, SplitSpec{});
  CHECK(parts.train.size() == 0);
  CHECK(parts.aux.size() == 0);
  CHECK(parts.neutral.size() == 0);
  CHECK(parts.membership_eval.size() == 0);
}

TEST_CASE("synth_generate balances classes and honors class_sep extremes") {
  const DatasetSchema schema = DatasetSchema::binary(16, 3);

  SUBCASE("class_sep = 1 copies prototypes exactly") {
    const TabularDataset data = synth_generate(schema, 31, 1.0, 9);
    // Balance within one row.
    std::vector<int> counts(3, 0);
    for (int label : data.labels) counts[label] += 1;
    for (int c : counts) CHECK(std::abs(c - 31 / 3) <= 1);
    // All rows of one class identical.
    for (std::size_t i = 1; i < data.size(); ++i)
      if (data.labels[i] == data.labels[0])
        CHECK(std::equal(data.samples.row(i), data.samples.row(i) + 16,
                         data.samples.row(0)));
  }

  SUBCASE("same seed gives identical datasets") {
    const TabularDataset a = synth_generate(schema, 60, 0.4, 77);
    const TabularDataset b = synth_generate(schema, 60, 0.4, 77);
    CHECK(a.samples == b.samples);
    CHECK(a.labels == b.labels);
  }

  SUBCASE("class_sep = 0 mixes classes down to chance level") {
    // With uniform random rows a prototype classifier fit on half the data
    // scores about 1/n_c on the other half.
    const DatasetSchema wide = DatasetSchema::binary(64, 4);
    const TabularDataset data = synth_generate(wide, 2000, 0.0, 3);
    Matrix proto(4, 64);
    std::vector<int> counts(4, 0);
    for (std::size_t i = 0; i < 2000; i += 2) {  // even rows fit the prototypes
      counts[data.labels[i]] += 1;
      for (std::size_t j = 0; j < 64; ++j)
        proto(data.labels[i], j) += data.samples(i, j);
    }
    for (int c = 0; c < 4; ++c)
      for (std::size_t j = 0; j < 64; ++j) proto(c, j) /= counts[c];
    std::size_t hits = 0;
    for (std::size_t i = 1; i < 2000; i += 2) {
      int best = 0;
      double best_d = 1e18;
      for (int c = 0; c < 4; ++c) {
        const double d = squared_distance(proto.row_span(c), data.samples.row_span(i));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == data.labels[i]) ++hits;
    }
    const double acc = static_cast<double>(hits) / 1000.0;
    // Chance is 0.25; allow 3 binomial standard deviations.
    CHECK(acc < 0.25 + 3 * std::sqrt(0.25 * 0.75 / 1000.0));
  }

  SUBCASE("fewer rows than classes is rejected") {
    CHECK_THROWS_AS(synth_generate(schema, 2, 0.5, 1), ConfigError);
  }
}

TEST_CASE("estimate_flip_prob reflects the spread of active-bit fractions") {
  const DatasetSchema schema = DatasetSchema::binary(100, 2);
  const TabularDataset tight = synth_generate(schema, 300, 1.0, 5);
  // Identical rows per class: spread comes only from the two prototypes.
  CHECK(estimate_flip_prob(tight) < 0.5);
  const TabularDataset loose = synth_generate(schema, 300, 0.0, 5);
  CHECK(estimate_flip_prob(loose) > 0.0);
  CHECK(estimate_flip_prob(loose) < 0.2);
}
