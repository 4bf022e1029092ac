#include "exfilt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "exfilt/errors.hpp"
#include "exfilt/rng.hpp"

namespace exfilt {

void TabularDataset::validate() const {
  schema.validate();
  if (samples.cols() != schema.feature_count())
    throw SchemaError("dataset: sample width does not match schema");
  if (labels.size() != samples.rows())
    throw SchemaError("dataset: label count does not match sample count");
  if (membership && membership->size() != samples.rows())
    throw SchemaError("dataset: membership flag count does not match sample count");
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    if (!schema.label_in_range(labels[i]))
      throw SchemaError("dataset: label out of range at row " + std::to_string(i));
    for (std::size_t j = 0; j < samples.cols(); ++j) {
      if (!schema.features[j].contains(samples(i, j)))
        throw SchemaError("dataset: value out of domain at row " + std::to_string(i) +
                          ", column " + std::to_string(j));
    }
  }
}

TabularDataset TabularDataset::take(const std::vector<std::size_t>& idx) const {
  TabularDataset out;
  out.schema = schema;
  out.samples = samples.take_rows(idx);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.labels.push_back(labels[i]);
  if (membership) {
    std::vector<std::uint8_t> flags;
    flags.reserve(idx.size());
    for (std::size_t i : idx) flags.push_back((*membership)[i]);
    out.membership = std::move(flags);
  }
  return out;
}

SplitResult split(const TabularDataset& data, const SplitSpec& spec) {
  const std::size_t n = data.size();
  const std::size_t needed =
      spec.train_size + spec.aux_size + spec.neutral_size + spec.mem_nonmembers;
  if (needed > n)
    throw ConfigError("split: requested sizes need " + std::to_string(needed) +
                      " rows but dataset has " + std::to_string(n));
  if (spec.mem_members > spec.train_size)
    throw ConfigError("split: mem_members exceeds train_size");

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(spec.seed, "split"));
  rng.shuffle(perm);

  SplitResult out;
  std::size_t cursor = 0;
  auto next_chunk = [&](std::size_t count) {
    std::vector<std::size_t> idx(perm.begin() + cursor, perm.begin() + cursor + count);
    cursor += count;
    return idx;
  };
  out.train_indices = next_chunk(spec.train_size);
  out.aux_indices = next_chunk(spec.aux_size);
  out.neutral_indices = next_chunk(spec.neutral_size);
  out.nonmember_indices = next_chunk(spec.mem_nonmembers);

  // Members are sampled from the training rows.
  std::vector<std::size_t> train_copy = out.train_indices;
  rng.shuffle(train_copy);
  out.member_indices.assign(train_copy.begin(), train_copy.begin() + spec.mem_members);

  out.train = data.take(out.train_indices);
  out.aux = data.take(out.aux_indices);
  out.neutral = data.take(out.neutral_indices);

  std::vector<std::size_t> mem_idx = out.member_indices;
  mem_idx.insert(mem_idx.end(), out.nonmember_indices.begin(), out.nonmember_indices.end());
  out.membership_eval = data.take(mem_idx);
  std::vector<std::uint8_t> flags(mem_idx.size(), 0);
  std::fill(flags.begin(), flags.begin() + spec.mem_members, 1);
  out.membership_eval.membership = std::move(flags);
  return out;
}

TabularDataset synth_generate(const DatasetSchema& schema, std::size_t n_rows,
                              double class_sep, std::uint64_t seed) {
  schema.validate();
  if (!schema.all_binary())
    throw SchemaError("synth_generate: schema must be fully binary");
  if (class_sep < 0.0 || class_sep > 1.0)
    throw ConfigError("synth_generate: class_sep must lie in [0, 1]");
  const std::size_t n_c = static_cast<std::size_t>(schema.n_classes);
  if (n_rows < n_c)
    throw ConfigError("synth_generate: need at least one row per class");

  const std::size_t n_j = schema.feature_count();
  Rng rng(derive_seed(seed, "synth"));

  Matrix prototypes(n_c, n_j);
  for (std::size_t c = 0; c < n_c; ++c)
    for (std::size_t j = 0; j < n_j; ++j) prototypes(c, j) = rng.bernoulli(0.5) ? 1.0 : 0.0;

  // Balanced class counts, first (n_rows mod n_c) classes get one extra row.
  std::vector<std::size_t> counts(n_c, n_rows / n_c);
  for (std::size_t c = 0; c < n_rows % n_c; ++c) counts[c] += 1;

  const double flip_p = (1.0 - class_sep) / 2.0;
  TabularDataset out;
  out.schema = schema;
  out.samples = Matrix(n_rows, n_j);
  out.labels.resize(n_rows);
  std::size_t row = 0;
  for (std::size_t c = 0; c < n_c; ++c) {
    for (std::size_t r = 0; r < counts[c]; ++r, ++row) {
      out.labels[row] = static_cast<int>(c);
      double* dst = out.samples.row(row);
      const double* proto = prototypes.row(c);
      for (std::size_t j = 0; j < n_j; ++j) {
        const bool flip = rng.bernoulli(flip_p);
        dst[j] = flip ? 1.0 - proto[j] : proto[j];
      }
    }
  }
  return out;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw SchemaError("csv: cannot parse number '" + s + "' at line " +
                      std::to_string(line_no));
  return v;
}

}  // namespace

TabularDataset load_csv(const std::string& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: empty file " + path);
  const std::size_t n_j = schema.feature_count();
  std::vector<std::string> header = split_line(line);
  const bool has_member = header.size() == n_j + 2 && header.back() == "member";
  if (header.size() != n_j + 1 && !has_member)
    throw SchemaError("csv: header has " + std::to_string(header.size()) +
                      " columns, expected " + std::to_string(n_j + 1) + " or " +
                      std::to_string(n_j + 2));

  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::uint8_t> members;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size())
      throw SchemaError("csv: wrong column count at line " + std::to_string(line_no));
    for (std::size_t j = 0; j < n_j; ++j) {
      const double v = parse_double(fields[j], line_no);
      if (!schema.features[j].contains(v))
        throw SchemaError("csv: value out of domain at line " + std::to_string(line_no) +
                          ", column " + std::to_string(j));
      values.push_back(v);
    }
    const double label_v = parse_double(fields[n_j], line_no);
    const int label = static_cast<int>(label_v);
    if (label != label_v || !schema.label_in_range(label))
      throw SchemaError("csv: label out of range at line " + std::to_string(line_no));
    labels.push_back(label);
    if (has_member) {
      const double m = parse_double(fields[n_j + 1], line_no);
      if (m != 0.0 && m != 1.0)
        throw SchemaError("csv: member flag must be 0 or 1 at line " +
                          std::to_string(line_no));
      members.push_back(static_cast<std::uint8_t>(m));
    }
  }

  TabularDataset out;
  out.schema = schema;
  const std::size_t n_rows = labels.size();
  out.samples = Matrix(n_rows, n_j);
  std::copy(values.begin(), values.end(), out.samples.data());
  out.labels = std::move(labels);
  if (has_member) out.membership = std::move(members);
  return out;
}

void write_csv(const TabularDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("csv: cannot write " + path);
  const std::size_t n_j = data.schema.feature_count();
  for (std::size_t j = 0; j < n_j; ++j) out << 'f' << j << ',';
  out << "label";
  if (data.membership) out << ",member";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < n_j; ++j) out << format_double(data.samples(i, j)) << ',';
    out << data.labels[i];
    if (data.membership) out << ',' << static_cast<int>((*data.membership)[i]);
    out << '\n';
  }
  if (!out) throw IoError("csv: write failed for " + path);
}

double estimate_flip_prob(const TabularDataset& data) {
  if (data.size() == 0) throw ConfigError("estimate_flip_prob: empty dataset");
  const double n_j = static_cast<double>(data.schema.feature_count());
  double mean = 0.0;
  std::vector<double> fracs(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double active = 0;
    const double* row = data.samples.row(i);
    for (std::size_t j = 0; j < data.samples.cols(); ++j)
      if (row[j] > 0.0) active += 1;
    fracs[i] = active / n_j;
    mean += fracs[i];
  }
  mean /= static_cast<double>(data.size());
  double var = 0.0;
  for (double f : fracs) var += (f - mean) * (f - mean);
  var /= static_cast<double>(data.size());
  return std::sqrt(var);
}

void write_dataset_manifest(const std::string& path, const DatasetSchema& schema,
                            const std::string& source, const SplitSpec& spec) {
  nlohmann::json j;
  j["source"] = source;
  j["n_features"] = schema.feature_count();
  j["n_classes"] = schema.n_classes;
  j["split"] = {{"train", spec.train_size},
                {"aux", spec.aux_size},
                {"neutral", spec.neutral_size},
                {"mem_members", spec.mem_members},
                {"mem_nonmembers", spec.mem_nonmembers},
                {"seed", spec.seed}};
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace exfilt
