/*
 * Copyright 2026 The SplitGuard Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sglab/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "sglab/error.hpp"

namespace sglab {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                        const char* what) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(std::string("truncated IDX header while reading ") + what, offset);
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(item);
  return parts;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.examples = examples.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.num_classes = num_classes;
  out.image_width = image_width;
  out.image_height = image_height;
  return out;
}

void Dataset::validate() const {
  if (num_classes < 2) throw InvalidInput("dataset needs at least 2 classes");
  if (examples.rank() != 2 || examples.rows() != labels.size()) {
    throw InvalidInput("dataset examples and labels disagree in count");
  }
  for (Label y : labels) {
    if (y < 0 || y >= num_classes) throw InvalidInput("dataset label out of range");
  }
}

Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes) {
  if (read_be32(image_bytes, 0, "image magic") != kIdxImageMagic) {
    throw FormatError("bad IDX image magic number", 0);
  }
  if (read_be32(label_bytes, 0, "label magic") != kIdxLabelMagic) {
    throw FormatError("bad IDX label magic number", 0);
  }
  const std::uint32_t count = read_be32(image_bytes, 4, "image count");
  const std::uint32_t rows = read_be32(image_bytes, 8, "row count");
  const std::uint32_t cols = read_be32(image_bytes, 12, "column count");
  const std::uint32_t label_count = read_be32(label_bytes, 4, "label count");
  if (count != label_count) {
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                          std::to_string(label_count),
                      4);
  }
  if (count == 0) throw FormatError("IDX file declares zero items", 4);
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t image_end = 16 + std::size_t{count} * pixels;
  if (image_bytes.size() < image_end) {
    throw FormatError("IDX image body truncated: expected " + std::to_string(image_end) +
                          " bytes, file has " + std::to_string(image_bytes.size()),
                      image_bytes.size());
  }
  if (label_bytes.size() < 8 + std::size_t{count}) {
    throw FormatError("IDX label body truncated", label_bytes.size());
  }

  Dataset d;
  d.image_width = cols;
  d.image_height = rows;
  d.examples = Tensor::matrix(count, pixels);
  for (std::size_t k = 0; k < std::size_t{count} * pixels; ++k) {
    d.examples[k] = static_cast<double>(image_bytes[16 + k]) / 255.0;
  }
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = label_bytes[8 + i];
    max_label = std::max(max_label, static_cast<int>(d.labels[i]));
  }
  d.num_classes = std::max(2, max_label + 1);
  return d;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file_bytes(images);
  const auto lb = read_file_bytes(labels);
  return parse_idx(ib, lb);
}

Dataset synthesize(const SynthSpec& spec) {
  if (spec.classes < 2) throw InvalidInput("synthetic data needs at least 2 classes");
  if (spec.dims == 0 || spec.per_class == 0) {
    throw InvalidInput("synthetic data needs positive dims and per-class count");
  }
  if (!(spec.spread >= 0.0)) throw InvalidInput("spread must be non-negative");
  Rng rng(spec.seed);
  const auto classes = static_cast<std::size_t>(spec.classes);
  Tensor means = Tensor::matrix(classes, spec.dims);
  for (double& m : means.values()) m = rng.uniform(0.2, 0.8);

  Dataset d;
  d.num_classes = spec.classes;
  d.examples = Tensor::matrix(classes * spec.per_class, spec.dims);
  d.labels.reserve(classes * spec.per_class);
  std::size_t r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k, ++r) {
      auto row = d.examples.row(r);
      for (std::size_t j = 0; j < spec.dims; ++j) {
        const double noise = spec.spread > 0.0 ? spec.spread * rng.normal() : 0.0;
        row[j] = std::clamp(means.at(c, j) + noise, 0.0, 1.0);
      }
      d.labels.push_back(static_cast<Label>(c));
    }
  }
  return d;
}

std::string DatasetSpec::to_string() const {
  std::ostringstream os;
  if (kind == Kind::kIdx) {
    os << "idx:" << images_path << ',' << labels_path;
  } else {
    os.precision(17);
    os << "synth:" << synth.classes << ',' << synth.dims << ',' << synth.per_class << ','
       << synth.spread;
  }
  return os.str();
}

DatasetSpec parse_dataset_spec(const std::string& text) {
  DatasetSpec spec;
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw InvalidInput("dataset spec '" + text + "' must start with idx: or synth:");
  }
  const std::string kind = text.substr(0, colon);
  const auto parts = split_commas(text.substr(colon + 1));
  if (kind == "idx") {
    if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
      throw InvalidInput("idx dataset spec must be idx:<images>,<labels>");
    }
    spec.kind = DatasetSpec::Kind::kIdx;
    spec.images_path = parts[0];
    spec.labels_path = parts[1];
  } else if (kind == "synth") {
    if (parts.size() != 4) throw InvalidInput("synth dataset spec must be synth:<L>,<d>,<n>,<spread>");
    try {
      spec.synth.classes = std::stoi(parts[0]);
      spec.synth.dims = std::stoul(parts[1]);
      spec.synth.per_class = std::stoul(parts[2]);
      spec.synth.spread = std::stod(parts[3]);
    } catch (const std::exception&) {
      throw InvalidInput("synth dataset spec has a non-numeric field: '" + text + "'");
    }
    if (spec.synth.classes < 2) throw InvalidInput("synth dataset needs L >= 2");
  } else {
    throw InvalidInput("unknown dataset kind '" + kind + "'");
  }
  return spec;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == DatasetSpec::Kind::kIdx) return load_idx(spec.images_path, spec.labels_path);
  SynthSpec s = spec.synth;
  s.seed = seed;
  return synthesize(s);
}

DatasetSplit split_dataset(const Dataset& data, double test_fraction, double public_fraction,
                           std::uint64_t seed) {
  if (test_fraction < 0.0 || public_fraction < 0.0 || test_fraction + public_fraction >= 1.0) {
    throw InvalidInput("test and public fractions must be non-negative and sum below 1");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n = static_cast<double>(order.size());
  const auto n_test = static_cast<std::size_t>(std::floor(n * test_fraction));
  const auto n_pub = static_cast<std::size_t>(std::floor(n * public_fraction));
  std::span<const std::size_t> all(order);
  DatasetSplit s;
  s.test = data.subset(all.subspan(0, n_test));
  s.pub = data.subset(all.subspan(n_test, n_pub));
  s.train = data.subset(all.subspan(n_test + n_pub));
  return s;
}

std::vector<Dataset> shard_dataset(const Dataset& data, std::size_t shards) {
  if (shards == 0 || shards > data.size()) throw InvalidInput("bad shard count");
  std::vector<Dataset> out;
  const std::size_t per = data.size() / shards;
  std::vector<std::size_t> idx;
  for (std::size_t s = 0; s < shards; ++s) {
    const std::size_t begin = s * per;
    const std::size_t end = s + 1 == shards ? data.size() : begin + per;
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    out.push_back(data.subset(idx));
  }
  return out;
}

void BatchPlan::validate() const {
  if (batch_size == 0) throw InvalidInput("batch_size must be positive");
  if (!(fake_probability >= 0.0 && fake_probability <= 1.0)) {
    throw InvalidInput("fake_probability (P_F) must lie in [0, 1]");
  }
  if (!(fake_label_share >= 0.0 && fake_label_share <= 1.0)) {
    throw InvalidInput("fake_label_share (B_F) must lie in [0, 1]");
  }
}

bool is_fake_batch(const BatchPlan& plan, std::uint64_t index) {
  if (index < plan.start_index) return false;
  return hashed_uniform(plan.seed ^ 0x5eedfa4eULL, index) < plan.fake_probability;
}

std::vector<std::size_t> epoch_order(std::size_t n, const BatchPlan& plan, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (plan.shuffle) {
    Rng rng(Rng::mix(plan.seed) ^ Rng::mix(epoch + 1));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> order,
                                                       std::size_t batch_size) {
  std::vector<std::span<const std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.push_back(order.subspan(i, std::min(batch_size, order.size() - i)));
  }
  return out;
}

std::size_t randomized_count(double share, std::size_t n) {
  return static_cast<std::size_t>(std::floor(share * static_cast<double>(n) + 0.5));
}

RandomizedLabels randomize_labels(std::span<const Label> labels, double share, int num_classes,
                                  Rng& rng) {
  if (num_classes < 2) throw InvalidInput("label randomization needs at least 2 classes");
  if (!(share >= 0.0 && share <= 1.0)) throw InvalidInput("B_F must lie in [0, 1]");
  RandomizedLabels out{std::vector<Label>(labels.begin(), labels.end()), {}};
  const std::size_t n = labels.size();
  const std::size_t k = std::min(n, randomized_count(share, n));

  // Partial Fisher-Yates picks a uniform k-subset of positions.
  std::vector<std::size_t> pos(n);
  std::iota(pos.begin(), pos.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(pos[i], pos[i + rng.below(n - i)]);
  out.changed.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.changed.begin(), out.changed.end());

  const auto L = static_cast<std::uint64_t>(num_classes);
  for (std::size_t p : out.changed) {
    const std::uint64_t offset = 1 + rng.below(L - 1);
    out.labels[p] = static_cast<Label>((static_cast<std::uint64_t>(labels[p]) + offset) % L);
  }
  return out;
}

}  // namespace sglab
