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
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sglab/nn.hpp"
#include "sglab/rng.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

// examples is [n x d] with features in [0, 1]; every label lies in [0, num_classes).
struct Dataset {
  Tensor examples;
  std::vector<Label> labels;
  int num_classes = 0;
  // Image geometry when the rows are pixels (IDX input); zero otherwise.
  std::size_t image_width = 0;
  std::size_t image_height = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return examples.cols(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses an IDX image/label pair. Pixels are scaled by 1/255. Throws
// FormatError carrying the byte offset of the first problem found.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes,
                  std::span<const std::uint8_t> label_bytes);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

struct SynthSpec {
  int classes = 10;
  std::size_t dims = 64;
  std::size_t per_class = 100;
  double spread = 0.25;
  std::uint64_t seed = 0;
};

// Gaussian blobs around `classes` random means in [0.2, 0.8]^dims, clamped
// to [0, 1]. Examples are emitted class by class.
Dataset synthesize(const SynthSpec& spec);

// "idx:<images>,<labels>" or "synth:<L>,<d>,<n>,<spread>".
struct DatasetSpec {
  enum class Kind { kIdx, kSynth } kind = Kind::kSynth;
  std::string images_path;
  std::string labels_path;
  SynthSpec synth;

  std::string to_string() const;
};

DatasetSpec parse_dataset_spec(const std::string& text);
Dataset load_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct DatasetSplit {
  Dataset train;
  Dataset test;
  Dataset pub;  // attacker-side public data, disjoint from train and test
};

DatasetSplit split_dataset(const Dataset& data, double test_fraction, double public_fraction,
                           std::uint64_t seed);

// Contiguous, equally sized shards (the last one takes the remainder).
std::vector<Dataset> shard_dataset(const Dataset& data, std::size_t shards);

struct BatchPlan {
  std::size_t batch_size = 64;
  double fake_probability = 0.1;  // P_F
  double fake_label_share = 1.0;  // B_F
  std::size_t start_index = 20;   // N
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

// Whether batch `index` is a fake batch: index >= N and a Bernoulli(P_F) draw
// that depends only on (seed, index).
bool is_fake_batch(const BatchPlan& plan, std::uint64_t index);

// Example order for one epoch; a permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, const BatchPlan& plan, std::uint64_t epoch);

// Splits an order into consecutive batches; the final one may be short.
std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> order,
                                                       std::size_t batch_size);

// round-half-up(share * n)
std::size_t randomized_count(double share, std::size_t n);

struct RandomizedLabels {
  std::vector<Label> labels;
  std::vector<std::size_t> changed;  // positions that were altered, ascending
};

// Alters exactly randomized_count(share, n) uniformly chosen positions via
// y' = (y + r) mod L with r uniform in {1, ..., L-1}; an altered label never
// equals its original. Throws InvalidInput when L < 2 or share is outside [0, 1].
RandomizedLabels randomize_labels(std::span<const Label> labels, double share, int num_classes,
                                  Rng& rng);

}  // namespace sglab
