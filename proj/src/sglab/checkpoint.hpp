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

// JSON checkpoints for models and standalone tensors. Layout is documented in
// docs/checkpoint_format.md. Doubles are written in shortest round-trip form,
// so a save/load cycle is bit-exact.

#include <filesystem>
#include <string>

#include "sglab/nn.hpp"
#include "sglab/tensor.hpp"

namespace sglab {

inline constexpr int kCheckpointVersion = 1;

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

std::string tensor_to_json(const Tensor& tensor);
Tensor tensor_from_json(const std::string& text);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

void save_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

// Writes rows of a [n x (w*h)] tensor in [0,1] as binary PGM (P5) images
// tiled horizontally into one file.
void write_pgm_strip(const Tensor& images, std::size_t width, std::size_t height,
                     const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace sglab
