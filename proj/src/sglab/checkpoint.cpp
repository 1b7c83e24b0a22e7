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
#include "sglab/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sglab/error.hpp"

namespace sglab {
namespace {

using nlohmann::json;

json tensor_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.data()}};
}

Tensor tensor_from(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

void check_header(const json& j, const char* format) {
  if (!j.is_object() || j.value("format", "") != format) {
    throw InvalidInput(std::string("not a ") + format + " document");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw InvalidInput(std::string("unsupported ") + format + " version " +
                       std::to_string(j.value("version", 0)));
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
}

}  // namespace

std::string model_to_json(const Model& model) {
  json layers = json::array();
  for (const auto& l : model.layers) {
    layers.push_back({{"in", l.in_features()},
                      {"out", l.out_features()},
                      {"activation", to_string(l.activation)},
                      {"weights", l.weights.data()},
                      {"bias", l.bias.data()}});
  }
  json j{{"format", "sglab-model"}, {"version", kCheckpointVersion}, {"layers", layers}};
  return j.dump();
}

Model model_from_json(const std::string& text) {
  const json j = parse(text);
  check_header(j, "sglab-model");
  Model m;
  try {
    for (const auto& l : j.at("layers")) {
      const auto in = l.at("in").get<std::size_t>();
      const auto out = l.at("out").get<std::size_t>();
      m.layers.push_back(DenseLayer{
          Tensor({out, in}, l.at("weights").get<std::vector<double>>()),
          Tensor({out}, l.at("bias").get<std::vector<double>>()),
          activation_from_string(l.at("activation").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad model checkpoint: ") + e.what());
  }
  m.validate();
  return m;
}

std::string tensor_to_json(const Tensor& tensor) {
  json j = tensor_json(tensor);
  j["format"] = "sglab-tensor";
  j["version"] = kCheckpointVersion;
  return j.dump();
}

Tensor tensor_from_json(const std::string& text) {
  const json j = parse(text);
  check_header(j, "sglab-tensor");
  try {
    return tensor_from(j);
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad tensor document: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void save_model(const Model& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model));
}

Model load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

void save_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  write_text_file(path, tensor_to_json(tensor));
}

Tensor load_tensor(const std::filesystem::path& path) {
  return tensor_from_json(read_text_file(path));
}

void write_pgm_strip(const Tensor& images, std::size_t width, std::size_t height,
                     const std::filesystem::path& path) {
  if (images.rank() != 2 || images.cols() != width * height) {
    throw InvalidInput("image tensor " + shape_string(images.shape()) + " is not [n x " +
                       std::to_string(width * height) + "]");
  }
  const std::size_t n = images.rows();
  std::ostringstream os;
  os << "P5\n" << width * n << ' ' << height << "\n255\n";
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t x = 0; x < width; ++x) {
        const double v = std::clamp(images.at(i, y * width + x), 0.0, 1.0);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  write_text_file(path, os.str());
}

}  // namespace sglab
