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
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "gradcheck.hpp"
#include "sglab/checkpoint.hpp"
#include "sglab/error.hpp"

namespace sglab {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sglab-checkpoint-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Model m = make_mlp({5, 9, 3}, Activation::kTanh, Activation::kSigmoid, rng);
    // Values that need all 17 digits, plus awkward magnitudes.
    m.layers[0].weights[0] = 0.1 + 0.2;
    m.layers[0].weights[1] = 1e-310;
    m.layers[1].bias[0] = -123456789.123456789;
    const Model back = model_from_json(model_to_json(m));
    ASSERT_EQ(back.layers.size(), m.layers.size());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      ASSERT_TRUE(bit_equal(back.layers[i].weights, m.layers[i].weights));
      ASSERT_TRUE(bit_equal(back.layers[i].bias, m.layers[i].bias));
      ASSERT_EQ(back.layers[i].activation, m.layers[i].activation);
    }
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = scratch_dir("file");
  Rng rng(1);
  const Model m = make_mlp({4, 2}, Activation::kReLU, Activation::kIdentity, rng);
  save_model(m, dir / "nested" / "model.json");
  EXPECT_EQ(load_model(dir / "nested" / "model.json"), m);
  const Tensor t = gradcheck::random_tensor({3, 2}, rng);
  save_tensor(t, dir / "t.json");
  EXPECT_TRUE(bit_equal(load_tensor(dir / "t.json"), t));
}

TEST(Checkpoint, MalformedJsonReportsOffset) {
  try {
    model_from_json("{\"format\": ");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset, 0u);
  }
}

TEST(Checkpoint, WrongFormatOrVersionIsRejected) {
  EXPECT_THROW(model_from_json(R"({"format":"sglab-tensor","version":1})"), InvalidInput);
  EXPECT_THROW(model_from_json(R"({"format":"sglab-model","version":99,"layers":[]})"),
               InvalidInput);
  EXPECT_THROW(tensor_from_json(R"({"format":"sglab-tensor","version":1,"shape":[2],"data":[1]})"),
               InvalidInput);
}

TEST(Checkpoint, InconsistentLayersAreRejected) {
  const char* doc = R"({"format":"sglab-model","version":1,"layers":[
      {"in":2,"out":1,"activation":"relu","weights":[1,2],"bias":[0]},
      {"in":3,"out":1,"activation":"relu","weights":[1,2,3],"bias":[0]}]})";
  EXPECT_THROW(model_from_json(doc), InvalidInput);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  EXPECT_THROW(load_model("/nonexistent/sglab/model.json"), IoError);
}

TEST(Checkpoint, PgmStripHeaderAndPixels) {
  const auto dir = scratch_dir("pgm");
  const Tensor images({2, 4}, std::vector<double>{0, 1, 0.5, 2.0, 1, 0, -1, 0.25});
  write_pgm_strip(images, 2, 2, dir / "strip.pgm");
  const std::string bytes = read_text_file(dir / "strip.pgm");
  const std::string header = "P5\n4 2\n255\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  const std::string px = bytes.substr(header.size());
  ASSERT_EQ(px.size(), 8u);
  // Row 0: image 0 pixels (0, 1), image 1 pixels (1, 0).
  EXPECT_EQ(static_cast<unsigned char>(px[0]), 0);
  EXPECT_EQ(static_cast<unsigned char>(px[1]), 255);
  EXPECT_EQ(static_cast<unsigned char>(px[2]), 255);
  EXPECT_EQ(static_cast<unsigned char>(px[3]), 0);
  // Row 1: image 0 (0.5, 2 -> clamped), image 1 (-1 -> clamped, 0.25).
  EXPECT_EQ(static_cast<unsigned char>(px[4]), 128);
  EXPECT_EQ(static_cast<unsigned char>(px[5]), 255);
  EXPECT_EQ(static_cast<unsigned char>(px[6]), 0);
  EXPECT_EQ(static_cast<unsigned char>(px[7]), 64);
  EXPECT_THROW(write_pgm_strip(images, 3, 2, dir / "bad.pgm"), InvalidInput);
}

}  // namespace
}  // namespace sglab
