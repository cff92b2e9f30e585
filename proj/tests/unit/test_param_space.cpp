// Copyright 2026 The pfednav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "pfednav/checkpoint.hpp"
#include "pfednav/errors.hpp"
#include "pfednav/param_tree.hpp"

using namespace pfednav;

namespace {

Layer scalar_layer(double v) { return Layer{{"x", Tensor::row({v})}}; }

/// Element loop: (1 - a) * g + a * l.
Layer interpolate_oracle(const Layer& g, const Layer& l, double a) {
  Layer out = g;
  for (auto& [name, t] : out) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - a) * g.at(name)[i] + a * l.at(name)[i];
  }
  return out;
}

}  // namespace

TEST_SUITE("param_space") {

TEST_CASE("layer names round-trip") {
  for (LayerKey k : kAllLayers) CHECK(parse_layer_key(layer_name(k)) == k);
  CHECK_FALSE(parse_layer_key("Decoder").has_value());
  CHECK(is_decoder(LayerKey::DecInstrAttn));
  CHECK_FALSE(is_decoder(LayerKey::EncDecProjection));
  CHECK_FALSE(is_decoder(LayerKey::Critic));
}

TEST_CASE("missing layers are reported by name") {
  ParamTree t;
  try {
    (void)t.layer(LayerKey::DecVisualAttn);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("DecVisualAttn") != std::string::npos);
  }
}

TEST_CASE("interpolation endpoints and midpoint") {
  const Layer g = scalar_layer(0.0), l = scalar_layer(2.0);
  CHECK(bitwise_equal(interpolate_layer(g, l, 0.0), g));
  CHECK(bitwise_equal(interpolate_layer(g, l, 1.0), l));
  CHECK(interpolate_layer(g, l, 0.5).at("x")[0] == 1.0);
  CHECK(bitwise_equal(interpolate_layer(g, l, 7.0), l));  // clamped
}

TEST_CASE("fusion endpoints keep local or take global exactly") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamTree a = testing::random_tree(rng), b = testing::random_like(a, rng);
    for (const auto& [key, local] : a.layers()) {
      const Layer& global = b.layer(key);
      CHECK(bitwise_equal(fuse_elementwise(local, global, constant_layer_like(local, 0.0)), local));
      CHECK(bitwise_equal(fuse_elementwise(local, global, constant_layer_like(local, 1.0)), global));
      CHECK(bitwise_equal(interpolate_layer(global, local, 0.0), global));
      CHECK(bitwise_equal(interpolate_layer(global, local, 1.0), local));
    }
  }
}

TEST_CASE("interpolation equals fusion with roles aligned") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamTree a = testing::random_tree(rng), b = testing::random_like(a, rng);
    const double alpha = uniform01(rng);
    for (const auto& [key, g] : a.layers()) {
      const Layer& l = b.layer(key);
      // interpolate(g, l, a) moves from g toward l, as fuse(g, l, W=a) does
      CHECK(bitwise_equal(interpolate_layer(g, l, alpha), fuse_elementwise(g, l, constant_layer_like(g, alpha))));
      const Layer swapped = fuse_elementwise(l, g, constant_layer_like(g, 1.0 - alpha));
      const Layer direct = interpolate_layer(g, l, alpha);
      for (const auto& [name, t] : direct) CHECK(max_abs_diff(t, swapped.at(name)) < 1e-15);
      const Layer oracle = interpolate_oracle(g, l, alpha);
      for (const auto& [name, t] : direct) CHECK(max_abs_diff(t, oracle.at(name)) < 1e-15);
    }
  }
}

TEST_CASE("identical inputs are a fixed point of both rules") {
  Rng rng(12);
  const ParamTree a = testing::random_tree(rng);
  for (const auto& [key, layer] : a.layers()) {
    FusionWeights w{{key, testing::random_like(ParamTree({{key, layer}}), rng).layer(key)}};
    clamp_unit(w);
    CHECK(bitwise_equal(fuse_elementwise(layer, layer, w.at(key)), layer));
    CHECK(bitwise_equal(interpolate_layer(layer, layer, 0.37), layer));
  }
}

TEST_CASE("fusion rejects mismatched shapes") {
  const Layer a{{"x", Tensor::row({1, 2})}};
  const Layer b{{"x", Tensor::row({1, 2, 3})}};
  CHECK_THROWS_AS(fuse_elementwise(a, b, constant_layer_like(a, 0.5)), ShapeError);
  CHECK_THROWS_AS(interpolate_layer(a, b, 0.5), ShapeError);
}

TEST_CASE("mixing coefficients start at one half and clamp") {
  MixingCoefficients m;
  for (LayerKey k : kDecoderLayers) CHECK(m[k] == 0.5);
  m.set(LayerKey::DecStateUpdate, 1.7);
  CHECK(m[LayerKey::DecStateUpdate] == 1.0);
  m.set(LayerKey::DecStateUpdate, -0.2);
  CHECK(m[LayerKey::DecStateUpdate] == 0.0);
  CHECK_THROWS_AS(m.set(LayerKey::Critic, 0.5), Error);
}

TEST_CASE("clamp_unit bounds every element") {
  FusionWeights w{{LayerKey::EncDecProjection, Layer{{"w", Tensor::row({-0.5, 0.25, 3.0})}}}};
  clamp_unit(w);
  const auto& t = w.at(LayerKey::EncDecProjection).at("w");
  CHECK(t[0] == 0.0);
  CHECK(t[1] == 0.25);
  CHECK(t[2] == 1.0);
}

TEST_CASE("weighted average reference cases") {
  const ParamTree a({{LayerKey::Embedding, scalar_layer(1.0)}});
  const ParamTree b({{LayerKey::Embedding, scalar_layer(5.0)}});
  const WeightedTree in[2] = {{a, 1.0}, {b, 3.0}};
  CHECK(weighted_average(in).tensor(LayerKey::Embedding, "x")[0] == doctest::Approx(4.0).epsilon(1e-15));
  const WeightedTree equal[2] = {{a, 2.0}, {b, 2.0}};
  CHECK(weighted_average(equal).tensor(LayerKey::Embedding, "x")[0] == doctest::Approx(3.0).epsilon(1e-15));
  const WeightedTree single[1] = {{a, 7.0}};
  CHECK(bitwise_equal(weighted_average(single), a));
}

TEST_CASE("weighted average matches an element loop oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const ParamTree base = testing::random_tree(rng, false);
    std::vector<ParamTree> trees{base};
    for (int i = 0; i < 3; ++i) trees.push_back(testing::random_like(base, rng));
    std::vector<WeightedTree> in;
    std::vector<double> weights;
    for (const auto& t : trees) {
      weights.push_back(1.0 + static_cast<double>(uniform_index(rng, 50)));
      in.push_back({t, weights.back()});
    }
    const double total = weights[0] + weights[1] + weights[2] + weights[3];
    const ParamTree avg = weighted_average(in);
    for (const auto& [key, layer] : base.layers()) {
      for (const auto& [name, t] : layer) {
        for (std::size_t i = 0; i < t.size(); ++i) {
          double expect = 0.0;
          for (std::size_t k = 0; k < trees.size(); ++k) expect += weights[k] * trees[k].tensor(key, name)[i];
          expect /= total;
          CHECK(std::abs(avg.tensor(key, name)[i] - expect) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("weighted average rejects bad input") {
  Rng rng(2);
  const ParamTree with_critic = testing::random_tree(rng, true);
  const ParamTree plain = strip_critic(with_critic);
  CHECK_THROWS_AS(weighted_average(std::span<const WeightedTree>{}), Error);
  const WeightedTree critic_in[1] = {{with_critic, 1.0}};
  CHECK_THROWS_AS(weighted_average(critic_in), ProtocolError);
  const WeightedTree zero_in[1] = {{plain, 0.0}};
  CHECK_THROWS_AS(weighted_average(zero_in), Error);
  const ParamTree other = strip_critic(testing::random_tree(rng, true));
  if (!plain.shape_compatible(other)) {
    const WeightedTree mixed[2] = {{plain, 1.0}, {other, 1.0}};
    CHECK_THROWS_AS(weighted_average(mixed), ShapeError);
  }
}

TEST_CASE("strip_critic removes only the critic") {
  Rng rng(6);
  const ParamTree t = testing::random_tree(rng, true);
  const ParamTree s = strip_critic(t);
  CHECK_FALSE(s.contains(LayerKey::Critic));
  CHECK(s.keys().size() == t.keys().size() - 1);
  for (LayerKey k : s.keys()) CHECK(bitwise_equal(s.layer(k), t.layer(k)));
}

TEST_CASE("checkpoint round-trip is bitwise") {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    ParamTree t = testing::random_tree(rng, trial % 2 == 0);
    t.tensor(LayerKey::Embedding, "w")[0] = -0.0;
    const auto bytes = serialize_tree(t);
    const ParamTree back = deserialize_tree(bytes);
    CHECK(bitwise_equal(back, t));
    CHECK(serialize_tree(back) == bytes);
  }
}

TEST_CASE("checkpoint rejects corrupt input") {
  Rng rng(15);
  const auto bytes = serialize_tree(testing::random_tree(rng));
  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  CHECK_THROWS_AS(deserialize_tree(bad_magic), Error);
  auto bad_version = bytes;
  bad_version[8] = 99;
  CHECK_THROWS_AS(deserialize_tree(bad_version), Error);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(deserialize_tree(truncated), Error);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_tree(trailing), Error);
}

TEST_CASE("checkpoint files round-trip") {
  Rng rng(16);
  const ParamTree t = testing::random_tree(rng);
  const auto path = std::filesystem::temp_directory_path() / "pfednav_ckpt_test.bin";
  save_tree(path, t);
  CHECK(bitwise_equal(load_tree(path), t));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_tree(path), Error);
}

}  // TEST_SUITE
