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

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfednav/tensor.hpp"

namespace pfednav {

/// Parameter groups of the agent, in canonical (serialization) order.
enum class LayerKey : std::uint8_t {
  Embedding,
  EncoderRNN,
  EncDecProjection,
  DecActionEmbed,
  DecVisualAttn,
  DecStateUpdate,
  DecInstrAttn,
  DecCandidateScore,
  Critic,
};

inline constexpr std::array<LayerKey, 9> kAllLayers = {
    LayerKey::Embedding,      LayerKey::EncoderRNN,    LayerKey::EncDecProjection,
    LayerKey::DecActionEmbed, LayerKey::DecVisualAttn, LayerKey::DecStateUpdate,
    LayerKey::DecInstrAttn,   LayerKey::DecCandidateScore, LayerKey::Critic,
};

/// The decoder components eligible for adaptive selection.
inline constexpr std::array<LayerKey, 5> kDecoderLayers = {
    LayerKey::DecActionEmbed, LayerKey::DecVisualAttn, LayerKey::DecStateUpdate,
    LayerKey::DecInstrAttn,   LayerKey::DecCandidateScore,
};

bool is_decoder(LayerKey key) noexcept;
std::string_view layer_name(LayerKey key) noexcept;
std::optional<LayerKey> parse_layer_key(std::string_view name) noexcept;

using LayerSet = std::set<LayerKey>;

/// Tensors of one layer keyed by tensor name (sorted).
using Layer = std::map<std::string, Tensor>;

/// Ordered LayerKey -> Layer map. Iteration is sorted by key, then name.
class ParamTree {
 public:
  using Map = std::map<LayerKey, Layer>;

  ParamTree() = default;
  explicit ParamTree(Map layers) : layers_(std::move(layers)) {}

  bool contains(LayerKey key) const { return layers_.count(key) != 0; }
  /// Throws Error naming the key when absent.
  const Layer& layer(LayerKey key) const;
  Layer& layer(LayerKey key);
  const Tensor& tensor(LayerKey key, const std::string& name) const;
  Tensor& tensor(LayerKey key, const std::string& name);

  void set_layer(LayerKey key, Layer layer) { layers_[key] = std::move(layer); }
  void erase(LayerKey key) { layers_.erase(key); }

  std::vector<LayerKey> keys() const;
  const Map& layers() const noexcept { return layers_; }
  Map& layers() noexcept { return layers_; }
  std::size_t parameter_count() const;
  bool empty() const noexcept { return layers_.empty(); }

  /// Identical keys, tensor names, and shapes.
  bool shape_compatible(const ParamTree& other) const;

 private:
  Map layers_;
};

bool bitwise_equal(const Layer& a, const Layer& b) noexcept;
bool bitwise_equal(const ParamTree& a, const ParamTree& b) noexcept;
double max_abs_diff(const ParamTree& a, const ParamTree& b);
bool shape_compatible(const Layer& a, const Layer& b) noexcept;

/// Per-decoder-layer mixing coefficient alpha in [0,1] (clamped on write).
class MixingCoefficients {
 public:
  MixingCoefficients();
  static MixingCoefficients uniform(double value);

  double operator[](LayerKey key) const;
  void set(LayerKey key, double value);
  const std::map<LayerKey, double>& values() const noexcept { return alpha_; }

 private:
  std::map<LayerKey, double> alpha_;
};

/// Per-layer fusion weights shaped like the layer, every element in [0,1].
using FusionWeights = std::map<LayerKey, Layer>;

/// Clamp every element of every layer to [0,1].
void clamp_unit(FusionWeights& weights);
/// Constant-valued weights shaped like `like`.
Layer constant_layer_like(const Layer& like, double value);

/// (1-alpha)*global + alpha*local per element; alpha is clamped to [0,1].
Layer interpolate_layer(const Layer& global, const Layer& local, double alpha);

/// local + W*(global - local) per element: W=0 keeps local, W=1 takes global.
Layer fuse_elementwise(const Layer& local, const Layer& global, const Layer& weights);

/// Scalar form of the fusion rule shared by both functions above; exact at
/// both endpoints and exact when base == target.
inline double blend(double base, double target, double w) noexcept {
  return w == 1.0 ? target : base + w * (target - base);
}

struct WeightedTree {
  std::reference_wrapper<const ParamTree> tree;
  double weight;
};

/// Weighted element-wise mean with weights normalized to sum 1. Rejects
/// empty input, non-positive weights, incompatible shapes, and any tree that
/// still carries a Critic (ProtocolError).
ParamTree weighted_average(std::span<const WeightedTree> trees);

/// Copy of the tree without the Critic layer.
ParamTree strip_critic(const ParamTree& tree);

}  // namespace pfednav
