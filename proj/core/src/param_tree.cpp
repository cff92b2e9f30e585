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

#include "pfednav/param_tree.hpp"

#include <algorithm>
#include <cmath>

#include "pfednav/errors.hpp"

namespace pfednav {

bool is_decoder(LayerKey key) noexcept {
  return std::find(kDecoderLayers.begin(), kDecoderLayers.end(), key) != kDecoderLayers.end();
}

std::string_view layer_name(LayerKey key) noexcept {
  switch (key) {
    case LayerKey::Embedding: return "Embedding";
    case LayerKey::EncoderRNN: return "EncoderRNN";
    case LayerKey::EncDecProjection: return "EncDecProjection";
    case LayerKey::DecActionEmbed: return "DecActionEmbed";
    case LayerKey::DecVisualAttn: return "DecVisualAttn";
    case LayerKey::DecStateUpdate: return "DecStateUpdate";
    case LayerKey::DecInstrAttn: return "DecInstrAttn";
    case LayerKey::DecCandidateScore: return "DecCandidateScore";
    case LayerKey::Critic: return "Critic";
  }
  return "?";
}

std::optional<LayerKey> parse_layer_key(std::string_view name) noexcept {
  for (LayerKey k : kAllLayers) {
    if (layer_name(k) == name) return k;
  }
  return std::nullopt;
}

const Layer& ParamTree::layer(LayerKey key) const {
  auto it = layers_.find(key);
  if (it == layers_.end()) throw Error("param tree: missing layer " + std::string(layer_name(key)));
  return it->second;
}

Layer& ParamTree::layer(LayerKey key) {
  auto it = layers_.find(key);
  if (it == layers_.end()) throw Error("param tree: missing layer " + std::string(layer_name(key)));
  return it->second;
}

const Tensor& ParamTree::tensor(LayerKey key, const std::string& name) const {
  const Layer& l = layer(key);
  auto it = l.find(name);
  if (it == l.end()) {
    throw Error("param tree: layer " + std::string(layer_name(key)) + " has no tensor " + name);
  }
  return it->second;
}

Tensor& ParamTree::tensor(LayerKey key, const std::string& name) {
  Layer& l = layer(key);
  auto it = l.find(name);
  if (it == l.end()) {
    throw Error("param tree: layer " + std::string(layer_name(key)) + " has no tensor " + name);
  }
  return it->second;
}

std::vector<LayerKey> ParamTree::keys() const {
  std::vector<LayerKey> out;
  out.reserve(layers_.size());
  for (const auto& [k, _] : layers_) out.push_back(k);
  return out;
}

std::size_t ParamTree::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, layer] : layers_) {
    for (const auto& [__, t] : layer) n += t.size();
  }
  return n;
}

bool shape_compatible(const Layer& a, const Layer& b) noexcept {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !ia->second.same_shape(ib->second)) return false;
  }
  return true;
}

bool ParamTree::shape_compatible(const ParamTree& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (auto ia = layers_.begin(), ib = other.layers_.begin(); ia != layers_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !pfednav::shape_compatible(ia->second, ib->second)) return false;
  }
  return true;
}

bool bitwise_equal(const Layer& a, const Layer& b) noexcept {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) return false;
  }
  return true;
}

bool bitwise_equal(const ParamTree& a, const ParamTree& b) noexcept {
  const auto& la = a.layers();
  const auto& lb = b.layers();
  if (la.size() != lb.size()) return false;
  for (auto ia = la.begin(), ib = lb.begin(); ia != la.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) return false;
  }
  return true;
}

double max_abs_diff(const ParamTree& a, const ParamTree& b) {
  if (!a.shape_compatible(b)) throw ShapeError("max_abs_diff: trees are not shape-compatible");
  double worst = 0.0;
  for (const auto& [key, layer] : a.layers()) {
    const Layer& other = b.layer(key);
    for (const auto& [name, t] : layer) worst = std::max(worst, max_abs_diff(t, other.at(name)));
  }
  return worst;
}

MixingCoefficients::MixingCoefficients() {
  for (LayerKey k : kDecoderLayers) alpha_[k] = 0.5;
}

MixingCoefficients MixingCoefficients::uniform(double value) {
  MixingCoefficients m;
  for (LayerKey k : kDecoderLayers) m.set(k, value);
  return m;
}

double MixingCoefficients::operator[](LayerKey key) const {
  auto it = alpha_.find(key);
  if (it == alpha_.end()) {
    throw Error("mixing coefficients: " + std::string(layer_name(key)) + " is not a decoder layer");
  }
  return it->second;
}

void MixingCoefficients::set(LayerKey key, double value) {
  if (!is_decoder(key)) {
    throw Error("mixing coefficients: " + std::string(layer_name(key)) + " is not a decoder layer");
  }
  alpha_[key] = std::clamp(value, 0.0, 1.0);
}

void clamp_unit(FusionWeights& weights) {
  for (auto& [_, layer] : weights) {
    for (auto& [__, t] : layer) {
      for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
    }
  }
}

Layer constant_layer_like(const Layer& like, double value) {
  Layer out;
  for (const auto& [name, t] : like) out.emplace(name, Tensor(t.shape(), value));
  return out;
}

namespace {

void require_compatible(const char* op, const Layer& a, const Layer& b) {
  if (!shape_compatible(a, b)) throw ShapeError(std::string(op) + ": layers are not shape-compatible");
}

}  // namespace

Layer interpolate_layer(const Layer& global, const Layer& local, double alpha) {
  require_compatible("interpolate_layer", global, local);
  alpha = std::clamp(alpha, 0.0, 1.0);
  Layer out;
  for (const auto& [name, g] : global) {
    const Tensor& l = local.at(name);
    Tensor t = g;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = blend(g[i], l[i], alpha);
    out.emplace(name, std::move(t));
  }
  return out;
}

Layer fuse_elementwise(const Layer& local, const Layer& global, const Layer& weights) {
  require_compatible("fuse_elementwise", local, global);
  require_compatible("fuse_elementwise", local, weights);
  Layer out;
  for (const auto& [name, l] : local) {
    const Tensor& g = global.at(name);
    const Tensor& w = weights.at(name);
    Tensor t = l;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = blend(l[i], g[i], w[i]);
    out.emplace(name, std::move(t));
  }
  return out;
}

ParamTree weighted_average(std::span<const WeightedTree> trees) {
  if (trees.empty()) throw Error("weighted_average: no input trees");
  const ParamTree& first = trees.front().tree.get();
  for (const auto& wt : trees) {
    const ParamTree& t = wt.tree.get();
    if (t.contains(LayerKey::Critic)) {
      throw ProtocolError("weighted_average: Critic must never be aggregated");
    }
    if (!(wt.weight > 0.0) || !std::isfinite(wt.weight)) {
      throw Error("weighted_average: weights must be positive and finite");
    }
    if (!t.shape_compatible(first)) throw ShapeError("weighted_average: trees are not shape-compatible");
  }
  // Incremental weighted mean: exact for one tree and for identical trees.
  ParamTree out = first;
  double total = trees.front().weight;
  for (std::size_t k = 1; k < trees.size(); ++k) {
    total += trees[k].weight;
    const double share = trees[k].weight / total;
    for (auto& [key, layer] : out.layers()) {
      const Layer& src = trees[k].tree.get().layer(key);
      for (auto& [name, t] : layer) {
        const Tensor& x = src.at(name);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] += share * (x[i] - t[i]);
      }
    }
  }
  return out;
}

ParamTree strip_critic(const ParamTree& tree) {
  ParamTree out = tree;
  out.erase(LayerKey::Critic);
  return out;
}

}  // namespace pfednav
