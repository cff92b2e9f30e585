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

#include "pfednav/personalization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfednav/errors.hpp"

namespace pfednav::personal {
namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Tensor difference(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

void require_compatible(const ParamTree& global, const ParamTree& local, const char* op) {
  for (LayerKey key : global.keys()) {
    if (!local.contains(key)) throw Error(std::string(op) + ": local tree lacks layer " + std::string(layer_name(key)));
    if (!shape_compatible(global.layer(key), local.layer(key))) {
      throw ShapeError(std::string(op) + ": shape mismatch in layer " + std::string(layer_name(key)));
    }
  }
}

/// Bind a tree whose listed layers are replaced by computed tape nodes.
agent::VarTree bind_with(ad::Tape& tape, const ParamTree& base, const agent::VarTree& overrides) {
  agent::VarTree vars;
  for (const auto& [key, layer] : base.layers()) {
    if (key == LayerKey::Critic) continue;
    auto it = overrides.find(key);
    if (it != overrides.end()) {
      vars[key] = it->second;
      continue;
    }
    auto& vl = vars[key];
    for (const auto& [name, t] : layer) vl.emplace(name, tape.constant(t));
  }
  return vars;
}

double mean_of(const Layer& layer) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [_, t] : layer) {
    for (double v : t.data()) sum += v;
    n += t.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::FedAvg: return "fedavg";
    case Mode::PFedNavi: return "pfednavi";
    case Mode::AllLayers: return "all_layers";
    case Mode::NoLayer: return "no_layer";
    case Mode::LocalOnly: return "local_only";
  }
  return "unknown";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::FedAvg, Mode::PFedNavi, Mode::AllLayers, Mode::NoLayer, Mode::LocalOnly}) {
    if (mode_name(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + name + "'");
}

void SelectionConfig::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("selection.delta must lie in (0,1)");
  if (!(alpha_lr > 0.0)) throw ConfigError("selection.alpha_lr must be > 0");
  if (!(w_lr > 0.0)) throw ConfigError("selection.w_lr must be > 0");
  if (alpha_steps < 1) throw ConfigError("selection.alpha_steps must be >= 1");
  if (alpha_batch_count < 1) throw ConfigError("selection.alpha_batch_count must be >= 1");
  if (w_steps < 1) throw ConfigError("selection.w_steps must be >= 1");
  if (full_w_round < 1) throw ConfigError("selection.full_w_round must be >= 1");
  if (!(w_tol > 0.0)) throw ConfigError("selection.w_tol must be > 0");
  if (w_max_steps < 1) throw ConfigError("selection.w_max_steps must be >= 1");
}

ParamTree mixed_tree(const ParamTree& global, const ParamTree& local, const MixingCoefficients& alpha) {
  require_compatible(global, local, "mixed_tree");
  ParamTree out = global;
  for (LayerKey key : kDecoderLayers) {
    if (!global.contains(key)) continue;
    out.set_layer(key, interpolate_layer(global.layer(key), local.layer(key), alpha[key]));
  }
  return out;
}

MixingLoss mixing_loss(const ParamTree& global, const ParamTree& local, const MixingCoefficients& alpha,
                       std::span<const env::Episode> batch, const agent::HouseContext& ctx) {
  require_compatible(global, local, "learn_mixing_coefficients");
  ad::Tape tape;
  std::map<LayerKey, ad::Var> alpha_vars;
  agent::VarTree overrides;
  for (LayerKey key : kDecoderLayers) {
    if (!global.contains(key)) continue;
    ad::Var a = tape.variable(Tensor::scalar(alpha[key]));
    alpha_vars.emplace(key, a);
    auto& vl = overrides[key];
    const Layer& g = global.layer(key);
    const Layer& l = local.layer(key);
    for (const auto& [name, gt] : g) {
      // g + alpha * (l - g)
      vl.emplace(name, tape.add(tape.constant(gt), tape.scale_by(tape.constant(difference(l.at(name), gt)), a)));
    }
  }
  agent::AgentNet net(tape, bind_with(tape, global, overrides), false);
  ad::Var loss = agent::imitation_objective(tape, net, batch, ctx);
  tape.backward(loss);
  MixingLoss out;
  out.loss = tape.scalar(loss);
  for (const auto& [key, a] : alpha_vars) out.grad.emplace(key, tape.grad_span(a)[0]);
  return out;
}

MixingCoefficients learn_mixing_coefficients(const ParamTree& global, const ParamTree& local,
                                             std::span<const env::Episode> batch, const agent::HouseContext& ctx,
                                             const SelectionConfig& config) {
  if (batch.empty()) throw Error("learn_mixing_coefficients: empty batch");
  require_compatible(global, local, "learn_mixing_coefficients");
  const bool direct = config.alpha_param == AlphaParam::Direct;
  // Unconstrained parameter per layer: a logit under Sigmoid, alpha itself under Direct.
  std::map<LayerKey, double> param;
  for (LayerKey key : kDecoderLayers) param[key] = direct ? 0.5 : 0.0;
  auto to_alpha = [&](const std::map<LayerKey, double>& p) {
    MixingCoefficients a;
    for (const auto& [key, v] : p) a.set(key, direct ? v : sigmoid(v));
    return a;
  };
  auto descend = [&](const std::vector<LayerKey>& free) {
    for (int step = 0; step < config.alpha_steps; ++step) {
      const MixingCoefficients a = to_alpha(param);
      const MixingLoss ml = mixing_loss(global, local, a, batch, ctx);
      for (LayerKey key : free) {
        const double da = ml.grad.at(key);
        if (direct) {
          param[key] = std::clamp(param[key] - config.alpha_lr * da, 0.0, 1.0);
        } else {
          param[key] -= config.alpha_lr * da * a[key] * (1.0 - a[key]);
        }
      }
    }
  };
  if (config.alpha_joint) {
    descend(std::vector<LayerKey>(kDecoderLayers.begin(), kDecoderLayers.end()));
    return to_alpha(param);
  }
  std::map<LayerKey, double> learned;
  const std::map<LayerKey, double> start = param;
  for (LayerKey key : kDecoderLayers) {
    param = start;
    descend({key});
    learned[key] = param[key];
  }
  return to_alpha(learned);
}

LayerSet select_personalized_layers(const MixingCoefficients& alpha, double delta) {
  LayerSet out;
  for (const auto& [key, a] : alpha.values()) {
    if (a >= delta) out.insert(key);
  }
  return out;
}

ParamTree build_personalized_init(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                                  const FusionWeights& weights) {
  if (layers.contains(LayerKey::Critic)) throw ProtocolError("build_personalized_init: Critic cannot be fused");
  ParamTree out;
  for (const auto& [key, g] : global.layers()) {
    if (key == LayerKey::Critic) continue;
    if (!layers.contains(key)) {
      out.set_layer(key, g);
      continue;
    }
    if (!local.contains(key)) throw Error("build_personalized_init: local tree lacks layer " + std::string(layer_name(key)));
    auto w = weights.find(key);
    if (w == weights.end()) throw Error("build_personalized_init: no fusion weights for layer " + std::string(layer_name(key)));
    out.set_layer(key, fuse_elementwise(local.layer(key), g, w->second));
  }
  for (LayerKey key : layers) {
    if (!global.contains(key)) throw Error("build_personalized_init: global tree lacks layer " + std::string(layer_name(key)));
  }
  if (local.contains(LayerKey::Critic)) out.set_layer(LayerKey::Critic, local.layer(LayerKey::Critic));
  return out;
}

FusionLoss fusion_loss(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                       const FusionWeights& weights, std::span<const env::Episode> episodes,
                       const agent::HouseContext& ctx) {
  require_compatible(global, local, "learn_fusion_weights");
  ad::Tape tape;
  agent::VarTree overrides;
  agent::VarTree w_vars;
  for (LayerKey key : layers) {
    if (key == LayerKey::Critic) throw ProtocolError("learn_fusion_weights: Critic cannot be fused");
    if (!global.contains(key)) throw Error("learn_fusion_weights: global tree lacks layer " + std::string(layer_name(key)));
    auto w = weights.find(key);
    if (w == weights.end()) throw Error("learn_fusion_weights: no fusion weights for layer " + std::string(layer_name(key)));
    if (!shape_compatible(w->second, global.layer(key))) {
      throw ShapeError("learn_fusion_weights: weight shapes differ in layer " + std::string(layer_name(key)));
    }
    auto& vl = overrides[key];
    auto& wl = w_vars[key];
    const Layer& l = local.layer(key);
    for (const auto& [name, gt] : global.layer(key)) {
      ad::Var wv = tape.variable(w->second.at(name));
      wl.emplace(name, wv);
      // l + W * (g - l)
      vl.emplace(name, tape.add(tape.constant(l.at(name)), tape.mul(wv, tape.constant(difference(gt, l.at(name))))));
    }
  }
  agent::AgentNet net(tape, bind_with(tape, global, overrides), false);
  ad::Var loss = agent::imitation_objective(tape, net, episodes, ctx);
  tape.backward(loss);
  FusionLoss out;
  out.loss = tape.scalar(loss);
  for (const auto& [key, wl] : w_vars) {
    Layer g;
    for (const auto& [name, v] : wl) {
      auto s = tape.grad_span(v);
      g.emplace(name, Tensor(weights.at(key).at(name).shape(), std::vector<double>(s.begin(), s.end())));
    }
    out.grad.emplace(key, std::move(g));
  }
  return out;
}

namespace {

FusionWeights descend_weights(const FusionWeights& w, const FusionWeights& grad, double lr,
                              FusionGranularity granularity) {
  FusionWeights out = w;
  for (auto& [key, layer] : out) {
    const Layer& g = grad.at(key);
    if (granularity == FusionGranularity::Layer) {
      // one shared value per layer, moved by the summed element gradient
      double sum = 0.0;
      for (const auto& [_, t] : g) {
        for (double v : t.data()) sum += v;
      }
      const double value = std::clamp(mean_of(layer) - lr * sum, 0.0, 1.0);
      layer = constant_layer_like(layer, value);
      continue;
    }
    for (auto& [name, t] : layer) {
      const Tensor& gt = g.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] -= lr * gt[i];
    }
  }
  clamp_unit(out);
  return out;
}

}  // namespace

FusionResult learn_fusion_weights(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                                  std::span<const env::Episode> train, const agent::HouseContext& ctx,
                                  const SelectionConfig& config, int participation, const FusionWeights& prior) {
  if (participation < 1) throw Error("learn_fusion_weights: participation index must be >= 1");
  if (train.empty()) throw Error("learn_fusion_weights: empty training set");
  FusionResult result;
  for (LayerKey key : layers) {
    if (!global.contains(key)) throw Error("learn_fusion_weights: global tree lacks layer " + std::string(layer_name(key)));
    auto p = prior.find(key);
    if (p != prior.end() && shape_compatible(p->second, global.layer(key))) {
      result.weights.emplace(key, p->second);
    } else {
      result.weights.emplace(key, constant_layer_like(global.layer(key), 0.5));
    }
  }
  if (layers.empty()) return result;

  FusionLoss current = fusion_loss(global, local, layers, result.weights, train, ctx);
  result.initial_loss = current.loss;
  result.full = participation == config.full_w_round;
  if (!result.full) {
    for (int step = 0; step < config.w_steps; ++step) {
      result.weights = descend_weights(result.weights, current.grad, config.w_lr, config.granularity);
      current = fusion_loss(global, local, layers, result.weights, train, ctx);
      ++result.steps;
    }
    result.final_loss = current.loss;
    return result;
  }
  double lr = config.w_lr;
  for (int step = 0; step < config.w_max_steps; ++step) {
    ++result.steps;
    FusionWeights candidate = descend_weights(result.weights, current.grad, lr, config.granularity);
    FusionLoss next = fusion_loss(global, local, layers, candidate, train, ctx);
    if (next.loss > current.loss) {
      lr *= 0.5;
      if (lr < 1e-12) break;
      continue;
    }
    const double change = std::abs(current.loss - next.loss) / std::max(std::abs(current.loss), 1e-12);
    result.weights = std::move(candidate);
    current = std::move(next);
    if (change < config.w_tol) break;
  }
  result.final_loss = current.loss;
  return result;
}

ClientRngs client_rngs(std::uint64_t seed, int client_id, int round) {
  const auto c = static_cast<std::uint64_t>(client_id);
  const auto r = static_cast<std::uint64_t>(round);
  return {make_rng(seed, {c, r, 1}), make_rng(seed, {c, r, 2})};
}

ClientRoundResult client_round(ClientState& state, const ParamTree& global, int round, Mode mode,
                               const SelectionConfig& selection, const agent::TrainConfig& train,
                               std::span<const env::Episode> train_set, const agent::HouseContext& ctx,
                               ClientRngs& rngs) {
  if (global.contains(LayerKey::Critic)) throw ProtocolError("client_round: received global tree carries a Critic");
  if (!state.local.contains(LayerKey::Critic)) throw ProtocolError("client_round: client state lacks its Critic");
  const int participation = ++state.participations;

  // Previous local model; on the first participation it is the global tree.
  ParamTree previous = state.local;
  if (participation == 1) {
    previous = global;
    previous.set_layer(LayerKey::Critic, state.local.layer(LayerKey::Critic));
  }

  RoundDiagnostics diag;
  diag.client_id = state.client_id;
  diag.round = round;
  diag.participation = participation;

  ParamTree init;
  switch (mode) {
    case Mode::FedAvg:
    case Mode::NoLayer:
      init = build_personalized_init(global, previous, {}, {});
      break;
    case Mode::LocalOnly:
      init = previous;
      break;
    case Mode::PFedNavi:
    case Mode::AllLayers: {
      LayerSet layers;
      if (mode == Mode::PFedNavi) {
        std::vector<std::size_t> idx(train_set.size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle(idx.begin(), idx.end(), rngs.alpha);
        const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(selection.alpha_batch_count) *
                                                         static_cast<std::size_t>(train.batch_size));
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
        std::vector<env::Episode> batch;
        for (std::size_t i = 0; i < n; ++i) batch.push_back(train_set[idx[i]]);
        MixingCoefficients alpha = learn_mixing_coefficients(global, previous, batch, ctx, selection);
        layers = select_personalized_layers(alpha, selection.delta);
        layers.insert(LayerKey::EncDecProjection);
        state.alpha_history.push_back(alpha);
        diag.alpha = alpha;
      } else {
        for (LayerKey key : global.keys()) {
          if (key != LayerKey::Critic) layers.insert(key);
        }
      }
      FusionResult fusion =
          learn_fusion_weights(global, previous, layers, train_set, ctx, selection, participation, state.weights);
      for (const auto& [key, w] : fusion.weights) {
        state.weights[key] = w;
        diag.w_mean[key] = mean_of(w);
      }
      init = build_personalized_init(global, previous, layers, fusion.weights);
      diag.selected = layers;
      fusion.weights.clear();
      diag.fusion = std::move(fusion);
      break;
    }
  }

  agent::TrainResult trained = agent::local_train(init, train_set, ctx, train, rngs.train);
  diag.epoch_loss = trained.epoch_loss;
  diag.epoch_il_loss = trained.epoch_il_loss;
  diag.train_loss = std::accumulate(trained.epoch_il_loss.begin(), trained.epoch_il_loss.end(), 0.0) /
                    static_cast<double>(trained.epoch_il_loss.size());
  state.local = std::move(trained.params);
  return {strip_critic(state.local), std::move(diag)};
}

}  // namespace pfednav::personal
