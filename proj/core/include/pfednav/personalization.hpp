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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfednav/agent.hpp"
#include "pfednav/training.hpp"

namespace pfednav::personal {

/// How a client turns the received global tree into its training start point.
///   fedavg / no_layer: global tree plus the client's own critic.
///   pfednavi: adaptive selection, then element-wise fusion.
///   all_layers: fusion over every non-critic layer, no selection.
///   local_only: the previous local tree, untouched by the server.
enum class Mode { FedAvg, PFedNavi, AllLayers, NoLayer, LocalOnly };

std::string mode_name(Mode mode);
/// Throws ConfigError for unknown names.
Mode parse_mode(const std::string& name);

enum class AlphaParam { Sigmoid, Direct };
enum class FusionGranularity { Element, Layer };

struct SelectionConfig {
  double delta = 0.6;
  double alpha_lr = 0.1;
  int alpha_steps = 2;
  int alpha_batch_count = 2;           // mini-batches (of train.batch_size) alpha is learned on
  AlphaParam alpha_param = AlphaParam::Sigmoid;
  bool alpha_joint = true;             // false: one layer at a time, others at 0.5
  double w_lr = 0.1;
  int w_steps = 1;
  int full_w_round = 2;                // participation index of the full W optimization
  double w_tol = 1e-3;                 // relative loss change that ends it
  int w_max_steps = 200;
  FusionGranularity granularity = FusionGranularity::Element;

  /// Throws ConfigError outside delta in (0,1), rates > 0, counts >= 1.
  void validate() const;
};

/// K (the layers to fuse), the alpha that produced it and the fusion weights.
struct PersonalizationPlan {
  LayerSet layers;
  std::optional<MixingCoefficients> alpha;
  FusionWeights weights;
};

/// Decoder layers of `global` replaced by interpolate(global, local, alpha);
/// every other layer is taken from `global`.
ParamTree mixed_tree(const ParamTree& global, const ParamTree& local, const MixingCoefficients& alpha);

struct MixingLoss {
  double loss = 0.0;
  std::map<LayerKey, double> grad;  // dL/dalpha per decoder layer
};
MixingLoss mixing_loss(const ParamTree& global, const ParamTree& local, const MixingCoefficients& alpha,
                       std::span<const env::Episode> batch, const agent::HouseContext& ctx);

/// Gradient steps on alpha, starting at 0.5, with model parameters fixed.
MixingCoefficients learn_mixing_coefficients(const ParamTree& global, const ParamTree& local,
                                             std::span<const env::Episode> batch, const agent::HouseContext& ctx,
                                             const SelectionConfig& config);

/// Decoder layers with alpha >= delta.
LayerSet select_personalized_layers(const MixingCoefficients& alpha, double delta);

/// Fused layers per key of `layers`, every other non-critic layer from the
/// global tree, Critic from the local tree. Weights of unselected layers are
/// never read.
ParamTree build_personalized_init(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                                  const FusionWeights& weights);

struct FusionLoss {
  double loss = 0.0;
  FusionWeights grad;  // dL/dW for the keys of `layers`
};
FusionLoss fusion_loss(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                       const FusionWeights& weights, std::span<const env::Episode> episodes,
                       const agent::HouseContext& ctx);

struct FusionResult {
  FusionWeights weights;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
  bool full = false;  // ran the convergence schedule
};

/// W starts from `prior` for layers it covers and 0.5 elsewhere. On the
/// participation index `full_w_round` it iterates until the relative loss
/// change falls below w_tol (halving the step on any increase), otherwise
/// it takes w_steps plain steps. Elements are clamped to [0,1].
FusionResult learn_fusion_weights(const ParamTree& global, const ParamTree& local, const LayerSet& layers,
                                  std::span<const env::Episode> train, const agent::HouseContext& ctx,
                                  const SelectionConfig& config, int participation, const FusionWeights& prior);

struct ClientState {
  int client_id = 0;
  ParamTree local;        // full tree, Critic included
  FusionWeights weights;  // persists across participations
  int participations = 0;
  std::vector<MixingCoefficients> alpha_history;
};

struct RoundDiagnostics {
  int client_id = 0;
  int round = 0;
  int participation = 0;
  std::optional<MixingCoefficients> alpha;
  LayerSet selected;                 // K, projection included
  std::map<LayerKey, double> w_mean;
  std::optional<FusionResult> fusion;  // weights dropped, losses kept
  std::vector<double> epoch_loss;
  std::vector<double> epoch_il_loss;
  double train_loss = 0.0;           // mean imitation loss over local epochs
};

struct ClientRoundResult {
  ParamTree upload;  // never carries the Critic
  RoundDiagnostics diag;
};

/// Streams a client draws from, each derived from (seed, client, round).
struct ClientRngs {
  Rng alpha;
  Rng train;
};
ClientRngs client_rngs(std::uint64_t seed, int client_id, int round);

/// One participation. The first participation treats the received global
/// tree (with the client's critic) as the previous local tree.
ClientRoundResult client_round(ClientState& state, const ParamTree& global, int round, Mode mode,
                               const SelectionConfig& selection, const agent::TrainConfig& train,
                               std::span<const env::Episode> train_set, const agent::HouseContext& ctx,
                               ClientRngs& rngs);

}  // namespace pfednav::personal
