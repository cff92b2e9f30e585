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

#include <span>
#include <vector>

#include "pfednav/agent.hpp"

namespace pfednav::agent {

struct EpisodeDiag {
  int steps = 0;
  bool success = false;
};

struct LossReport {
  double loss = 0.0;
  ParamTree grad;  // same keys as the differentiated parameter tree
  std::vector<EpisodeDiag> episodes;
};

/// Mean per-step teacher-forcing cross-entropy, pooled over all steps of the
/// batch, recorded on the tape.
ad::Var imitation_objective(ad::Tape& tape, const AgentNet& net, std::span<const env::Episode> batch,
                            const HouseContext& ctx);

LossReport imitation_loss(const ParamTree& params, std::span<const env::Episode> batch, const HouseContext& ctx);

struct RlConfig {
  double gamma = 0.9;
  double terminal_bonus = 2.0;
  int max_steps = 12;
};

/// R_t = sum_k gamma^(k-t) r_k.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

struct RlTerms {
  ad::Var policy;  // -sum log pi(a_t) * (R_t - V_t), advantage held constant
  ad::Var critic;  // sum (R_t - V_t)^2
  ad::Var total;   // (policy + critic) / steps
  int steps = 0;
  std::vector<EpisodeDiag> episodes;
};

/// Advantage actor-critic on one sampled rollout per episode. Per-step reward
/// is the decrease of geodesic distance to the goal; the final step adds
/// +terminal_bonus when the final node is within the success radius and
/// -terminal_bonus otherwise.
RlTerms rl_objective(ad::Tape& tape, const AgentNet& net, std::span<const env::Episode> batch,
                     const HouseContext& ctx, Rng& rng, const RlConfig& config, const std::vector<Encoded>* encoded = nullptr);

LossReport rl_loss(const ParamTree& params, const env::Episode& episode, const HouseContext& ctx, Rng& rng,
                   const RlConfig& config = {});

struct TrainConfig {
  int epochs = 5;
  double lr = 0.05;
  double il_rl_mix = 0.8;  // weight on imitation; 1.0 is pure imitation
  int batch_size = 8;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  RlConfig rl;
};

struct TrainResult {
  ParamTree params;
  std::vector<double> epoch_loss;     // mean combined objective per epoch
  std::vector<double> epoch_il_loss;  // mean imitation loss per epoch
};

/// Plain SGD over shuffled mini-batches; deterministic in rng.
TrainResult local_train(const ParamTree& params, std::span<const env::Episode> train, const HouseContext& ctx,
                        const TrainConfig& config, Rng& rng);

/// In-place p -= lr * g over matching tensors.
void sgd_step(ParamTree& params, const ParamTree& grad, double lr);
double global_norm(const ParamTree& grad);

}  // namespace pfednav::agent
