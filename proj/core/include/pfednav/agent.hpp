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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfednav/dataset.hpp"
#include "pfednav/house.hpp"
#include "pfednav/param_tree.hpp"
#include "pfednav/rng.hpp"
#include "pfednav/tape.hpp"

namespace pfednav::agent {

struct ModelConfig {
  int vocab_size = 40;
  int embed_dim = 24;
  int enc_hidden = 32;
  int dec_hidden = 32;
  int obs_dim = 12;
  int cand_dim = 15;
  int action_embed_dim = 16;
  int critic_hidden = 16;
  int max_steps = 12;

  /// Throws ConfigError when any dimension is < 1 or max_steps cannot cover
  /// the longest reference path plus STOP.
  void validate() const;
};

/// Seeded random parameters for every layer, Critic included.
ParamTree init_params(const ModelConfig& config, std::uint64_t seed);

/// A parameter tree bound onto a tape.
using VarLayer = std::map<std::string, ad::Var>;
using VarTree = std::map<LayerKey, VarLayer>;

/// Every tensor becomes a tracked tape variable.
VarTree bind_variables(ad::Tape& tape, const ParamTree& params);
/// Every tensor becomes a constant leaf.
VarTree bind_constants(ad::Tape& tape, const ParamTree& params);
/// Gradients of the bound variables, shaped like `like` (only keys of `vars`).
ParamTree collect_gradients(const ad::Tape& tape, const VarTree& vars, const ParamTree& like);

/// Node observations and candidate features of a house, computed once.
class HouseContext {
 public:
  /// success_radius <= 0 selects 0.25 x mean edge length.
  explicit HouseContext(const env::HouseGraph& house, double success_radius = 0.0);

  const env::HouseGraph& house() const noexcept { return *house_; }
  const Tensor& observation(int node) const { return obs_.at(static_cast<std::size_t>(node)); }
  const Tensor& candidates(int node) const { return cands_.at(static_cast<std::size_t>(node)); }
  double success_radius() const noexcept { return success_radius_; }
  /// Geodesic distance field to a goal (cached per goal).
  const env::GeodesicField& field(int goal) const;

 private:
  const env::HouseGraph* house_;
  double success_radius_;
  std::vector<Tensor> obs_;
  std::vector<Tensor> cands_;
  std::vector<env::GeodesicField> fields_;
};

struct Encoded {
  ad::Var context;    // m x enc_hidden
  ad::Var context_t;  // enc_hidden x m
  ad::Var init_state; // 1 x dec_hidden
  std::size_t length = 0;
};

struct StepOutput {
  ad::Var logits;  // 1 x candidates
  ad::Var value;   // 1 x 1, invalid when the critic was not requested
  ad::Var hidden;  // 1 x dec_hidden
};

/// Resolved handles of a bound tree; the forward pass of the agent.
///
/// Encoder: embedding -> GRU -> linear projection to the decoder state.
/// Decoder step, in order: previous-action embedding, attention over
/// candidate features keyed by the previous state, GRU state update,
/// dot-product attention over the instruction context, bilinear candidate
/// scoring. The critic reads the attended state through a detach, so only
/// its own term trains it.
class AgentNet {
 public:
  /// Throws Error naming the first missing layer or tensor.
  AgentNet(ad::Tape& tape, const VarTree& vars, bool with_critic);

  Encoded encode(std::span<const int> tokens) const;
  StepOutput step(ad::Var hidden, ad::Var prev_action, const Encoded& enc, ad::Var obs, ad::Var cands,
                  bool with_value) const;
  bool has_critic() const noexcept { return critic_.w1.valid(); }
  std::size_t cand_dim() const noexcept { return cand_dim_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

 private:
  struct Gru {
    ad::Var wxz, wxr, wxn, whz, whr, whn, bz, br, bn;
  };
  struct Critic {
    ad::Var w1, b1, w2, b2;
  };
  ad::Var gru_step(const Gru& g, ad::Var x, ad::Var h) const;

  ad::Tape* tape_;
  ad::Var embedding_;
  Gru encoder_;
  ad::Var proj_w_, proj_b_;
  ad::Var act_w_, act_b_;
  ad::Var vis_key_;
  Gru decoder_;
  ad::Var query_, out_w_, out_b_;
  ad::Var score_;
  Critic critic_;
  std::size_t cand_dim_ = 0;
  std::size_t vocab_size_ = 0;
  std::size_t enc_hidden_ = 0;
};

/// Context matrix and initial decoder state as plain tensors.
struct EncodedValues {
  Tensor context;
  Tensor init_state;
};
EncodedValues encode_instruction(const ParamTree& params, std::span<const int> tokens);

struct AgentState {
  Tensor hidden;          // 1 x dec_hidden
  Tensor prev_action;     // 1 x cand_dim (zeros before the first move)
  int node = 0;
  int step = 0;
};

struct StepValues {
  Tensor logits;
  double value = 0.0;
  Tensor hidden;
};
StepValues decode_step(const ParamTree& params, const AgentState& state, const Tensor& context,
                       const Tensor& observation, const Tensor& candidates);

enum class RolloutMode { TeacherForcing, Greedy, Sample };

struct Rollout {
  std::vector<int> trajectory;   // visited nodes, start first
  std::vector<int> actions;      // candidate index per step
  std::vector<double> log_probs; // log pi(action) per step
  std::vector<double> values;    // critic estimate per step (empty without critic)
  std::vector<std::vector<double>> probabilities;  // per-step candidate distribution
  bool stopped = false;          // issued STOP before the step cap
};

/// Teacher forcing follows the reference path and ends with STOP; greedy and
/// sampled rollouts follow the policy until STOP or max_steps. Sample mode
/// requires an rng.
Rollout rollout(const ParamTree& params, const env::Episode& episode, const HouseContext& ctx, RolloutMode mode,
                Rng* rng, int max_steps);

/// Teacher-forcing target candidate per step of the reference path.
std::vector<int> reference_actions(const env::HouseGraph& house, const env::Episode& episode);

}  // namespace pfednav::agent
