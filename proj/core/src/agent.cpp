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

#include "pfednav/agent.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfednav/errors.hpp"

namespace pfednav::agent {

void ModelConfig::validate() const {
  const std::pair<const char*, int> dims[] = {
      {"vocab_size", vocab_size}, {"embed_dim", embed_dim},       {"enc_hidden", enc_hidden},
      {"dec_hidden", dec_hidden}, {"obs_dim", obs_dim},           {"cand_dim", cand_dim},
      {"action_embed_dim", action_embed_dim}, {"critic_hidden", critic_hidden},
  };
  for (const auto& [name, v] : dims) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  }
  if (max_steps < env::kMaxHops + 1) {
    throw ConfigError("max_steps must be >= longest reference path + 1 = " + std::to_string(env::kMaxHops + 1));
  }
}

namespace {

Tensor uniform_tensor(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  Tensor t({rows, cols});
  for (double& v : t.data()) v = uniform(rng, -bound, bound);
  return t;
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  return uniform_tensor(rng, fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

Layer gru_layer(Rng& rng, std::size_t in, std::size_t hidden) {
  Layer l;
  l.emplace("w_xz", glorot(rng, in, hidden));
  l.emplace("w_xr", glorot(rng, in, hidden));
  l.emplace("w_xn", glorot(rng, in, hidden));
  l.emplace("w_hz", glorot(rng, hidden, hidden));
  l.emplace("w_hr", glorot(rng, hidden, hidden));
  l.emplace("w_hn", glorot(rng, hidden, hidden));
  l.emplace("b_z", Tensor({1, hidden}, 0.0));
  l.emplace("b_r", Tensor({1, hidden}, 0.0));
  l.emplace("b_n", Tensor({1, hidden}, 0.0));
  return l;
}

}  // namespace

ParamTree init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng = make_rng(seed, {0x706172616d73ULL});
  const auto V = static_cast<std::size_t>(c.vocab_size), E = static_cast<std::size_t>(c.embed_dim),
             H = static_cast<std::size_t>(c.enc_hidden), D = static_cast<std::size_t>(c.dec_hidden),
             O = static_cast<std::size_t>(c.obs_dim), F = static_cast<std::size_t>(c.cand_dim),
             A = static_cast<std::size_t>(c.action_embed_dim), C = static_cast<std::size_t>(c.critic_hidden);
  ParamTree tree;
  tree.set_layer(LayerKey::Embedding, {{"table", uniform_tensor(rng, V, E, 0.5)}});
  tree.set_layer(LayerKey::EncoderRNN, gru_layer(rng, E, H));
  tree.set_layer(LayerKey::EncDecProjection, {{"weight", glorot(rng, H, D)}, {"bias", Tensor({1, D}, 0.0)}});
  tree.set_layer(LayerKey::DecActionEmbed, {{"weight", glorot(rng, F, A)}, {"bias", Tensor({1, A}, 0.0)}});
  tree.set_layer(LayerKey::DecVisualAttn, {{"key", glorot(rng, F, D)}});
  tree.set_layer(LayerKey::DecStateUpdate, gru_layer(rng, A + F + O, D));
  tree.set_layer(LayerKey::DecInstrAttn,
                 {{"query", glorot(rng, D, H)}, {"out", glorot(rng, D + H, D)}, {"bias", Tensor({1, D}, 0.0)}});
  tree.set_layer(LayerKey::DecCandidateScore, {{"bilinear", glorot(rng, D, F)}});
  tree.set_layer(LayerKey::Critic, {{"w1", glorot(rng, D, C)},
                                    {"b1", Tensor({1, C}, 0.0)},
                                    {"w2", glorot(rng, C, 1)},
                                    {"b2", Tensor({1, 1}, 0.0)}});
  return tree;
}

VarTree bind_variables(ad::Tape& tape, const ParamTree& params) {
  VarTree vars;
  for (const auto& [key, layer] : params.layers()) {
    auto& vl = vars[key];
    for (const auto& [name, t] : layer) vl.emplace(name, tape.variable(t));
  }
  return vars;
}

VarTree bind_constants(ad::Tape& tape, const ParamTree& params) {
  VarTree vars;
  for (const auto& [key, layer] : params.layers()) {
    auto& vl = vars[key];
    for (const auto& [name, t] : layer) vl.emplace(name, tape.constant(t));
  }
  return vars;
}

ParamTree collect_gradients(const ad::Tape& tape, const VarTree& vars, const ParamTree& like) {
  ParamTree grads;
  for (const auto& [key, vl] : vars) {
    Layer layer;
    const Layer& shape_src = like.layer(key);
    for (const auto& [name, v] : vl) {
      auto g = tape.grad_span(v);
      layer.emplace(name, Tensor(shape_src.at(name).shape(), std::vector<double>(g.begin(), g.end())));
    }
    grads.set_layer(key, std::move(layer));
  }
  return grads;
}

HouseContext::HouseContext(const env::HouseGraph& house, double success_radius)
    : house_(&house),
      success_radius_(success_radius > 0.0 ? success_radius : 0.25 * house.mean_edge_length()) {
  obs_.reserve(static_cast<std::size_t>(house.size()));
  cands_.reserve(static_cast<std::size_t>(house.size()));
  fields_.reserve(static_cast<std::size_t>(house.size()));
  for (int i = 0; i < house.size(); ++i) {
    obs_.push_back(env::observation(house, i));
    cands_.push_back(env::candidate_features(house, i));
    fields_.push_back(env::geodesic_to(house, i));
  }
}

const env::GeodesicField& HouseContext::field(int goal) const { return fields_.at(static_cast<std::size_t>(goal)); }

namespace {

ad::Var need(const VarTree& vars, LayerKey key, const char* name) {
  auto it = vars.find(key);
  if (it == vars.end()) throw Error("agent: missing layer key " + std::string(layer_name(key)));
  auto jt = it->second.find(name);
  if (jt == it->second.end()) {
    throw Error("agent: layer " + std::string(layer_name(key)) + " lacks tensor " + name);
  }
  return jt->second;
}

}  // namespace

AgentNet::AgentNet(ad::Tape& tape, const VarTree& vars, bool with_critic) : tape_(&tape) {
  auto gru = [&](LayerKey key) {
    return Gru{need(vars, key, "w_xz"), need(vars, key, "w_xr"), need(vars, key, "w_xn"),
               need(vars, key, "w_hz"), need(vars, key, "w_hr"), need(vars, key, "w_hn"),
               need(vars, key, "b_z"),  need(vars, key, "b_r"),  need(vars, key, "b_n")};
  };
  embedding_ = need(vars, LayerKey::Embedding, "table");
  encoder_ = gru(LayerKey::EncoderRNN);
  proj_w_ = need(vars, LayerKey::EncDecProjection, "weight");
  proj_b_ = need(vars, LayerKey::EncDecProjection, "bias");
  act_w_ = need(vars, LayerKey::DecActionEmbed, "weight");
  act_b_ = need(vars, LayerKey::DecActionEmbed, "bias");
  vis_key_ = need(vars, LayerKey::DecVisualAttn, "key");
  decoder_ = gru(LayerKey::DecStateUpdate);
  query_ = need(vars, LayerKey::DecInstrAttn, "query");
  out_w_ = need(vars, LayerKey::DecInstrAttn, "out");
  out_b_ = need(vars, LayerKey::DecInstrAttn, "bias");
  score_ = need(vars, LayerKey::DecCandidateScore, "bilinear");
  if (with_critic) {
    critic_ = Critic{need(vars, LayerKey::Critic, "w1"), need(vars, LayerKey::Critic, "b1"),
                     need(vars, LayerKey::Critic, "w2"), need(vars, LayerKey::Critic, "b2")};
  }
  cand_dim_ = tape.rows(act_w_);
  vocab_size_ = tape.rows(embedding_);
  enc_hidden_ = tape.cols(encoder_.whz);
}

ad::Var AgentNet::gru_step(const Gru& g, ad::Var x, ad::Var h) const {
  ad::Tape& t = *tape_;
  ad::Var z = t.sigmoid(t.add(t.add(t.matmul(x, g.wxz), t.matmul(h, g.whz)), g.bz));
  ad::Var r = t.sigmoid(t.add(t.add(t.matmul(x, g.wxr), t.matmul(h, g.whr)), g.br));
  ad::Var n = t.tanh(t.add(t.add(t.matmul(x, g.wxn), t.matmul(t.mul(r, h), g.whn)), g.bn));
  // (1 - z) * n + z * h
  return t.add(n, t.mul(z, t.sub(h, n)));
}

Encoded AgentNet::encode(std::span<const int> tokens) const {
  if (tokens.empty()) throw Error("encode_instruction: empty instruction");
  for (int tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= vocab_size_) {
      throw Error("encode_instruction: token id " + std::to_string(tok) + " outside vocabulary of " +
                  std::to_string(vocab_size_));
    }
  }
  ad::Tape& t = *tape_;
  ad::Var h = t.constant(Tensor({1, enc_hidden_}, 0.0));
  std::vector<ad::Var> states;
  states.reserve(tokens.size());
  for (int tok : tokens) {
    const int idx[1] = {tok};
    ad::Var x = t.gather_rows(embedding_, idx);
    h = gru_step(encoder_, x, h);
    states.push_back(h);
  }
  Encoded enc;
  enc.context = t.concat_rows(states);
  enc.context_t = t.transpose(enc.context);
  enc.init_state = t.add(t.matmul(h, proj_w_), proj_b_);
  enc.length = tokens.size();
  return enc;
}

StepOutput AgentNet::step(ad::Var hidden, ad::Var prev_action, const Encoded& enc, ad::Var obs, ad::Var cands,
                          bool with_value) const {
  ad::Tape& t = *tape_;
  // action embedding
  ad::Var a = t.tanh(t.add(t.matmul(prev_action, act_w_), act_b_));
  // visual attention over candidates, keyed by the previous state
  ad::Var keys = t.matmul(cands, vis_key_);
  ad::Var att = t.softmax(t.transpose(t.matmul(keys, t.transpose(hidden))));
  ad::Var visual = t.matmul(att, cands);
  // recurrent state update
  const ad::Var parts[3] = {a, visual, obs};
  ad::Var h = gru_step(decoder_, t.concat_cols(parts), hidden);
  // instruction attention
  ad::Var w = t.softmax(t.matmul(t.matmul(h, query_), enc.context_t));
  ad::Var ctx = t.matmul(w, enc.context);
  const ad::Var joined[2] = {h, ctx};
  ad::Var attended = t.tanh(t.add(t.matmul(t.concat_cols(joined), out_w_), out_b_));
  // bilinear candidate scoring
  StepOutput out;
  out.logits = t.matmul(t.matmul(attended, score_), t.transpose(cands));
  out.hidden = h;
  if (with_value) {
    if (!has_critic()) throw Error("agent: missing layer key Critic");
    ad::Var feat = t.detach(attended);
    out.value = t.add(t.matmul(t.tanh(t.add(t.matmul(feat, critic_.w1), critic_.b1)), critic_.w2), critic_.b2);
  }
  return out;
}

EncodedValues encode_instruction(const ParamTree& params, std::span<const int> tokens) {
  ad::Tape tape;
  AgentNet net(tape, bind_constants(tape, params), false);
  Encoded enc = net.encode(tokens);
  return {tape.value_tensor(enc.context), tape.value_tensor(enc.init_state)};
}

StepValues decode_step(const ParamTree& params, const AgentState& state, const Tensor& context,
                       const Tensor& observation, const Tensor& candidates) {
  ad::Tape tape;
  AgentNet net(tape, bind_constants(tape, params), true);
  Encoded enc;
  enc.context = tape.constant(context);
  enc.context_t = tape.transpose(enc.context);
  enc.length = context.rows();
  StepOutput out = net.step(tape.constant(state.hidden), tape.constant(state.prev_action), enc,
                            tape.constant(observation), tape.constant(candidates), true);
  return {tape.value_tensor(out.logits), tape.scalar(out.value), tape.value_tensor(out.hidden)};
}

std::vector<int> reference_actions(const env::HouseGraph& house, const env::Episode& episode) {
  std::vector<int> actions;
  actions.reserve(episode.path.size());
  for (std::size_t i = 1; i < episode.path.size(); ++i) {
    const int k = house.candidate_index(episode.path[i - 1], episode.path[i]);
    if (k < 0) throw Error("reference_actions: reference path is not a walk on the house");
    actions.push_back(k);
  }
  actions.push_back(0);
  return actions;
}

namespace {

std::vector<double> softmax_values(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double log_softmax_at(std::span<const double> logits, int k) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return logits[static_cast<std::size_t>(k)] - mx - std::log(z);
}

int sample_index(const std::vector<double>& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

Rollout rollout(const ParamTree& params, const env::Episode& episode, const HouseContext& ctx, RolloutMode mode,
                Rng* rng, int max_steps) {
  if (mode == RolloutMode::Sample && rng == nullptr) throw Error("rollout: Sample mode requires an rng");
  const bool with_critic = params.contains(LayerKey::Critic);
  ad::Tape tape;
  AgentNet net(tape, bind_constants(tape, params), with_critic);
  Encoded enc = net.encode(episode.instruction);
  const env::HouseGraph& house = ctx.house();
  const std::vector<int> teacher =
      mode == RolloutMode::TeacherForcing ? reference_actions(house, episode) : std::vector<int>{};

  Rollout out;
  int node = episode.start();
  out.trajectory.push_back(node);
  ad::Var hidden = enc.init_state;
  ad::Var prev = tape.constant(Tensor({1, net.cand_dim()}, 0.0));
  const int steps = mode == RolloutMode::TeacherForcing ? static_cast<int>(teacher.size()) : max_steps;
  for (int t = 0; t < steps; ++t) {
    const Tensor& cand_feats = ctx.candidates(node);
    ad::Var cands = tape.constant(cand_feats);
    StepOutput so = net.step(hidden, prev, enc, tape.constant(ctx.observation(node)), cands, with_critic);
    const auto logits = tape.value(so.logits);
    std::vector<double> probs = softmax_values(logits);
    int action = 0;
    switch (mode) {
      case RolloutMode::TeacherForcing: action = teacher[static_cast<std::size_t>(t)]; break;
      case RolloutMode::Greedy:
        action = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        break;
      case RolloutMode::Sample: action = sample_index(probs, *rng); break;
    }
    out.actions.push_back(action);
    out.log_probs.push_back(log_softmax_at(logits, action));
    if (with_critic) out.values.push_back(tape.scalar(so.value));
    out.probabilities.push_back(std::move(probs));
    if (action == 0) {
      out.stopped = true;
      break;
    }
    const int idx[1] = {action};
    prev = tape.gather_rows(cands, idx);
    hidden = so.hidden;
    node = house.candidate_target(node, action);
    out.trajectory.push_back(node);
  }
  return out;
}

}  // namespace pfednav::agent
