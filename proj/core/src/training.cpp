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

#include "pfednav/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfednav/errors.hpp"

namespace pfednav::agent {
namespace {

struct TeacherTrace {
  std::vector<ad::Var> ce;  // per-step cross-entropy nodes
};

void teacher_forced(ad::Tape& tape, const AgentNet& net, const env::Episode& ep, const Encoded& enc,
                    const HouseContext& ctx, std::vector<ad::Var>& ce) {
  const std::vector<int> actions = reference_actions(ctx.house(), ep);
  ad::Var hidden = enc.init_state;
  ad::Var prev = tape.constant(Tensor({1, net.cand_dim()}, 0.0));
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const int node = ep.path[t];
    ad::Var cands = tape.constant(ctx.candidates(node));
    StepOutput so = net.step(hidden, prev, enc, tape.constant(ctx.observation(node)), cands, false);
    const int target[1] = {actions[t]};
    ce.push_back(tape.cross_entropy(so.logits, target));
    if (actions[t] == 0) break;
    prev = tape.gather_rows(cands, target);
    hidden = so.hidden;
  }
}

int sample_from_logits(std::span<const double> logits, Rng& rng) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  const double u = uniform01(rng) * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

ad::Var imitation_objective(ad::Tape& tape, const AgentNet& net, std::span<const env::Episode> batch,
                            const HouseContext& ctx) {
  if (batch.empty()) throw Error("imitation_loss: empty batch");
  std::vector<ad::Var> ce;
  for (const auto& ep : batch) teacher_forced(tape, net, ep, net.encode(ep.instruction), ctx, ce);
  return tape.mean(tape.concat_cols(ce));
}

LossReport imitation_loss(const ParamTree& params, std::span<const env::Episode> batch, const HouseContext& ctx) {
  ad::Tape tape;
  VarTree vars = bind_variables(tape, params);
  AgentNet net(tape, vars, false);
  ad::Var loss = imitation_objective(tape, net, batch, ctx);
  tape.backward(loss);
  LossReport report;
  report.loss = tape.scalar(loss);
  report.grad = collect_gradients(tape, vars, params);
  for (const auto& ep : batch) report.episodes.push_back({static_cast<int>(ep.path.size()), true});
  return report;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

RlTerms rl_objective(ad::Tape& tape, const AgentNet& net, std::span<const env::Episode> batch,
                     const HouseContext& ctx, Rng& rng, const RlConfig& config,
                     const std::vector<Encoded>* encoded) {
  if (batch.empty()) throw Error("rl_loss: empty batch");
  if (!net.has_critic()) throw Error("rl_loss: missing layer key Critic");
  const env::HouseGraph& house = ctx.house();
  std::vector<ad::Var> policy_terms;
  std::vector<ad::Var> critic_terms;
  RlTerms terms;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const env::Episode& ep = batch[e];
    const Encoded enc = encoded ? (*encoded)[e] : net.encode(ep.instruction);
    const env::GeodesicField& field = ctx.field(ep.goal);
    ad::Var hidden = enc.init_state;
    ad::Var prev = tape.constant(Tensor({1, net.cand_dim()}, 0.0));
    int node = ep.start();
    std::vector<ad::Var> ce;
    std::vector<ad::Var> values;
    std::vector<double> rewards;
    for (int t = 0; t < config.max_steps; ++t) {
      ad::Var cands = tape.constant(ctx.candidates(node));
      StepOutput so = net.step(hidden, prev, enc, tape.constant(ctx.observation(node)), cands, true);
      const int action = sample_from_logits(tape.value(so.logits), rng);
      const int target[1] = {action};
      ce.push_back(tape.cross_entropy(so.logits, target));
      values.push_back(so.value);
      if (action == 0) {
        rewards.push_back(0.0);
        break;
      }
      const int next = house.candidate_target(node, action);
      rewards.push_back(field.dist[static_cast<std::size_t>(node)] - field.dist[static_cast<std::size_t>(next)]);
      prev = tape.gather_rows(cands, target);
      hidden = so.hidden;
      node = next;
    }
    const bool success = house.distance(node, ep.goal) <= ctx.success_radius();
    rewards.back() += success ? config.terminal_bonus : -config.terminal_bonus;
    const std::vector<double> returns = discounted_returns(rewards, config.gamma);
    for (std::size_t t = 0; t < returns.size(); ++t) {
      const double advantage = returns[t] - tape.scalar(values[t]);
      // cross-entropy is -log pi(a_t); the advantage enters as a constant
      policy_terms.push_back(tape.scale(ce[t], advantage));
      ad::Var diff = tape.sub(tape.constant_scalar(returns[t]), values[t]);
      critic_terms.push_back(tape.mul(diff, diff));
    }
    terms.steps += static_cast<int>(returns.size());
    terms.episodes.push_back({static_cast<int>(returns.size()), success});
  }
  terms.policy = tape.sum(tape.concat_cols(policy_terms));
  terms.critic = tape.sum(tape.concat_cols(critic_terms));
  terms.total = tape.scale(tape.add(terms.policy, terms.critic), 1.0 / terms.steps);
  return terms;
}

LossReport rl_loss(const ParamTree& params, const env::Episode& episode, const HouseContext& ctx, Rng& rng,
                   const RlConfig& config) {
  ad::Tape tape;
  VarTree vars = bind_variables(tape, params);
  AgentNet net(tape, vars, true);
  const env::Episode one[1] = {episode};
  RlTerms terms = rl_objective(tape, net, one, ctx, rng, config);
  tape.backward(terms.total);
  LossReport report;
  report.loss = tape.scalar(terms.total);
  report.grad = collect_gradients(tape, vars, params);
  report.episodes = terms.episodes;
  return report;
}

double global_norm(const ParamTree& grad) {
  double sq = 0.0;
  for (const auto& [_, layer] : grad.layers()) {
    for (const auto& [__, t] : layer) {
      for (double v : t.data()) sq += v * v;
    }
  }
  return std::sqrt(sq);
}

void sgd_step(ParamTree& params, const ParamTree& grad, double lr) {
  for (const auto& [key, layer] : grad.layers()) {
    Layer& dst = params.layer(key);
    for (const auto& [name, g] : layer) {
      Tensor& p = dst.at(name);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
  }
}

TrainResult local_train(const ParamTree& params, std::span<const env::Episode> train, const HouseContext& ctx,
                        const TrainConfig& config, Rng& rng) {
  if (config.epochs < 1) throw Error("local_train: epochs must be >= 1");
  if (config.lr < 0.0) throw Error("local_train: lr must be >= 0");
  if (config.il_rl_mix < 0.0 || config.il_rl_mix > 1.0) throw Error("local_train: il_rl_mix outside [0,1]");
  if (config.batch_size < 1) throw Error("local_train: batch_size must be >= 1");
  if (train.empty()) throw Error("local_train: empty training set");
  const bool use_rl = config.il_rl_mix < 1.0;
  if (use_rl && !params.contains(LayerKey::Critic)) throw Error("local_train: RL term requires a Critic layer");

  TrainResult result;
  result.params = params;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<env::Episode> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, il_sum = 0.0;
    int batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += bs) {
      batch.clear();
      for (std::size_t i = begin; i < std::min(order.size(), begin + bs); ++i) batch.push_back(train[order[i]]);
      ad::Tape tape;
      VarTree vars = bind_variables(tape, result.params);
      AgentNet net(tape, vars, use_rl);
      std::vector<Encoded> encoded;
      encoded.reserve(batch.size());
      std::vector<ad::Var> ce;
      for (const auto& ep : batch) {
        encoded.push_back(net.encode(ep.instruction));
        teacher_forced(tape, net, ep, encoded.back(), ctx, ce);
      }
      ad::Var il = tape.mean(tape.concat_cols(ce));
      ad::Var total = il;
      if (use_rl) {
        RlTerms rl = rl_objective(tape, net, batch, ctx, rng, config.rl, &encoded);
        total = tape.add(tape.scale(il, config.il_rl_mix), tape.scale(rl.total, 1.0 - config.il_rl_mix));
      }
      tape.backward(total);
      loss_sum += tape.scalar(total);
      il_sum += tape.scalar(il);
      ++batches;
      if (config.lr == 0.0) continue;
      ParamTree grad = collect_gradients(tape, vars, result.params);
      double lr = config.lr;
      if (config.grad_clip > 0.0) {
        const double norm = global_norm(grad);
        if (norm > config.grad_clip) lr *= config.grad_clip / norm;
      }
      sgd_step(result.params, grad, lr);
    }
    result.epoch_loss.push_back(loss_sum / batches);
    result.epoch_il_loss.push_back(il_sum / batches);
  }
  return result;
}

}  // namespace pfednav::agent
