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

#include "helpers.hpp"
#include "pfednav/errors.hpp"
#include "pfednav/training.hpp"

using namespace pfednav;
using namespace pfednav::agent;

namespace {

void zero_layer(ParamTree& p, LayerKey key) {
  for (auto& [_, t] : p.layer(key)) {
    for (auto& v : t.data()) v = 0.0;
  }
}

/// Parameters whose policy puts (almost) all mass on STOP everywhere and
/// whose critic outputs the constant `value`.
ParamTree stop_policy(ParamTree p, double value) {
  zero_layer(p, LayerKey::DecInstrAttn);
  for (auto& v : p.tensor(LayerKey::DecInstrAttn, "bias").data()) v = 1.0;  // attended = tanh(1) > 0
  Tensor& score = p.tensor(LayerKey::DecCandidateScore, "bilinear");
  for (std::size_t r = 0; r < score.rows(); ++r) {
    for (std::size_t c = 0; c < score.cols(); ++c) score.at(r, c) = c == 0 ? 50.0 : 0.0;  // is_stop column
  }
  zero_layer(p, LayerKey::Critic);
  p.tensor(LayerKey::Critic, "b2")[0] = value;
  return p;
}

double max_rel_error_il(const ParamTree& params, std::span<const env::Episode> batch, const HouseContext& ctx,
                        std::size_t stride) {
  const LossReport rep = imitation_loss(params, batch, ctx);
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& [key, layer] : params.layers()) {
    if (key == LayerKey::Critic) continue;
    for (const auto& [name, t] : layer) {
      for (std::size_t i = 0; i < t.size(); i += stride) {
        ParamTree plus = params, minus = params;
        plus.tensor(key, name)[i] += h;
        minus.tensor(key, name)[i] -= h;
        const double num =
            (imitation_loss(plus, batch, ctx).loss - imitation_loss(minus, batch, ctx).loss) / (2 * h);
        const double ana = rep.grad.tensor(key, name)[i];
        worst = std::max(worst, std::abs(ana - num) / std::max(1.0, std::abs(num)));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("agent_model") {

TEST_CASE("model config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_steps = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.dec_hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("encoder shapes, projection linearity and token order") {
  testing::ClientFixture f(0, 3);
  const auto& ep = f.train.front();
  const EncodedValues e = encode_instruction(f.params, ep.instruction);
  CHECK(e.context.rows() == ep.instruction.size());
  CHECK(e.context.cols() == static_cast<std::size_t>(f.setup.model.enc_hidden));

  ParamTree zero = f.params;
  zero_layer(zero, LayerKey::EncDecProjection);
  for (auto& v : zero.tensor(LayerKey::EncDecProjection, "bias").data()) v = 0.25;
  const EncodedValues z = encode_instruction(zero, ep.instruction);
  for (double v : z.init_state.data()) CHECK(v == 0.25);

  std::vector<int> swapped = ep.instruction;
  std::swap(swapped[0], swapped[1]);
  REQUIRE(swapped != ep.instruction);
  const EncodedValues s = encode_instruction(f.params, swapped);
  CHECK(max_abs_diff(s.context, e.context) > 1e-6);

  const std::vector<int> oov = {0, f.setup.model.vocab_size};
  CHECK_THROWS_AS(encode_instruction(f.params, oov), Error);
}

TEST_CASE("decoder edge cases") {
  testing::ClientFixture f(1, 4);
  const auto& ep = f.train.front();
  const EncodedValues e = encode_instruction(f.params, ep.instruction);
  AgentState st{e.init_state, Tensor({1, static_cast<std::size_t>(f.setup.model.cand_dim)}), ep.start(), 0};

  const Tensor& all = f.ctx.candidates(ep.start());
  Tensor stop_only({1, all.cols()});
  for (std::size_t c = 0; c < all.cols(); ++c) stop_only.at(0, c) = all.at(0, c);
  const StepValues one = decode_step(f.params, st, e.context, f.ctx.observation(ep.start()), stop_only);
  REQUIRE(one.logits.size() == 1);

  ParamTree flat = f.params;
  zero_layer(flat, LayerKey::DecCandidateScore);
  const StepValues u = decode_step(flat, st, e.context, f.ctx.observation(ep.start()), f.ctx.candidates(ep.start()));
  for (double v : u.logits.data()) CHECK(v == 0.0);
  CHECK(u.hidden.size() == static_cast<std::size_t>(f.setup.model.dec_hidden));

  ParamTree missing = f.params;
  missing.erase(LayerKey::DecVisualAttn);
  try {
    decode_step(missing, st, e.context, f.ctx.observation(ep.start()), f.ctx.candidates(ep.start()));
    FAIL("expected an error");
  } catch (const Error& err) {
    CHECK(std::string(err.what()).find("DecVisualAttn") != std::string::npos);
  }
}

TEST_CASE("every decoder layer and the critic receive gradient") {
  testing::ClientFixture f(2, 5);
  ad::Tape tape;
  VarTree vars = bind_variables(tape, f.params);
  AgentNet net(tape, vars, true);
  const auto& ep = f.train.front();
  Encoded enc = net.encode(ep.instruction);
  ad::Var hidden = enc.init_state;
  ad::Var prev = tape.constant(Tensor({1, net.cand_dim()}));
  // two steps so the action embedding sees a non-zero previous action
  StepOutput a = net.step(hidden, prev, enc, tape.constant(f.ctx.observation(ep.path[0])),
                          tape.constant(f.ctx.candidates(ep.path[0])), true);
  const int k[1] = {f.data.house.candidate_index(ep.path[0], ep.path[1])};
  prev = tape.gather_rows(tape.constant(f.ctx.candidates(ep.path[0])), k);
  StepOutput b = net.step(a.hidden, prev, enc, tape.constant(f.ctx.observation(ep.path[1])),
                          tape.constant(f.ctx.candidates(ep.path[1])), true);
  ad::Var loss = tape.add(tape.sum(b.logits), b.value);
  tape.backward(loss);
  const ParamTree g = collect_gradients(tape, vars, f.params);
  for (LayerKey key : kDecoderLayers) {
    INFO(layer_name(key));
    double norm = 0.0;
    for (const auto& [_, t] : g.layer(key)) {
      for (double v : t.data()) norm += v * v;
    }
    CHECK(norm > 0.0);
  }
  double critic = 0.0;
  for (const auto& [_, t] : g.layer(LayerKey::Critic)) {
    for (double v : t.data()) critic += v * v;
  }
  CHECK(critic > 0.0);
}

TEST_CASE("rollout modes") {
  testing::ClientFixture f(3, 6);
  const auto& ep = f.train.front();
  const Rollout tf = rollout(f.params, ep, f.ctx, RolloutMode::TeacherForcing, nullptr, 12);
  CHECK(tf.trajectory == ep.path);
  CHECK(tf.actions.back() == 0);
  CHECK(tf.actions.size() == ep.path.size());
  const Rollout g1 = rollout(f.params, ep, f.ctx, RolloutMode::Greedy, nullptr, 12);
  const Rollout g2 = rollout(f.params, ep, f.ctx, RolloutMode::Greedy, nullptr, 12);
  CHECK(g1.trajectory == g2.trajectory);
  CHECK(g1.trajectory.front() == ep.start());
  CHECK(g1.trajectory.size() <= 13);
  Rng r1(3), r2(3);
  CHECK(rollout(f.params, ep, f.ctx, RolloutMode::Sample, &r1, 12).trajectory ==
        rollout(f.params, ep, f.ctx, RolloutMode::Sample, &r2, 12).trajectory);
  CHECK_THROWS_AS(rollout(f.params, ep, f.ctx, RolloutMode::Sample, nullptr, 12), Error);
  CHECK(reference_actions(f.data.house, ep).size() == ep.path.size());
}

TEST_CASE("uniform policy samples candidates uniformly") {
  testing::ClientFixture f(4, 7);
  ParamTree flat = f.params;
  zero_layer(flat, LayerKey::DecCandidateScore);
  int node = -1;
  for (int i = 0; i < f.data.house.size() && node < 0; ++i) {
    if (f.data.house.candidate_count(i) == 3) node = i;
  }
  REQUIRE(node >= 0);
  env::Episode ep;
  ep.instruction = {1, 9, 0};
  ep.path = {node};
  ep.goal = node;
  Rng rng(17);
  int counts[3] = {0, 0, 0};
  for (int s = 0; s < 200; ++s) counts[rollout(flat, ep, f.ctx, RolloutMode::Sample, &rng, 12).actions.front()]++;
  for (int c : counts) CHECK(std::abs(c / 200.0 - 1.0 / 3.0) <= 0.08);
}

TEST_CASE("imitation loss closed form and invariances") {
  testing::ClientFixture f(5, 8);
  ParamTree flat = f.params;
  zero_layer(flat, LayerKey::DecCandidateScore);
  const std::vector<env::Episode> batch(f.train.begin(), f.train.begin() + 3);
  double expect = 0.0;
  int steps = 0;
  for (const auto& ep : batch) {
    for (int node : ep.path) {
      expect += std::log(static_cast<double>(f.data.house.candidate_count(node)));
      ++steps;
    }
  }
  CHECK(imitation_loss(flat, batch, f.ctx).loss == doctest::Approx(expect / steps).epsilon(1e-12));

  std::vector<env::Episode> doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  CHECK(imitation_loss(f.params, doubled, f.ctx).loss ==
        doctest::Approx(imitation_loss(f.params, batch, f.ctx).loss).epsilon(1e-14));
  CHECK(imitation_loss(f.params, batch, f.ctx).loss >= 0.0);
}

TEST_CASE("imitation gradient matches finite differences and skips the critic") {
  testing::ClientFixture f(6, 9);
  const std::vector<env::Episode> batch(f.train.begin(), f.train.begin() + 2);
  CHECK(max_rel_error_il(f.params, batch, f.ctx, 7) < 1e-4);
  const LossReport rep = imitation_loss(f.params, batch, f.ctx);
  CHECK(rep.grad.keys() == f.params.keys());
  for (const auto& [_, t] : rep.grad.layer(LayerKey::Critic)) {
    for (double v : t.data()) CHECK(v == 0.0);
  }
}

TEST_CASE("discounted returns") {
  const double r[3] = {1.0, 0.0, 2.0};
  const auto g = discounted_returns(r, 0.5);
  CHECK(g[2] == 2.0);
  CHECK(g[1] == 1.0);
  CHECK(g[0] == 1.5);
}

TEST_CASE("rl loss on an immediate stop at the goal") {
  testing::ClientFixture f(7, 10);
  const ParamTree p = stop_policy(f.params, 2.0);
  env::Episode ep;
  ep.instruction = {0};
  ep.path = {3};
  ep.goal = 3;
  Rng rng(1);
  ad::Tape tape;
  VarTree vars = bind_variables(tape, p);
  AgentNet net(tape, vars, true);
  const env::Episode one[1] = {ep};
  RlTerms terms = rl_objective(tape, net, one, f.ctx, rng, RlConfig{});
  CHECK(terms.steps == 1);
  CHECK(terms.episodes.front().success);
  // value already equals the +2 terminal return, so both terms vanish
  CHECK(tape.scalar(terms.critic) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(std::abs(tape.scalar(terms.policy)) < 1e-12);
}

TEST_CASE("policy term sends no gradient to the critic") {
  testing::ClientFixture f(8, 11);
  Rng rng(5);
  ad::Tape tape;
  VarTree vars = bind_variables(tape, f.params);
  AgentNet net(tape, vars, true);
  const std::vector<env::Episode> batch(f.train.begin(), f.train.begin() + 2);
  RlTerms terms = rl_objective(tape, net, batch, f.ctx, rng, RlConfig{});
  tape.backward(terms.policy);
  const ParamTree g = collect_gradients(tape, vars, f.params);
  for (const auto& [_, t] : g.layer(LayerKey::Critic)) {
    for (double v : t.data()) CHECK(v == 0.0);
  }
  double policy_norm = 0.0;
  for (const auto& [_, t] : g.layer(LayerKey::DecCandidateScore)) {
    for (double v : t.data()) policy_norm += v * v;
  }
  CHECK(policy_norm > 0.0);
}

TEST_CASE("rl loss report covers every key") {
  testing::ClientFixture f(9, 12);
  Rng rng(2);
  const LossReport rep = rl_loss(f.params, f.train.front(), f.ctx, rng);
  CHECK(rep.grad.keys() == f.params.keys());
  CHECK(std::isfinite(rep.loss));
  CHECK(rep.episodes.size() == 1);
}

TEST_CASE("local training with zero learning rate is the identity") {
  testing::ClientFixture f(0, 13);
  TrainConfig tc;
  tc.lr = 0.0;
  tc.epochs = 2;
  Rng rng(4);
  const TrainResult r = local_train(f.params, f.train, f.ctx, tc, rng);
  CHECK(bitwise_equal(r.params, f.params));
  CHECK(r.epoch_loss.size() == 2);
}

TEST_CASE("pure imitation on one episode decreases every epoch") {
  testing::ClientFixture f(1, 14);
  TrainConfig tc;
  tc.lr = 0.05;
  tc.epochs = 5;
  tc.il_rl_mix = 1.0;
  Rng rng(6);
  const std::vector<env::Episode> one(f.train.begin(), f.train.begin() + 1);
  const TrainResult r = local_train(f.params, one, f.ctx, tc, rng);
  for (std::size_t e = 1; e < r.epoch_il_loss.size(); ++e) CHECK(r.epoch_il_loss[e] < r.epoch_il_loss[e - 1]);
}

TEST_CASE("local training is deterministic in the rng") {
  testing::ClientFixture f(2, 15);
  TrainConfig tc;
  tc.epochs = 2;
  Rng a(9), b(9);
  CHECK(bitwise_equal(local_train(f.params, f.train, f.ctx, tc, a).params,
                      local_train(f.params, f.train, f.ctx, tc, b).params));
  tc.il_rl_mix = 1.5;
  CHECK_THROWS_AS(local_train(f.params, f.train, f.ctx, tc, a), Error);
}

}  // TEST_SUITE
