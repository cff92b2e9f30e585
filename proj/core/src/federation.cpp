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

#include "pfednav/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "pfednav/checkpoint.hpp"
#include "pfednav/errors.hpp"

namespace pfednav::fed {
namespace {

constexpr std::uint64_t kInitSalt = 0x1A17;
constexpr std::uint64_t kSampleSalt = 0x5A3D;

void require_no_critic(const ParamTree& tree, const std::string& what) {
  if (tree.contains(LayerKey::Critic)) throw ProtocolError(what + " carries the Critic layer");
}

}  // namespace

int FedConfig::participants() const {
  return static_cast<int>(std::ceil(participation * num_clients - 1e-9));
}

void FedConfig::validate() const {
  if (num_clients < 1) throw ConfigError("federation.num_clients must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw ConfigError("federation.participation_rate must lie in (0,1]");
  }
  if (participants() < 1) throw ConfigError("federation.participation_rate selects no client");
  if (rounds < 0) throw ConfigError("federation.rounds must be >= 0");
  if (eval_every < 1) throw ConfigError("federation.eval_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("federation.checkpoint_every must be >= 0");
  if (!std::isfinite(target_loss)) throw ConfigError("federation.target_loss must be finite");
}

void ExperimentSetup::resolve() {
  model.vocab_size = data.vocab_size;
  model.obs_dim = data.house.room_types + 2 + data.house.noise_dim;
  model.cand_dim = env::candidate_dim(model.obs_dim);
  train.rl.max_steps = model.max_steps;
}

void ExperimentSetup::validate() const {
  fed.validate();
  model.validate();
  selection.validate();
  if (train.epochs < 1) throw ConfigError("train.local_epochs must be >= 1");
  if (!(train.lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(train.il_rl_mix >= 0.0 && train.il_rl_mix <= 1.0)) throw ConfigError("train.il_rl_mix must lie in [0,1]");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.grad_clip < 0.0) throw ConfigError("train.grad_clip must be >= 0");
  if (!(train.rl.gamma >= 0.0 && train.rl.gamma <= 1.0)) throw ConfigError("train.gamma must lie in [0,1]");
  if (success_radius < 0.0) throw ConfigError("metrics.success_radius must be >= 0");
  if (data.episodes_per_client < 2) throw ConfigError("data.episodes_per_client must be >= 2");
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("data.train_fraction must lie in (0,1)");
  }
  if (data.scale_min < 4 || data.scale_max < data.scale_min) {
    throw ConfigError("data.scale_min must be >= 4 and <= data.scale_max");
  }
  if (data.branching_min < 1.0 || data.branching_max < data.branching_min) {
    throw ConfigError("data.branching_min must be >= 1 and <= data.branching_max");
  }
  if (data.verbosity_min < 0.0 || data.verbosity_max < data.verbosity_min) {
    throw ConfigError("data.verbosity_min must be >= 0 and <= data.verbosity_max");
  }
  if (data.house.room_types < 1 || data.house.noise_dim < 0 || data.house.noise_scale < 0.0) {
    throw ConfigError("data.room_types must be >= 1, data.noise_dim and data.noise_scale >= 0");
  }
  if (data.filler_tokens < 0) throw ConfigError("data.filler_tokens must be >= 0");
  const int canonical = data.layout().canonical_size();
  if (data.vocab_size < canonical) {
    throw ConfigError("data.vocab_size must be >= " + std::to_string(canonical) + " for this layout");
  }
  if (model.vocab_size != data.vocab_size) throw ConfigError("model.vocab_size must equal data.vocab_size");
}

std::vector<int> sample_clients(int num_clients, double participation, Rng& rng) {
  FedConfig probe;
  probe.num_clients = num_clients;
  probe.participation = participation;
  probe.validate();
  const int k = probe.participants();
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  // partial Fisher-Yates: the first k slots are the sample
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + uniform_index(rng, static_cast<std::uint64_t>(num_clients - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

ParamTree aggregate(std::span<const Upload> uploads) {
  if (uploads.empty()) throw Error("aggregate: no uploads");
  std::vector<const Upload*> order;
  for (const auto& u : uploads) {
    require_no_critic(u.tree, "upload from client " + std::to_string(u.client_id));
    order.push_back(&u);
  }
  std::sort(order.begin(), order.end(), [](const Upload* a, const Upload* b) { return a->client_id < b->client_id; });
  std::vector<WeightedTree> weighted;
  for (const Upload* u : order) weighted.push_back({std::cref(u->tree), static_cast<double>(u->dataset_size)});
  return weighted_average(weighted);
}

Federation::Federation(const ExperimentSetup& setup, std::uint64_t seed) : setup_(setup), seed_(seed) {
  setup_.resolve();
  setup_.validate();
  const ParamTree initial = agent::init_params(setup_.model, derive_seed(seed, {kInitSalt}));
  global_ = strip_critic(initial);
  initial_critic_tree_ = initial;
  for (int i = 0; i < setup_.fed.num_clients; ++i) {
    auto client = std::make_unique<Client>();
    client->data = env::generate_client_dataset(i, setup_.data, seed);
    client->train_set = client->data.train_episodes();
    client->eval_set = client->data.eval_episodes();
    client->ctx = std::make_unique<agent::HouseContext>(client->data.house, setup_.success_radius);
    client->state.client_id = i;
    client->state.local = initial;
    clients_.push_back(std::move(client));
  }
}

ParamTree Federation::evaluation_model(int client_id) const {
  const Client& c = *clients_.at(static_cast<std::size_t>(client_id));
  switch (setup_.fed.mode) {
    case personal::Mode::FedAvg:
    case personal::Mode::NoLayer:
      return global_;
    case personal::Mode::PFedNavi:
    case personal::Mode::AllLayers:
    case personal::Mode::LocalOnly:
      return c.trained ? strip_critic(c.state.local) : global_;
  }
  return global_;
}

metrics::MetricBundle Federation::evaluate() const {
  std::vector<metrics::ClientEpisodes> per_client;
  for (const auto& c : clients_) {
    const ParamTree model = evaluation_model(c->state.client_id);
    metrics::ClientEpisodes ce;
    ce.client_id = c->state.client_id;
    for (const auto& ep : c->eval_set) {
      const agent::Rollout r =
          agent::rollout(model, ep, *c->ctx, agent::RolloutMode::Greedy, nullptr, setup_.model.max_steps);
      ce.episodes.push_back(
          metrics::evaluate_episode(r.trajectory, ep.path, ep.goal, c->data.house, c->ctx->success_radius()));
    }
    per_client.push_back(std::move(ce));
  }
  return metrics::aggregate_metrics(per_client);
}

RoundRecord Federation::run_round() {
  const auto t0 = std::chrono::steady_clock::now();
  RoundRecord record;
  record.round = ++round_;
  Rng sampler = make_rng(seed_, {static_cast<std::uint64_t>(record.round), kSampleSalt});
  record.sampled = sample_clients(setup_.fed.num_clients, setup_.fed.participation, sampler);

  std::vector<Upload> uploads;
  for (int id : record.sampled) {
    Client& c = *clients_[static_cast<std::size_t>(id)];
    personal::ClientRngs rngs = personal::client_rngs(seed_, id, record.round);
    personal::ClientRoundResult res = personal::client_round(c.state, global_, record.round, setup_.fed.mode,
                                                             setup_.selection, setup_.train, c.train_set, *c.ctx, rngs);
    c.trained = true;
    require_no_critic(res.upload, "upload from client " + std::to_string(id));
    const auto upload_keys = res.upload.keys();
    record.upload_layers[id] = LayerSet(upload_keys.begin(), upload_keys.end());
    record.train_loss[id] = res.diag.train_loss;
    record.diagnostics.push_back(std::move(res.diag));
    uploads.push_back({id, std::move(res.upload), c.data.train_size()});
  }
  double loss_sum = 0.0;
  for (const auto& [_, l] : record.train_loss) loss_sum += l;
  record.mean_train_loss = loss_sum / static_cast<double>(record.train_loss.size());

  if (setup_.fed.mode != personal::Mode::LocalOnly) global_ = aggregate(uploads);
  require_no_critic(global_, "global tree");
  const auto keys = global_.keys();
  record.global_layers = LayerSet(keys.begin(), keys.end());

  if (record.round % setup_.fed.eval_every == 0 || record.round == setup_.fed.rounds) record.eval = evaluate();
  record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

void Federation::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_tree(dir / "global.bin", global_);
  for (const auto& c : clients_) {
    save_tree(dir / ("client_" + std::to_string(c->state.client_id) + ".bin"), c->state.local);
  }
}

ExperimentHistory run_experiment(const ExperimentSetup& setup, std::uint64_t seed,
                                 const std::filesystem::path& checkpoint_dir, const RecordSink& sink) {
  Federation fed(setup, seed);
  const FedConfig& cfg = fed.setup().fed;
  ExperimentHistory history;
  RoundRecord initial;
  initial.round = 0;
  initial.eval = fed.evaluate();
  const auto keys = fed.global().keys();
  initial.global_layers = LayerSet(keys.begin(), keys.end());
  if (sink) sink(initial);
  history.records.push_back(std::move(initial));
  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundRecord rec = fed.run_round();
    if (!history.rounds_to_target && rec.mean_train_loss <= cfg.target_loss) history.rounds_to_target = rec.round;
    if (cfg.checkpoint_every > 0 && !checkpoint_dir.empty() && r % cfg.checkpoint_every == 0) {
      fed.save_checkpoint(checkpoint_dir / ("round_" + std::to_string(r)));
    }
    const bool stop = cfg.stop_at_target && history.rounds_to_target.has_value();
    if (stop && !rec.eval) rec.eval = fed.evaluate();
    if (sink) sink(rec);
    history.records.push_back(std::move(rec));
    if (stop) break;
  }
  return history;
}

std::optional<int> rounds_to_target(std::span<const double> losses, double target) {
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (losses[i] <= target) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

}  // namespace pfednav::fed
