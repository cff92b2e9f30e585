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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "pfednav/agent.hpp"
#include "pfednav/dataset.hpp"
#include "pfednav/metrics.hpp"
#include "pfednav/personalization.hpp"
#include "pfednav/training.hpp"

namespace pfednav::fed {

struct FedConfig {
  int num_clients = 10;
  double participation = 0.2;
  int rounds = 150;
  personal::Mode mode = personal::Mode::PFedNavi;
  double target_loss = 1.0;
  int eval_every = 5;
  int checkpoint_every = 0;  // 0 disables
  bool stop_at_target = false;  // end the run once the target loss is reached

  /// Clients drawn per round: ceil(participation * num_clients).
  int participants() const;
  void validate() const;
};

/// Everything a single experiment needs.
struct ExperimentSetup {
  FedConfig fed;
  agent::ModelConfig model;
  personal::SelectionConfig selection;
  agent::TrainConfig train;
  env::HeterogeneityConfig data;
  double success_radius = 0.0;  // 0 selects 0.25 x mean edge length per house

  /// Fills the data-dependent model dimensions (vocabulary, observation and
  /// candidate widths) from the data config.
  void resolve();
  void validate() const;
};

/// Uniform draw without replacement, returned in increasing id order.
std::vector<int> sample_clients(int num_clients, double participation, Rng& rng);

struct Upload {
  int client_id = 0;
  ParamTree tree;
  std::size_t dataset_size = 0;
};

/// Dataset-size weighted average, inputs taken in client-id order. Throws
/// ProtocolError when an upload carries the Critic.
ParamTree aggregate(std::span<const Upload> uploads);

struct RoundRecord {
  int round = 0;
  std::vector<int> sampled;
  std::map<int, double> train_loss;  // per participating client
  double mean_train_loss = 0.0;
  std::optional<metrics::MetricBundle> eval;
  std::vector<personal::RoundDiagnostics> diagnostics;
  std::map<int, LayerSet> upload_layers;  // keys of every upload this round
  LayerSet global_layers;                 // keys of the global tree after the round
  double wall_seconds = 0.0;              // informational, never serialized
};

struct Client {
  env::ClientDataset data;
  std::vector<env::Episode> train_set;
  std::vector<env::Episode> eval_set;
  std::unique_ptr<agent::HouseContext> ctx;
  personal::ClientState state;
  bool trained = false;
};

/// One run of one mode under one seed.
class Federation {
 public:
  Federation(const ExperimentSetup& setup, std::uint64_t seed);

  /// Broadcast, client rounds in id order, aggregation (skipped for
  /// local_only) and an evaluation when the round index is a multiple of
  /// eval_every or is the final round.
  RoundRecord run_round();
  /// Each client's evaluation model on its own eval split.
  metrics::MetricBundle evaluate() const;
  /// Model a client is evaluated with in the current mode.
  ParamTree evaluation_model(int client_id) const;
  void save_checkpoint(const std::filesystem::path& dir) const;

  const ParamTree& global() const noexcept { return global_; }
  int round() const noexcept { return round_; }
  const std::vector<std::unique_ptr<Client>>& clients() const noexcept { return clients_; }
  const ExperimentSetup& setup() const noexcept { return setup_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  ExperimentSetup setup_;
  std::uint64_t seed_;
  ParamTree global_;
  ParamTree initial_critic_tree_;
  std::vector<std::unique_ptr<Client>> clients_;
  int round_ = 0;
};

struct ExperimentHistory {
  std::vector<RoundRecord> records;  // records[0] is the initial evaluation (round 0)
  std::optional<int> rounds_to_target;
};

/// Called after each record, in round order.
using RecordSink = std::function<void(const RoundRecord&)>;

/// Runs `rounds` rounds after an initial evaluation, writing checkpoints to
/// checkpoint_dir when configured.
ExperimentHistory run_experiment(const ExperimentSetup& setup, std::uint64_t seed,
                                 const std::filesystem::path& checkpoint_dir = {}, const RecordSink& sink = {});

/// First round (1-based position of `losses`) with loss <= target; none when never reached.
std::optional<int> rounds_to_target(std::span<const double> losses, double target);

}  // namespace pfednav::fed
