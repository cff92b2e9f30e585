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

// Microbenchmarks of the hot paths: tape forward/backward, greedy rollout,
// one local training epoch, and one federation round.

#include <benchmark/benchmark.h>

#include "pfednav/agent.hpp"
#include "pfednav/dataset.hpp"
#include "pfednav/federation.hpp"
#include "pfednav/training.hpp"

namespace {

using namespace pfednav;

struct Fixture {
  fed::ExperimentSetup setup;
  env::ClientDataset data;
  std::vector<env::Episode> train;
  agent::HouseContext ctx;
  ParamTree params;

  explicit Fixture(fed::ExperimentSetup s)
      : setup(std::move(s)),
        data(env::generate_client_dataset(0, setup.data, 1)),
        train(data.train_episodes()),
        ctx(data.house),
        params(agent::init_params(setup.model, 2)) {}
};

fed::ExperimentSetup default_setup() {
  fed::ExperimentSetup s;
  s.data.episodes_per_client = 100;
  s.data.train_fraction = 0.4;
  s.resolve();
  return s;
}

Fixture& shared() {
  static Fixture f(default_setup());
  return f;
}

void BM_TapeMatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a({n, n}, 0.5), b({n, n}, 0.25);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var x = tape.variable(a);
    ad::Var y = tape.variable(b);
    ad::Var loss = tape.sum(tape.tanh(tape.matmul(x, y)));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad_span(x).data());
  }
}
BENCHMARK(BM_TapeMatmulBackward)->Arg(16)->Arg(32)->Arg(64);

void BM_ImitationLoss(benchmark::State& state) {
  Fixture& f = shared();
  const std::vector<env::Episode> batch(f.train.begin(), f.train.begin() + state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(agent::imitation_loss(f.params, batch, f.ctx).loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ImitationLoss)->Arg(1)->Arg(8);

void BM_GreedyRollout(benchmark::State& state) {
  Fixture& f = shared();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto r = agent::rollout(f.params, f.train[i++ % f.train.size()], f.ctx, agent::RolloutMode::Greedy, nullptr,
                                  f.setup.model.max_steps);
    benchmark::DoNotOptimize(r.trajectory.data());
  }
}
BENCHMARK(BM_GreedyRollout);

void BM_LocalTrainEpoch(benchmark::State& state) {
  Fixture& f = shared();
  agent::TrainConfig tc = f.setup.train;
  tc.epochs = 1;
  for (auto _ : state) {
    Rng rng(3);
    benchmark::DoNotOptimize(agent::local_train(f.params, f.train, f.ctx, tc, rng).epoch_loss.data());
  }
}
BENCHMARK(BM_LocalTrainEpoch)->Unit(benchmark::kMillisecond);

void BM_FederationRound(benchmark::State& state) {
  fed::ExperimentSetup s = default_setup();
  s.fed.mode = static_cast<personal::Mode>(state.range(0));
  s.fed.eval_every = 1000;
  fed::Federation fed(s, 4);
  for (auto _ : state) benchmark::DoNotOptimize(fed.run_round().mean_train_loss);
  state.SetLabel(personal::mode_name(s.fed.mode));
}
BENCHMARK(BM_FederationRound)
    ->Arg(static_cast<int>(personal::Mode::FedAvg))
    ->Arg(static_cast<int>(personal::Mode::PFedNavi))
    ->Unit(benchmark::kMillisecond)
    ->Iterations(5);

}  // namespace

BENCHMARK_MAIN();
