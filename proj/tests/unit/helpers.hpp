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
#include <vector>

#include "pfednav/agent.hpp"
#include "pfednav/dataset.hpp"
#include "pfednav/federation.hpp"
#include "pfednav/param_tree.hpp"
#include "pfednav/rng.hpp"
#include "pfednav/tensor.hpp"

namespace testing {

inline pfednav::Tensor random_tensor(pfednav::Tensor::Shape shape, pfednav::Rng& rng, double lo = -1.0,
                                     double hi = 1.0) {
  pfednav::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = pfednav::uniform(rng, lo, hi);
  return t;
}

/// Same keys and shapes as `like`, fresh uniform values.
inline pfednav::ParamTree random_like(const pfednav::ParamTree& like, pfednav::Rng& rng) {
  pfednav::ParamTree out;
  for (const auto& [key, layer] : like.layers()) {
    pfednav::Layer l;
    for (const auto& [name, t] : layer) l.emplace(name, random_tensor(t.shape(), rng));
    out.set_layer(key, std::move(l));
  }
  return out;
}

/// Small trees with varied shapes across every layer key.
inline pfednav::ParamTree random_tree(pfednav::Rng& rng, bool with_critic = true) {
  pfednav::ParamTree out;
  for (pfednav::LayerKey key : pfednav::kAllLayers) {
    if (!with_critic && key == pfednav::LayerKey::Critic) continue;
    pfednav::Layer l;
    const auto r = 1 + pfednav::uniform_index(rng, 4);
    const auto c = 1 + pfednav::uniform_index(rng, 4);
    l.emplace("w", random_tensor({r, c}, rng));
    l.emplace("b", random_tensor({c}, rng));
    out.set_layer(key, std::move(l));
  }
  return out;
}

/// A resolved setup with a small model matched to the default data layout.
inline pfednav::fed::ExperimentSetup small_setup() {
  pfednav::fed::ExperimentSetup s;
  s.fed.num_clients = 4;
  s.fed.rounds = 2;
  s.data.episodes_per_client = 10;
  s.data.scale_min = 8;
  s.data.scale_max = 12;
  s.model.embed_dim = 6;
  s.model.enc_hidden = 5;
  s.model.dec_hidden = 5;
  s.model.action_embed_dim = 4;
  s.model.critic_hidden = 3;
  s.train.epochs = 1;
  s.train.lr = 0.1;
  s.resolve();
  return s;
}

struct ClientFixture {
  pfednav::fed::ExperimentSetup setup;
  pfednav::env::ClientDataset data;
  std::vector<pfednav::env::Episode> train;
  pfednav::agent::HouseContext ctx;
  pfednav::ParamTree params;

  ClientFixture(int client_id, std::uint64_t seed, pfednav::fed::ExperimentSetup s = small_setup())
      : setup(s),
        data(pfednav::env::generate_client_dataset(client_id, setup.data, seed)),
        train(data.train_episodes()),
        ctx(data.house),
        params(pfednav::agent::init_params(setup.model, seed + 100)) {}
  ClientFixture(const ClientFixture&) = delete;
};

}  // namespace testing
