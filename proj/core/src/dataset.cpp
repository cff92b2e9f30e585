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

#include "pfednav/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "pfednav/errors.hpp"

namespace pfednav::env {

bool InstructionStyle::is_identity() const noexcept {
  for (std::size_t i = 0; i < synonym.size(); ++i) {
    if (synonym[i] != static_cast<int>(i)) return false;
  }
  return true;
}

InstructionStyle identity_style(int client_id, const VocabLayout& layout, int vocab_size, double verbosity) {
  if (vocab_size < layout.canonical_size()) throw Error("identity_style: vocab_size below canonical size");
  InstructionStyle s;
  s.client_id = client_id;
  s.synonym.resize(static_cast<std::size_t>(layout.canonical_size()));
  std::iota(s.synonym.begin(), s.synonym.end(), 0);
  s.verbosity = verbosity;
  s.vocab_size = vocab_size;
  return s;
}

Episode generate_episode(const HouseGraph& house, const InstructionStyle& style, const VocabLayout& layout,
                         Rng& rng) {
  struct Pair {
    int start;
    int goal;
  };
  std::vector<Pair> pairs;
  std::vector<GeodesicField> fields;
  fields.reserve(static_cast<std::size_t>(house.size()));
  for (int g = 0; g < house.size(); ++g) {
    fields.push_back(geodesic_to(house, g));
    const GeodesicField& f = fields.back();
    for (int s = 0; s < house.size(); ++s) {
      if (s == g || f.next[static_cast<std::size_t>(s)] < 0) continue;
      int hops = 0;
      for (int cur = s; cur != g && hops <= kMaxHops; cur = f.next[static_cast<std::size_t>(cur)]) ++hops;
      if (hops >= kMinHops && hops <= kMaxHops) pairs.push_back({s, g});
    }
  }
  if (pairs.empty()) throw InfeasibleError("generate_episode: house has no start/goal pair with 2-6 hops");
  const Pair pick = pairs[uniform_index(rng, pairs.size())];

  Episode ep;
  ep.goal = pick.goal;
  ep.house_id = house.id();
  const GeodesicField& f = fields[static_cast<std::size_t>(pick.goal)];
  ep.path.push_back(pick.start);
  for (int cur = pick.start; cur != pick.goal;) {
    cur = f.next[static_cast<std::size_t>(cur)];
    ep.path.push_back(cur);
  }
  for (std::size_t i = 1; i < ep.path.size(); ++i) {
    const int from = ep.path[i - 1];
    const int to = ep.path[i];
    const Edge& e = house.out_edges(from)[static_cast<std::size_t>(house.candidate_index(from, to) - 1)];
    ep.instruction.push_back(style.map(layout.heading_token(heading_bucket(e.heading))));
    ep.instruction.push_back(style.map(layout.room_token(house.node(to).room)));
    const int fillers = poisson(rng, style.verbosity);
    for (int k = 0; k < fillers; ++k) {
      const int f_id = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(layout.filler_tokens)));
      ep.instruction.push_back(style.map(layout.filler_token(f_id)));
    }
  }
  ep.instruction.push_back(style.map(VocabLayout::kStop));
  return ep;
}

std::vector<Episode> ClientDataset::train_episodes() const {
  std::vector<Episode> out;
  out.reserve(train.size());
  for (auto i : train) out.push_back(episodes[i]);
  return out;
}

std::vector<Episode> ClientDataset::eval_episodes() const {
  std::vector<Episode> out;
  out.reserve(eval.size());
  for (auto i : eval) out.push_back(episodes[i]);
  return out;
}

namespace {

InstructionStyle draw_style(int client_id, const HeterogeneityConfig& config, Rng& rng) {
  const VocabLayout layout = config.layout();
  const double verbosity = uniform(rng, config.verbosity_min, config.verbosity_max);
  InstructionStyle style = identity_style(client_id, layout, config.vocab_size, verbosity);
  if (config.rotate_headings) {
    const int rot = static_cast<int>(uniform_index(rng, kHeadingBuckets));
    for (int b = 0; b < kHeadingBuckets; ++b) {
      style.synonym[static_cast<std::size_t>(layout.heading_token(b))] =
          layout.heading_token((b + rot) % kHeadingBuckets);
    }
  }
  if (config.permute_rooms) {
    std::vector<int> perm(static_cast<std::size_t>(layout.room_types));
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    for (int r = 0; r < layout.room_types; ++r) {
      style.synonym[static_cast<std::size_t>(layout.room_token(r))] = layout.room_token(perm[static_cast<std::size_t>(r)]);
    }
  }
  if (config.permute_fillers) {
    // Fillers come from the spare id range, so each client has its own.
    std::vector<int> pool(static_cast<std::size_t>(config.vocab_size - layout.filler_token(0)));
    std::iota(pool.begin(), pool.end(), layout.filler_token(0));
    shuffle(pool.begin(), pool.end(), rng);
    for (int f = 0; f < layout.filler_tokens; ++f) {
      style.synonym[static_cast<std::size_t>(layout.filler_token(f))] = pool[static_cast<std::size_t>(f)];
    }
  }
  return style;
}

}  // namespace

ClientDataset generate_client_dataset(int client_id, const HeterogeneityConfig& config, std::uint64_t seed) {
  if (config.episodes_per_client < 2) {
    throw Error("generate_client_dataset: need at least 2 episodes, got " +
                std::to_string(config.episodes_per_client));
  }
  const VocabLayout layout = config.layout();
  if (config.vocab_size < layout.canonical_size()) {
    throw Error("generate_client_dataset: vocab_size " + std::to_string(config.vocab_size) +
                " below canonical size " + std::to_string(layout.canonical_size()));
  }
  const auto total = static_cast<std::size_t>(config.episodes_per_client);
  const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(total)));
  if (n_train < 1 || n_train >= total) throw Error("generate_client_dataset: split leaves an empty side");

  ClientDataset ds;
  ds.client_id = client_id;
  const auto cid = static_cast<std::uint64_t>(client_id);
  if (config.heterogeneous) {
    Rng draw = make_rng(seed, {0x636c69656e74ULL, cid});
    const int scale = config.scale_min +
        static_cast<int>(uniform_index(draw, static_cast<std::uint64_t>(config.scale_max - config.scale_min + 1)));
    const double branching = uniform(draw, config.branching_min, config.branching_max);
    ds.house = generate_house(derive_seed(seed, {0x686f757365ULL, cid}), scale, branching, config.house, client_id);
    ds.style = draw_style(client_id, config, draw);
  } else {
    ds.house = generate_house(derive_seed(seed, {0x686f757365ULL, 0}), config.scale_min, config.branching_min,
                              config.house, 0);
    ds.style = identity_style(client_id, layout, config.vocab_size, config.verbosity_min);
  }

  Rng episodes = make_rng(seed, {0x657069736f6465ULL, config.heterogeneous ? cid : 0});
  ds.episodes.reserve(total);
  for (std::size_t i = 0; i < total; ++i) ds.episodes.push_back(generate_episode(ds.house, ds.style, layout, episodes));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), episodes);
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.eval.begin(), ds.eval.end());
  return ds;
}

namespace {

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

void dump_dataset(std::ostream& out, const ClientDataset& dataset) {
  std::vector<bool> is_train(dataset.episodes.size(), false);
  for (auto i : dataset.train) is_train[i] = true;
  for (std::size_t i = 0; i < dataset.episodes.size(); ++i) {
    const Episode& ep = dataset.episodes[i];
    out << "episode " << i << " house=" << ep.house_id << " split=" << (is_train[i] ? "train" : "eval")
        << " goal=" << ep.goal << " tokens=" << join(ep.instruction) << " path=" << join(ep.path) << '\n';
  }
}

DatasetRecords load_dataset(std::istream& in) {
  DatasetRecords records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    std::size_t index = 0;
    ls >> tag >> index;
    if (tag != "episode" || index != records.episodes.size()) {
      throw Error("load_dataset: malformed record at line " + std::to_string(line_no));
    }
    Episode ep;
    bool train = false;
    std::string field;
    int seen = 0;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw Error("load_dataset: bad field at line " + std::to_string(line_no));
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "house") ep.house_id = std::stoi(value);
      else if (key == "split") train = value == "train";
      else if (key == "goal") ep.goal = std::stoi(value);
      else if (key == "tokens") ep.instruction = split_ints(value);
      else if (key == "path") ep.path = split_ints(value);
      else throw Error("load_dataset: unknown field " + key);
      ++seen;
    }
    if (seen != 5 || ep.path.empty() || ep.instruction.empty()) {
      throw Error("load_dataset: incomplete record at line " + std::to_string(line_no));
    }
    (train ? records.train : records.eval).push_back(records.episodes.size());
    records.episodes.push_back(std::move(ep));
  }
  return records;
}

}  // namespace pfednav::env
