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
#include <iosfwd>
#include <string>
#include <vector>

#include "pfednav/house.hpp"
#include "pfednav/rng.hpp"

namespace pfednav::env {

/// Canonical token ids: STOP, the eight heading buckets, one token per room
/// type, then filler tokens. Client vocabularies map these through a
/// synonym table into [0, vocab_size).
struct VocabLayout {
  int room_types = 6;
  int filler_tokens = 6;

  static constexpr int kStop = 0;
  static constexpr int kTokensPerHop = 2;  // heading token, room token
  int heading_token(int bucket) const noexcept { return 1 + bucket; }
  int room_token(int room) const noexcept { return 1 + kHeadingBuckets + room; }
  int filler_token(int f) const noexcept { return 1 + kHeadingBuckets + room_types + f; }
  int canonical_size() const noexcept { return 1 + kHeadingBuckets + room_types + filler_tokens; }
};

struct InstructionStyle {
  int client_id = 0;
  std::vector<int> synonym;  // canonical id -> client token id (injective)
  double verbosity = 0.0;    // expected filler tokens per hop
  int vocab_size = 0;

  int map(int canonical) const { return synonym.at(static_cast<std::size_t>(canonical)); }
  bool is_identity() const noexcept;
};

InstructionStyle identity_style(int client_id, const VocabLayout& layout, int vocab_size,
                                double verbosity = 0.0);

struct Episode {
  std::vector<int> instruction;  // client token ids
  std::vector<int> path;         // reference node path, start first
  int goal = 0;
  int house_id = 0;

  int start() const { return path.front(); }
  int hops() const { return static_cast<int>(path.size()) - 1; }
};

inline constexpr int kMinHops = 2;
inline constexpr int kMaxHops = 6;

/// Samples a start/goal pair whose shortest path has hop count in
/// [kMinHops, kMaxHops], and describes each hop as "heading, room" plus
/// Poisson(verbosity) fillers, ending with STOP.
Episode generate_episode(const HouseGraph& house, const InstructionStyle& style, const VocabLayout& layout,
                         Rng& rng);

/// Heterogeneity axes across clients. With `heterogeneous = false` every
/// client receives the identical house, identity style, and verbosity_min.
struct HeterogeneityConfig {
  bool heterogeneous = true;
  int episodes_per_client = 50;
  double train_fraction = 0.8;
  int scale_min = 12;
  int scale_max = 30;
  double branching_min = 2.0;
  double branching_max = 4.0;
  double verbosity_min = 0.0;
  double verbosity_max = 2.0;
  bool rotate_headings = true;
  bool permute_rooms = true;
  bool permute_fillers = true;
  int vocab_size = 40;
  HouseParams house;
  int filler_tokens = 6;

  VocabLayout layout() const { return VocabLayout{house.room_types, filler_tokens}; }
};

struct ClientDataset {
  int client_id = 0;
  HouseGraph house;
  InstructionStyle style;
  std::vector<Episode> episodes;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;

  std::size_t train_size() const noexcept { return train.size(); }
  std::vector<Episode> train_episodes() const;
  std::vector<Episode> eval_episodes() const;
};

/// Pure function of (client_id, config, seed). Throws Error when fewer than
/// two episodes are requested or the split leaves either side empty.
ClientDataset generate_client_dataset(int client_id, const HeterogeneityConfig& config, std::uint64_t seed);

/// One line per episode:
///   episode <index> house=<id> split=<train|eval> goal=<g> tokens=<a,b,..> path=<u,v,..>
void dump_dataset(std::ostream& out, const ClientDataset& dataset);

struct DatasetRecords {
  std::vector<Episode> episodes;
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};
DatasetRecords load_dataset(std::istream& in);

}  // namespace pfednav::env
