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

#include "pfednav/tensor.hpp"

namespace pfednav::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(Vec2 a, Vec2 b) noexcept;

/// Eight compass buckets; bucket 0 is centered on +x, counting counterclockwise.
inline constexpr int kHeadingBuckets = 8;
int heading_bucket(Vec2 heading) noexcept;

struct Edge {
  int from = 0;
  int to = 0;
  Vec2 heading;  // unit vector from -> to
  double length = 0.0;
};

struct HouseNode {
  int id = 0;
  Vec2 pos;       // abstract meters
  int room = 0;   // room-type id
  std::vector<double> obs;  // one-hot room | pos scaled to [0,1]^2 | noise
};

struct HouseParams {
  int room_types = 6;
  int noise_dim = 4;
  double noise_scale = 0.1;
};

/// A client's navigation graph. Outgoing edges of each node are sorted by
/// target id; candidate 0 at every node is STOP, candidate k>0 is edge k-1.
class HouseGraph {
 public:
  HouseGraph() = default;
  HouseGraph(int id, double extent, HouseParams params, std::vector<HouseNode> nodes,
             std::vector<Edge> edges);

  int id() const noexcept { return id_; }
  double extent() const noexcept { return extent_; }
  const HouseParams& params() const noexcept { return params_; }
  int size() const noexcept { return static_cast<int>(nodes_.size()); }
  const HouseNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  const std::vector<HouseNode>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& out_edges(int i) const { return out_.at(static_cast<std::size_t>(i)); }
  std::size_t edge_count() const noexcept;
  double mean_out_degree() const noexcept;
  double mean_edge_length() const noexcept;

  bool has_edge(int from, int to) const;
  /// Candidate index (>= 1) of the edge from -> to, or -1.
  int candidate_index(int from, int to) const;
  /// Number of candidates at a node (STOP + out edges).
  int candidate_count(int node) const { return static_cast<int>(out_edges(node).size()) + 1; }
  /// Node reached by taking candidate k at node (k == 0 stays).
  int candidate_target(int node, int k) const;
  double distance(int a, int b) const { return env::distance(node(a).pos, node(b).pos); }
  int obs_dim() const noexcept { return params_.room_types + 2 + params_.noise_dim; }

 private:
  int id_ = 0;
  double extent_ = 1.0;
  HouseParams params_;
  std::vector<HouseNode> nodes_;
  std::vector<std::vector<Edge>> out_;
};

/// Random geometric house: `scale` nodes in a square of side sqrt(scale) with
/// a nearest-neighbor spanning tree plus shortest extra edges until the mean
/// out-degree reaches `branching` (edges are bidirectional). Deterministic in seed.
/// Throws InfeasibleError for scale < 4, branching < 1, or branching > scale - 1.
HouseGraph generate_house(std::uint64_t seed, int scale, double branching,
                          const HouseParams& params = {}, int house_id = 0);

/// Distances to a goal and the deterministic next hop of a shortest path.
struct GeodesicField {
  int goal = 0;
  std::vector<double> dist;  // +inf when unreachable
  std::vector<int> next;     // -1 at goal or when unreachable
};

GeodesicField geodesic_to(const HouseGraph& house, int goal);

struct Path {
  std::vector<int> nodes;
  double length = 0.0;
};

/// Minimal total-Euclidean-length path; ties prefer the smallest next node id.
/// Throws Error when `to` is unreachable from `from`.
Path shortest_path(const HouseGraph& house, int from, int to);

/// Sum of edge lengths along a walk; throws when a hop is not an edge.
double walk_length(const HouseGraph& house, const std::vector<int>& walk);

/// Observation of a node as a 1 x obs_dim row.
Tensor observation(const HouseGraph& house, int node);

/// Candidate feature rows at a node, shape (candidates x (3 + obs_dim)):
/// [is_stop, heading.x, heading.y, observation of the reached node].
Tensor candidate_features(const HouseGraph& house, int node);

inline int candidate_dim(int obs_dim) noexcept { return 3 + obs_dim; }

}  // namespace pfednav::env
