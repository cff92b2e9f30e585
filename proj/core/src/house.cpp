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

#include "pfednav/house.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <tuple>

#include "pfednav/errors.hpp"
#include "pfednav/rng.hpp"

namespace pfednav::env {

double distance(Vec2 a, Vec2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

int heading_bucket(Vec2 heading) noexcept {
  constexpr double kPi = 3.14159265358979323846;
  double angle = std::atan2(heading.y, heading.x);  // (-pi, pi]
  if (angle < 0) angle += 2 * kPi;
  const int b = static_cast<int>(std::floor((angle + kPi / kHeadingBuckets) / (2 * kPi / kHeadingBuckets)));
  return b % kHeadingBuckets;
}

HouseGraph::HouseGraph(int id, double extent, HouseParams params, std::vector<HouseNode> nodes,
                       std::vector<Edge> edges)
    : id_(id), extent_(extent), params_(params), nodes_(std::move(nodes)), out_(nodes_.size()) {
  for (const Edge& e : edges) {
    if (e.from < 0 || e.to < 0 || e.from >= size() || e.to >= size() || e.from == e.to) {
      throw Error("house: invalid edge");
    }
    out_[static_cast<std::size_t>(e.from)].push_back(e);
  }
  for (auto& list : out_) {
    std::sort(list.begin(), list.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
  }
}

std::size_t HouseGraph::edge_count() const noexcept {
  std::size_t n = 0;
  for (const auto& list : out_) n += list.size();
  return n;
}

double HouseGraph::mean_out_degree() const noexcept {
  return nodes_.empty() ? 0.0 : static_cast<double>(edge_count()) / static_cast<double>(nodes_.size());
}

double HouseGraph::mean_edge_length() const noexcept {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& list : out_) {
    for (const Edge& e : list) {
      total += e.length;
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

bool HouseGraph::has_edge(int from, int to) const { return candidate_index(from, to) > 0; }

int HouseGraph::candidate_index(int from, int to) const {
  const auto& list = out_edges(from);
  for (std::size_t k = 0; k < list.size(); ++k) {
    if (list[k].to == to) return static_cast<int>(k) + 1;
  }
  return -1;
}

int HouseGraph::candidate_target(int node, int k) const {
  if (k == 0) return node;
  return out_edges(node).at(static_cast<std::size_t>(k - 1)).to;
}

HouseGraph generate_house(std::uint64_t seed, int scale, double branching, const HouseParams& params,
                          int house_id) {
  if (scale < 4) throw InfeasibleError("generate_house: scale must be >= 4, got " + std::to_string(scale));
  if (branching < 1.0) throw InfeasibleError("generate_house: branching must be >= 1");
  if (branching > scale - 1) {
    throw InfeasibleError("generate_house: branching " + std::to_string(branching) +
                          " exceeds scale - 1 = " + std::to_string(scale - 1));
  }
  if (params.room_types < 1 || params.noise_dim < 0) throw Error("generate_house: bad house params");

  Rng rng = make_rng(seed, {0x686f757365ULL});
  const auto n = static_cast<std::size_t>(scale);
  const double extent = std::sqrt(static_cast<double>(scale));
  const double min_sep = 0.45;

  std::vector<HouseNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 p;
    for (int attempt = 0; attempt < 200; ++attempt) {
      p = {uniform(rng, 0.0, extent), uniform(rng, 0.0, extent)};
      bool ok = true;
      for (std::size_t j = 0; j < i && ok; ++j) ok = distance(p, nodes[j].pos) >= min_sep;
      if (ok) break;
    }
    nodes[i].id = static_cast<int>(i);
    nodes[i].pos = p;
    nodes[i].room = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(params.room_types)));
  }
  for (auto& node : nodes) {
    node.obs.assign(static_cast<std::size_t>(params.room_types + 2 + params.noise_dim), 0.0);
    node.obs[static_cast<std::size_t>(node.room)] = 1.0;
    node.obs[static_cast<std::size_t>(params.room_types)] = node.pos.x / extent;
    node.obs[static_cast<std::size_t>(params.room_types + 1)] = node.pos.y / extent;
    for (int k = 0; k < params.noise_dim; ++k) {
      node.obs[static_cast<std::size_t>(params.room_types + 2 + k)] = params.noise_scale * standard_normal(rng);
    }
  }

  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  std::vector<std::pair<std::size_t, std::size_t>> undirected;
  auto connect = [&](std::size_t a, std::size_t b) {
    adj[a][b] = adj[b][a] = true;
    undirected.emplace_back(std::min(a, b), std::max(a, b));
  };
  // Spanning tree: each node joins its nearest predecessor.
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < i; ++j) {
      const double d = distance(nodes[i].pos, nodes[j].pos);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    connect(i, best);
  }
  const std::size_t max_edges = n * (n - 1) / 2;
  const auto target = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * branching / 2.0)), n - 1, max_edges);
  std::vector<std::tuple<double, std::size_t, std::size_t>> extra;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (!adj[a][b]) extra.emplace_back(distance(nodes[a].pos, nodes[b].pos), a, b);
    }
  }
  std::sort(extra.begin(), extra.end());
  for (const auto& [d, a, b] : extra) {
    if (undirected.size() >= target) break;
    connect(a, b);
  }

  std::vector<Edge> edges;
  edges.reserve(undirected.size() * 2);
  for (const auto& [a, b] : undirected) {
    const double len = distance(nodes[a].pos, nodes[b].pos);
    const Vec2 h{(nodes[b].pos.x - nodes[a].pos.x) / len, (nodes[b].pos.y - nodes[a].pos.y) / len};
    edges.push_back({static_cast<int>(a), static_cast<int>(b), h, len});
    edges.push_back({static_cast<int>(b), static_cast<int>(a), Vec2{-h.x, -h.y}, len});
  }
  return HouseGraph(house_id, extent, params, std::move(nodes), std::move(edges));
}

GeodesicField geodesic_to(const HouseGraph& house, int goal) {
  const auto n = static_cast<std::size_t>(house.size());
  if (goal < 0 || goal >= house.size()) throw Error("geodesic_to: goal outside graph");
  std::vector<std::vector<std::pair<int, double>>> incoming(n);
  for (int u = 0; u < house.size(); ++u) {
    for (const Edge& e : house.out_edges(u)) incoming[static_cast<std::size_t>(e.to)].emplace_back(u, e.length);
  }
  GeodesicField field;
  field.goal = goal;
  field.dist.assign(n, std::numeric_limits<double>::infinity());
  field.next.assign(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  field.dist[static_cast<std::size_t>(goal)] = 0.0;
  heap.emplace(0.0, goal);
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > field.dist[static_cast<std::size_t>(v)]) continue;
    for (auto [u, len] : incoming[static_cast<std::size_t>(v)]) {
      const double nd = d + len;
      if (nd < field.dist[static_cast<std::size_t>(u)]) {
        field.dist[static_cast<std::size_t>(u)] = nd;
        heap.emplace(nd, u);
      }
    }
  }
  for (int u = 0; u < house.size(); ++u) {
    if (u == goal || !std::isfinite(field.dist[static_cast<std::size_t>(u)])) continue;
    const double du = field.dist[static_cast<std::size_t>(u)];
    const double tol = 1e-12 * std::max(1.0, du);
    for (const Edge& e : house.out_edges(u)) {  // sorted by target id
      if (std::abs(e.length + field.dist[static_cast<std::size_t>(e.to)] - du) <= tol) {
        field.next[static_cast<std::size_t>(u)] = e.to;
        break;
      }
    }
  }
  return field;
}

Path shortest_path(const HouseGraph& house, int from, int to) {
  if (from < 0 || from >= house.size()) throw Error("shortest_path: start outside graph");
  const GeodesicField field = geodesic_to(house, to);
  if (!std::isfinite(field.dist[static_cast<std::size_t>(from)])) {
    throw Error("shortest_path: node " + std::to_string(to) + " unreachable from " + std::to_string(from));
  }
  Path path;
  path.nodes.push_back(from);
  int cur = from;
  while (cur != to) {
    cur = field.next[static_cast<std::size_t>(cur)];
    if (cur < 0 || path.nodes.size() > static_cast<std::size_t>(house.size())) {
      throw Error("shortest_path: inconsistent geodesic field");
    }
    path.nodes.push_back(cur);
  }
  path.length = walk_length(house, path.nodes);
  return path;
}

double walk_length(const HouseGraph& house, const std::vector<int>& walk) {
  double total = 0.0;
  for (std::size_t i = 1; i < walk.size(); ++i) {
    if (walk[i] == walk[i - 1]) continue;
    const int k = house.candidate_index(walk[i - 1], walk[i]);
    if (k < 0) {
      throw Error("walk_length: " + std::to_string(walk[i - 1]) + " -> " + std::to_string(walk[i]) +
                  " is not an edge");
    }
    total += house.out_edges(walk[i - 1])[static_cast<std::size_t>(k - 1)].length;
  }
  return total;
}

Tensor observation(const HouseGraph& house, int node) {
  const auto& obs = house.node(node).obs;
  return Tensor({1, obs.size()}, obs);
}

Tensor candidate_features(const HouseGraph& house, int node) {
  const auto& edges = house.out_edges(node);
  const auto od = static_cast<std::size_t>(house.obs_dim());
  const std::size_t width = 3 + od;
  Tensor feats({edges.size() + 1, width}, 0.0);
  feats.at(0, 0) = 1.0;
  const auto& here = house.node(node).obs;
  for (std::size_t j = 0; j < od; ++j) feats.at(0, 3 + j) = here[j];
  for (std::size_t k = 0; k < edges.size(); ++k) {
    feats.at(k + 1, 1) = edges[k].heading.x;
    feats.at(k + 1, 2) = edges[k].heading.y;
    const auto& there = house.node(edges[k].to).obs;
    for (std::size_t j = 0; j < od; ++j) feats.at(k + 1, 3 + j) = there[j];
  }
  return feats;
}

}  // namespace pfednav::env
