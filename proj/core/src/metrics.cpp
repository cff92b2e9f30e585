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

#include "pfednav/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "pfednav/errors.hpp"

namespace pfednav::metrics {
namespace {

void check_walk(std::span<const int> walk, const env::HouseGraph& house, const char* what) {
  if (walk.empty()) throw Error(std::string("evaluate_episode: empty ") + what + " sequence");
  for (std::size_t i = 0; i < walk.size(); ++i) {
    if (walk[i] < 0 || walk[i] >= house.size()) {
      throw Error(std::string("evaluate_episode: ") + what + " node " + std::to_string(walk[i]) + " not in house");
    }
    if (i > 0 && !house.has_edge(walk[i - 1], walk[i])) {
      throw Error(std::string("evaluate_episode: ") + what + " step " + std::to_string(walk[i - 1]) + "->" +
                  std::to_string(walk[i]) + " is not an edge");
    }
  }
}

constexpr std::array<double MetricSummary::*, 6> kFields = {&MetricSummary::sr,  &MetricSummary::spl,
                                                          &MetricSummary::osr, &MetricSummary::ne,
                                                          &MetricSummary::cls, &MetricSummary::ndtw};

}  // namespace

double dtw(std::span<const int> a, std::span<const int> b, const env::HouseGraph& house) {
  if (a.empty() || b.empty()) throw Error("dtw: empty sequence");
  const std::size_t n = a.size(), m = b.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= m; ++j) {
      const double cost = house.distance(a[i - 1], b[j - 1]);
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

EpisodeMetrics evaluate_episode(std::span<const int> predicted, std::span<const int> reference, int goal,
                                const env::HouseGraph& house, double success_radius) {
  check_walk(predicted, house, "predicted");
  check_walk(reference, house, "reference");
  if (goal < 0 || goal >= house.size()) throw Error("evaluate_episode: goal not in house");
  if (!(success_radius > 0.0)) throw Error("evaluate_episode: success_radius must be > 0");

  EpisodeMetrics m;
  m.ne = house.distance(predicted.back(), goal);
  m.success = m.ne <= success_radius;
  double nearest = std::numeric_limits<double>::infinity();
  for (int v : predicted) nearest = std::min(nearest, house.distance(v, goal));
  m.oracle_success = nearest <= success_radius;

  const std::vector<int> pred(predicted.begin(), predicted.end());
  const std::vector<int> ref(reference.begin(), reference.end());
  const double p = env::walk_length(house, pred);
  const double l = env::shortest_path(house, reference.front(), goal).length;
  if (m.success) m.spl = std::max(p, l) > 0.0 ? l / std::max(p, l) : 1.0;

  const double scale = static_cast<double>(reference.size()) * success_radius;
  m.ndtw = std::exp(-dtw(predicted, reference, house) / scale);

  double coverage = 0.0;
  for (int r : reference) {
    double d = std::numeric_limits<double>::infinity();
    for (int q : predicted) d = std::min(d, house.distance(r, q));
    coverage += std::exp(-d / success_radius);
  }
  coverage /= static_cast<double>(reference.size());
  const double expected = coverage * env::walk_length(house, ref);
  const double denom = expected + std::abs(expected - p);
  const double length_score = denom > 0.0 ? expected / denom : 1.0;
  m.cls = coverage * length_score;
  return m;
}

MetricSummary summarize(std::span<const EpisodeMetrics> episodes) {
  if (episodes.empty()) throw Error("aggregate_metrics: no episodes");
  MetricSummary s;
  for (const auto& e : episodes) {
    s.sr += e.success ? 1.0 : 0.0;
    s.spl += e.spl;
    s.osr += e.oracle_success ? 1.0 : 0.0;
    s.ne += e.ne;
    s.cls += e.cls;
    s.ndtw += e.ndtw;
  }
  const double n = static_cast<double>(episodes.size());
  s.sr = 100.0 * s.sr / n;
  s.spl = 100.0 * s.spl / n;
  s.osr = 100.0 * s.osr / n;
  s.ne /= n;
  s.cls = 100.0 * s.cls / n;
  s.ndtw = 100.0 * s.ndtw / n;
  return s;
}

void cross_client(std::span<const MetricSummary> clients, MetricSummary& mean, MetricSummary& stddev) {
  if (clients.empty()) throw Error("aggregate_metrics: no clients");
  const double n = static_cast<double>(clients.size());
  mean = {};
  stddev = {};
  for (auto field : kFields) {
    double sum = 0.0;
    for (const auto& c : clients) sum += c.*field;
    const double mu = sum / n;
    double sq = 0.0;
    for (const auto& c : clients) sq += (c.*field - mu) * (c.*field - mu);
    mean.*field = mu;
    stddev.*field = std::sqrt(sq / n);
  }
}

MetricBundle aggregate_metrics(std::span<const ClientEpisodes> clients) {
  if (clients.empty()) throw Error("aggregate_metrics: no clients");
  MetricBundle bundle;
  std::vector<MetricSummary> means;
  for (const auto& c : clients) {
    ClientMetrics cm{c.client_id, c.episodes, summarize(c.episodes)};
    means.push_back(cm.mean);
    bundle.clients.push_back(std::move(cm));
  }
  cross_client(means, bundle.mean, bundle.stddev);
  return bundle;
}

}  // namespace pfednav::metrics
