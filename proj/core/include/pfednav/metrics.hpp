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

#include <span>
#include <vector>

#include "pfednav/house.hpp"

namespace pfednav::metrics {

struct EpisodeMetrics {
  bool success = false;
  double spl = 0.0;
  bool oracle_success = false;
  double ne = 0.0;
  double cls = 0.0;
  double ndtw = 0.0;
};

/// Dynamic time warping cost under Euclidean node distance.
double dtw(std::span<const int> a, std::span<const int> b, const env::HouseGraph& house);

/// Throws Error on an empty sequence, an unknown node or a step that does
/// not follow an edge. SPL uses the reference start.
EpisodeMetrics evaluate_episode(std::span<const int> predicted, std::span<const int> reference, int goal,
                                const env::HouseGraph& house, double success_radius);

/// SR, SPL, OSR, CLS, nDTW in percent; NE in house units.
struct MetricSummary {
  double sr = 0.0;
  double spl = 0.0;
  double osr = 0.0;
  double ne = 0.0;
  double cls = 0.0;
  double ndtw = 0.0;
};

MetricSummary summarize(std::span<const EpisodeMetrics> episodes);

struct ClientMetrics {
  int client_id = 0;
  std::vector<EpisodeMetrics> episodes;
  MetricSummary mean;
};

struct MetricBundle {
  std::vector<ClientMetrics> clients;
  MetricSummary mean;    // unweighted mean of client means
  MetricSummary stddev;  // population standard deviation across clients
};

struct ClientEpisodes {
  int client_id = 0;
  std::vector<EpisodeMetrics> episodes;
};

/// Throws Error when no client or a client without episodes is given.
MetricBundle aggregate_metrics(std::span<const ClientEpisodes> clients);

/// Mean and population std of client-level summaries.
void cross_client(std::span<const MetricSummary> clients, MetricSummary& mean, MetricSummary& stddev);

}  // namespace pfednav::metrics
