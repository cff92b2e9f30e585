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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfednav/config.hpp"
#include "pfednav/federation.hpp"

namespace pfednav::runner {

/// One row of rounds_<mode>_<seed>.csv. Metric columns are empty on rounds
/// without an evaluation; round 0 has no train loss.
struct RoundRow {
  int round = 0;
  std::optional<double> mean_train_loss;
  std::optional<metrics::MetricSummary> metrics;
  std::optional<double> sr_client_std;
};

/// One row of clients_<mode>_<seed>.csv: a client's eval-split means.
struct ClientRow {
  int round = 0;
  int client_id = 0;
  metrics::MetricSummary metrics;
};

inline constexpr const char* kRoundsHeader = "round,mean_train_loss,SR,SPL,OSR,CLS,nDTW,NE,sr_client_std";
inline constexpr const char* kClientsHeader = "round,client,SR,SPL,OSR,CLS,nDTW,NE";

std::string rounds_csv(std::span<const fed::RoundRecord> records);
std::string clients_csv(std::span<const fed::RoundRecord> records);
std::string diag_csv(std::span<const fed::RoundRecord> records);

/// Throw Error on a header or field that does not match the schema.
std::vector<RoundRow> parse_rounds_csv(std::string_view text);
std::vector<ClientRow> parse_clients_csv(std::string_view text);

struct CellData {
  personal::Mode mode = personal::Mode::FedAvg;
  std::uint64_t seed = 0;
  std::vector<RoundRow> rounds;
  std::vector<ClientRow> clients;
};

/// summary.json text built only from parsed CSV data and the config echo.
std::string build_summary(const config::ExperimentConfig& config, std::span<const CellData> cells);

/// Cap on concurrently running (mode, seed) cells: PFEDNAV_THREADS when set
/// to a positive integer, otherwise the hardware concurrency.
int thread_cap();

/// Runs every (mode, seed) cell of the config into `out_dir`, writing
/// config.ini, rounds_/clients_/diag_ CSVs per cell and summary.json. Files
/// written by a failed run are removed before the error propagates.
void run(const config::ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Rebuilds summary.json of a finished run directory from its CSVs and
/// config.ini; returns the text written.
std::string report(const std::filesystem::path& dir);

}  // namespace pfednav::runner
