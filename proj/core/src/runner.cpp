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

#include "pfednav/runner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pfednav/errors.hpp"

namespace pfednav::runner {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kVersion = "pfednav 0.1.0";

/// Shortest text that parses back to exactly `v`.
std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void append_metrics(std::string& out, const metrics::MetricSummary& m) {
  out += num(m.sr) + "," + num(m.spl) + "," + num(m.osr) + "," + num(m.cls) + "," + num(m.ndtw) + "," + num(m.ne);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto p = line.find(sep);
    out.push_back(line.substr(0, p));
    if (p == std::string_view::npos) break;
    line.remove_prefix(p + 1);
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return out;
}

double parse_double(std::string_view s, const char* what) {
  std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size()) throw Error(std::string("csv: bad ") + what + " '" + buf + "'");
  return v;
}

int parse_int(std::string_view s, const char* what) {
  const double v = parse_double(s, what);
  if (v != std::floor(v)) throw Error(std::string("csv: bad ") + what + " '" + std::string(s) + "'");
  return static_cast<int>(v);
}

metrics::MetricSummary parse_metrics(std::span<const std::string_view> f) {
  metrics::MetricSummary m;
  m.sr = parse_double(f[0], "SR");
  m.spl = parse_double(f[1], "SPL");
  m.osr = parse_double(f[2], "OSR");
  m.cls = parse_double(f[3], "CLS");
  m.ndtw = parse_double(f[4], "nDTW");
  m.ne = parse_double(f[5], "NE");
  return m;
}

json metrics_json(const metrics::MetricSummary& m) {
  return json{{"SR", m.sr}, {"SPL", m.spl}, {"OSR", m.osr}, {"CLS", m.cls}, {"nDTW", m.ndtw}, {"NE", m.ne}};
}

std::string cell_name(personal::Mode mode, std::uint64_t seed) {
  return personal::mode_name(mode) + "_" + std::to_string(seed);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Non-critic layers in canonical order, the columns of the diagnostics file.
std::vector<LayerKey> fusable_layers() {
  std::vector<LayerKey> out;
  for (LayerKey k : kAllLayers) {
    if (k != LayerKey::Critic) out.push_back(k);
  }
  return out;
}

}  // namespace

std::string rounds_csv(std::span<const fed::RoundRecord> records) {
  std::string out = std::string(kRoundsHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.round) + ",";
    if (r.round > 0) out += num(r.mean_train_loss);
    out += ",";
    if (r.eval) {
      append_metrics(out, r.eval->mean);
      out += "," + num(r.eval->stddev.sr);
    } else {
      out += ",,,,,,";
    }
    out += "\n";
  }
  return out;
}

std::string clients_csv(std::span<const fed::RoundRecord> records) {
  std::string out = std::string(kClientsHeader) + "\n";
  for (const auto& r : records) {
    if (!r.eval) continue;
    for (const auto& c : r.eval->clients) {
      out += std::to_string(r.round) + "," + std::to_string(c.client_id) + ",";
      append_metrics(out, c.mean);
      out += "\n";
    }
  }
  return out;
}

std::string diag_csv(std::span<const fed::RoundRecord> records) {
  const std::vector<LayerKey> layers = fusable_layers();
  std::string out = "round,client,participation";
  for (LayerKey k : kDecoderLayers) out += ",alpha_" + std::string(layer_name(k));
  for (LayerKey k : layers) out += ",sel_" + std::string(layer_name(k));
  for (LayerKey k : layers) out += ",w_mean_" + std::string(layer_name(k));
  out += ",fusion_initial_loss,fusion_final_loss,fusion_steps,train_loss\n";
  for (const auto& r : records) {
    for (const auto& d : r.diagnostics) {
      out += std::to_string(r.round) + "," + std::to_string(d.client_id) + "," + std::to_string(d.participation);
      for (LayerKey k : kDecoderLayers) out += "," + (d.alpha ? num((*d.alpha)[k]) : std::string());
      for (LayerKey k : layers) out += d.selected.contains(k) ? ",1" : ",0";
      for (LayerKey k : layers) {
        auto it = d.w_mean.find(k);
        out += "," + (it != d.w_mean.end() ? num(it->second) : std::string());
      }
      if (d.fusion) {
        out += "," + num(d.fusion->initial_loss) + "," + num(d.fusion->final_loss) + "," +
               std::to_string(d.fusion->steps);
      } else {
        out += ",,,";
      }
      out += "," + num(d.train_loss) + "\n";
    }
  }
  return out;
}

std::vector<RoundRow> parse_rounds_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kRoundsHeader) throw Error("csv: unexpected rounds header");
  std::vector<RoundRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 9) throw Error("csv: rounds row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    RoundRow row;
    row.round = parse_int(f[0], "round");
    if (!f[1].empty()) row.mean_train_loss = parse_double(f[1], "mean_train_loss");
    if (!f[2].empty()) {
      row.metrics = parse_metrics(std::span(f).subspan(2, 6));
      row.sr_client_std = parse_double(f[8], "sr_client_std");
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<ClientRow> parse_clients_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != kClientsHeader) throw Error("csv: unexpected clients header");
  std::vector<ClientRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 8) throw Error("csv: clients row " + std::to_string(i) + " has " + std::to_string(f.size()) + " fields");
    rows.push_back({parse_int(f[0], "round"), parse_int(f[1], "client"), parse_metrics(std::span(f).subspan(2, 6))});
  }
  return rows;
}

std::string build_summary(const config::ExperimentConfig& config, std::span<const CellData> cells) {
  const double target = config.setup.fed.target_loss;
  json modes = json::object();
  for (personal::Mode mode : config.modes) {
    json seeds = json::object();
    std::vector<metrics::MetricSummary> finals;
    std::vector<double> sr_stds;
    json rtt_list = json::array();
    for (const CellData& cell : cells) {
      if (cell.mode != mode) continue;
      const RoundRow* last_eval = nullptr;
      std::vector<double> losses;
      for (const auto& row : cell.rounds) {
        if (row.metrics) last_eval = &row;
        if (row.mean_train_loss) losses.push_back(*row.mean_train_loss);
      }
      if (!last_eval) throw Error("summary: cell " + cell_name(cell.mode, cell.seed) + " has no evaluation");
      // round indices of the loss series start at 1
      const auto rtt = fed::rounds_to_target(losses, target);
      json per_client = json::array();
      std::vector<metrics::MetricSummary> client_means;
      for (const auto& c : cell.clients) {
        if (c.round != last_eval->round) continue;
        json entry = metrics_json(c.metrics);
        entry["client"] = c.client_id;
        per_client.push_back(std::move(entry));
        client_means.push_back(c.metrics);
      }
      metrics::MetricSummary mean, stddev;
      if (!client_means.empty()) metrics::cross_client(client_means, mean, stddev);
      json cell_json;
      cell_json["final_round"] = last_eval->round;
      cell_json["final"] = metrics_json(*last_eval->metrics);
      cell_json["final_client_std"] = metrics_json(stddev);
      cell_json["final_clients"] = std::move(per_client);
      cell_json["rounds_run"] = static_cast<int>(losses.size());
      cell_json["rounds_to_target"] = rtt ? json(*rtt) : json(nullptr);
      cell_json["train_loss_min"] = losses.empty() ? json(nullptr) : json(*std::min_element(losses.begin(), losses.end()));
      cell_json["train_loss_max"] = losses.empty() ? json(nullptr) : json(*std::max_element(losses.begin(), losses.end()));
      seeds[std::to_string(cell.seed)] = std::move(cell_json);
      finals.push_back(*last_eval->metrics);
      sr_stds.push_back(*last_eval->sr_client_std);
      rtt_list.push_back(rtt ? json(*rtt) : json(nullptr));
    }
    if (finals.empty()) continue;
    metrics::MetricSummary avg, spread;
    metrics::cross_client(finals, avg, spread);
    double std_sum = 0.0;
    for (double s : sr_stds) std_sum += s;
    json agg;
    agg["final"] = metrics_json(avg);
    agg["sr_client_std"] = std_sum / static_cast<double>(sr_stds.size());
    agg["rounds_to_target"] = std::move(rtt_list);
    json mode_json;
    mode_json["seeds"] = std::move(seeds);
    mode_json["seed_mean"] = std::move(agg);
    modes[personal::mode_name(mode)] = std::move(mode_json);
  }
  json summary;
  summary["version"] = kVersion;
  summary["target_loss"] = target;
  summary["modes"] = std::move(modes);
  summary["config"] = config::dump_config(config);
  return summary.dump(2) + "\n";
}

int thread_cap() {
  if (const char* env = std::getenv("PFEDNAV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(std::min<long>(v, 1024));
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void run(const config::ExperimentConfig& config, const fs::path& out_dir) {
  struct Cell {
    personal::Mode mode;
    std::uint64_t seed;
    std::string rounds, clients, diag;
  };
  std::vector<Cell> cells;
  for (personal::Mode m : config.modes) {
    for (std::uint64_t s : config.seeds) cells.push_back({m, s, {}, {}, {}});
  }

  std::vector<fs::path> written;
  std::mutex written_mutex;
  const bool created_dir = !fs::exists(out_dir);
  auto track = [&](const fs::path& p, const std::string& text) {
    {
      std::lock_guard lock(written_mutex);
      written.push_back(p);
    }
    write_file(p, text);
  };

  try {
    fs::create_directories(out_dir);
    track(out_dir / "config.ini", config::dump_config(config));

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(cells.size());
    auto worker = [&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        Cell& cell = cells[i];
        try {
          fed::ExperimentSetup setup = config.setup;
          setup.fed.mode = cell.mode;
          const fs::path ckpt =
              setup.fed.checkpoint_every > 0 ? out_dir / "checkpoints" / cell_name(cell.mode, cell.seed) : fs::path();
          const fed::ExperimentHistory history = fed::run_experiment(setup, cell.seed, ckpt);
          cell.rounds = rounds_csv(history.records);
          cell.clients = clients_csv(history.records);
          cell.diag = diag_csv(history.records);
          const std::string name = cell_name(cell.mode, cell.seed);
          track(out_dir / ("rounds_" + name + ".csv"), cell.rounds);
          track(out_dir / ("clients_" + name + ".csv"), cell.clients);
          track(out_dir / ("diag_" + name + ".csv"), cell.diag);
        } catch (...) {
          errors[i] = std::current_exception();
          next = cells.size();
        }
      }
    };
    const int workers = std::min<int>(thread_cap(), static_cast<int>(cells.size()));
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    std::vector<CellData> data;
    for (const Cell& c : cells) {
      data.push_back({c.mode, c.seed, parse_rounds_csv(c.rounds), parse_clients_csv(c.clients)});
    }
    track(out_dir / "summary.json", build_summary(config, data));
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    if (config.setup.fed.checkpoint_every > 0) fs::remove_all(out_dir / "checkpoints", ec);
    if (created_dir) fs::remove(out_dir, ec);
    throw;
  }
}

std::string report(const fs::path& dir) {
  const config::ExperimentConfig config = config::parse_config(read_file(dir / "config.ini"), (dir / "config.ini").string());
  std::vector<CellData> data;
  for (personal::Mode m : config.modes) {
    for (std::uint64_t s : config.seeds) {
      const std::string name = cell_name(m, s);
      data.push_back({m, s, parse_rounds_csv(read_file(dir / ("rounds_" + name + ".csv"))),
                      parse_clients_csv(read_file(dir / ("clients_" + name + ".csv")))});
    }
  }
  const std::string text = build_summary(config, data);
  write_file(dir / "summary.json", text);
  return text;
}

}  // namespace pfednav::runner
