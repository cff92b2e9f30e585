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

#include "pfednav/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "pfednav/errors.hpp"

namespace pfednav::config {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

/// Shortest text that parses back to exactly `v`.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("expected a number, got '" + std::string(s) + "'");
  return v;
}

long long to_integer(std::string_view s) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

int to_int(std::string_view s) {
  const long long v = to_integer(s);
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("integer out of range: '" + std::string(s) + "'");
  return static_cast<int>(v);
}

bool to_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

struct Field {
  std::string section;
  std::string key;
  std::string doc;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Get>
Field real(std::string section, std::string key, std::string doc, Get ref) {
  return {std::move(section), std::move(key), std::move(doc),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = to_double(v); },
          [ref](const ExperimentConfig& c) { return format_double(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field integer(std::string section, std::string key, std::string doc, Get ref) {
  return {std::move(section), std::move(key), std::move(doc),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = to_int(v); },
          [ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); }};
}

template <class Get>
Field boolean(std::string section, std::string key, std::string doc, Get ref) {
  return {std::move(section), std::move(key), std::move(doc),
          [ref](ExperimentConfig& c, std::string_view v) { ref(c) = to_bool(v); },
          [ref](const ExperimentConfig& c) {
            return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // experiment
    f.push_back({"experiment", "seeds", "comma-separated experiment seeds",
                 [](C& c, std::string_view v) {
                   c.seeds.clear();
                   for (auto item : split_list(v)) {
                     const long long s = to_integer(item);
                     if (s < 0) throw ConfigError("seeds must be non-negative");
                     c.seeds.push_back(static_cast<std::uint64_t>(s));
                   }
                 },
                 [](const C& c) {
                   std::string out;
                   for (auto s : c.seeds) out += (out.empty() ? "" : ",") + std::to_string(s);
                   return out;
                 }});
    f.push_back({"experiment", "modes", "comma-separated modes: fedavg, pfednavi, all_layers, no_layer, local_only",
                 [](C& c, std::string_view v) {
                   c.modes.clear();
                   for (auto item : split_list(v)) c.modes.push_back(personal::parse_mode(std::string(item)));
                 },
                 [](const C& c) {
                   std::string out;
                   for (auto m : c.modes) out += (out.empty() ? "" : ",") + personal::mode_name(m);
                   return out;
                 }});
    f.push_back({"experiment", "output_dir", "directory for run outputs (overridden by --out)",
                 [](C& c, std::string_view v) { c.output_dir = std::string(v); },
                 [](const C& c) { return c.output_dir; }});
    // federation
    f.push_back(integer("federation", "num_clients", "number of clients N", [](C& c) -> int& { return c.setup.fed.num_clients; }));
    f.push_back(real("federation", "participation_rate", "fraction S_r of clients per round, in (0,1]",
                     [](C& c) -> double& { return c.setup.fed.participation; }));
    f.push_back(integer("federation", "rounds", "communication rounds", [](C& c) -> int& { return c.setup.fed.rounds; }));
    f.push_back(real("federation", "target_loss", "mean participant train loss counted as converged",
                     [](C& c) -> double& { return c.setup.fed.target_loss; }));
    f.push_back(integer("federation", "eval_every", "rounds between evaluations", [](C& c) -> int& { return c.setup.fed.eval_every; }));
    f.push_back(integer("federation", "checkpoint_every", "rounds between checkpoints, 0 disables",
                        [](C& c) -> int& { return c.setup.fed.checkpoint_every; }));
    f.push_back(boolean("federation", "stop_at_target", "end a run at the first round reaching target_loss",
                        [](C& c) -> bool& { return c.setup.fed.stop_at_target; }));
    // model
    f.push_back(integer("model", "embed_dim", "token embedding width", [](C& c) -> int& { return c.setup.model.embed_dim; }));
    f.push_back(integer("model", "enc_hidden", "encoder GRU width", [](C& c) -> int& { return c.setup.model.enc_hidden; }));
    f.push_back(integer("model", "dec_hidden", "decoder GRU width", [](C& c) -> int& { return c.setup.model.dec_hidden; }));
    f.push_back(integer("model", "action_embed_dim", "previous-action embedding width",
                        [](C& c) -> int& { return c.setup.model.action_embed_dim; }));
    f.push_back(integer("model", "critic_hidden", "critic hidden width", [](C& c) -> int& { return c.setup.model.critic_hidden; }));
    f.push_back(integer("model", "max_steps", "decode step cap T_max", [](C& c) -> int& { return c.setup.model.max_steps; }));
    // train
    f.push_back(integer("train", "local_epochs", "local epochs per round", [](C& c) -> int& { return c.setup.train.epochs; }));
    f.push_back(real("train", "lr", "local SGD learning rate", [](C& c) -> double& { return c.setup.train.lr; }));
    f.push_back(real("train", "il_rl_mix", "weight on imitation in [0,1], 1 is pure imitation",
                     [](C& c) -> double& { return c.setup.train.il_rl_mix; }));
    f.push_back(integer("train", "batch_size", "episodes per SGD step", [](C& c) -> int& { return c.setup.train.batch_size; }));
    f.push_back(real("train", "grad_clip", "global gradient-norm clip, 0 disables", [](C& c) -> double& { return c.setup.train.grad_clip; }));
    f.push_back(real("train", "gamma", "RL discount", [](C& c) -> double& { return c.setup.train.rl.gamma; }));
    f.push_back(real("train", "terminal_bonus", "RL terminal reward magnitude",
                     [](C& c) -> double& { return c.setup.train.rl.terminal_bonus; }));
    // selection
    f.push_back(real("selection", "delta", "layer selection threshold in (0,1)", [](C& c) -> double& { return c.setup.selection.delta; }));
    f.push_back(real("selection", "alpha_lr", "mixing coefficient learning rate", [](C& c) -> double& { return c.setup.selection.alpha_lr; }));
    f.push_back(integer("selection", "alpha_steps", "mixing coefficient steps per round",
                        [](C& c) -> int& { return c.setup.selection.alpha_steps; }));
    f.push_back(integer("selection", "alpha_batch_count", "mini-batches of train.batch_size used to learn alpha",
                        [](C& c) -> int& { return c.setup.selection.alpha_batch_count; }));
    f.push_back({"selection", "alpha_param", "sigmoid (logit parameter) or direct (clamped alpha)",
                 [](C& c, std::string_view v) {
                   if (v == "sigmoid") c.setup.selection.alpha_param = personal::AlphaParam::Sigmoid;
                   else if (v == "direct") c.setup.selection.alpha_param = personal::AlphaParam::Direct;
                   else throw ConfigError("expected sigmoid or direct, got '" + std::string(v) + "'");
                 },
                 [](const C& c) {
                   return std::string(c.setup.selection.alpha_param == personal::AlphaParam::Sigmoid ? "sigmoid" : "direct");
                 }});
    f.push_back(boolean("selection", "alpha_joint", "learn all decoder alphas jointly (false: one layer at a time)",
                        [](C& c) -> bool& { return c.setup.selection.alpha_joint; }));
    f.push_back(real("selection", "w_lr", "fusion weight learning rate", [](C& c) -> double& { return c.setup.selection.w_lr; }));
    f.push_back(integer("selection", "w_steps", "fusion weight steps on ordinary participations",
                        [](C& c) -> int& { return c.setup.selection.w_steps; }));
    f.push_back(integer("selection", "full_w_round", "participation index of the full fusion optimization",
                        [](C& c) -> int& { return c.setup.selection.full_w_round; }));
    f.push_back(real("selection", "w_tol", "relative loss change ending the full optimization",
                     [](C& c) -> double& { return c.setup.selection.w_tol; }));
    f.push_back(integer("selection", "w_max_steps", "step cap of the full optimization",
                        [](C& c) -> int& { return c.setup.selection.w_max_steps; }));
    f.push_back({"selection", "fusion_granularity", "element (per-element W) or layer (one W per layer)",
                 [](C& c, std::string_view v) {
                   if (v == "element") c.setup.selection.granularity = personal::FusionGranularity::Element;
                   else if (v == "layer") c.setup.selection.granularity = personal::FusionGranularity::Layer;
                   else throw ConfigError("expected element or layer, got '" + std::string(v) + "'");
                 },
                 [](const C& c) {
                   return std::string(c.setup.selection.granularity == personal::FusionGranularity::Element ? "element"
                                                                                                          : "layer");
                 }});
    // data
    f.push_back(boolean("data", "heterogeneous", "false gives the IID baseline (shared house and identity style)",
                        [](C& c) -> bool& { return c.setup.data.heterogeneous; }));
    f.push_back(integer("data", "episodes_per_client", "episodes generated per client",
                        [](C& c) -> int& { return c.setup.data.episodes_per_client; }));
    f.push_back(real("data", "train_fraction", "train share of each client's episodes",
                     [](C& c) -> double& { return c.setup.data.train_fraction; }));
    f.push_back(integer("data", "scale_min", "smallest house node count", [](C& c) -> int& { return c.setup.data.scale_min; }));
    f.push_back(integer("data", "scale_max", "largest house node count", [](C& c) -> int& { return c.setup.data.scale_max; }));
    f.push_back(real("data", "branching_min", "smallest mean out-degree", [](C& c) -> double& { return c.setup.data.branching_min; }));
    f.push_back(real("data", "branching_max", "largest mean out-degree", [](C& c) -> double& { return c.setup.data.branching_max; }));
    f.push_back(real("data", "verbosity_min", "smallest expected filler tokens per hop",
                     [](C& c) -> double& { return c.setup.data.verbosity_min; }));
    f.push_back(real("data", "verbosity_max", "largest expected filler tokens per hop",
                     [](C& c) -> double& { return c.setup.data.verbosity_max; }));
    f.push_back(boolean("data", "rotate_headings", "per-client rotation of heading tokens",
                        [](C& c) -> bool& { return c.setup.data.rotate_headings; }));
    f.push_back(boolean("data", "permute_rooms", "per-client permutation of room tokens",
                        [](C& c) -> bool& { return c.setup.data.permute_rooms; }));
    f.push_back(boolean("data", "permute_fillers", "per-client filler token ids",
                        [](C& c) -> bool& { return c.setup.data.permute_fillers; }));
    f.push_back(integer("data", "vocab_size", "token vocabulary size", [](C& c) -> int& { return c.setup.data.vocab_size; }));
    f.push_back(integer("data", "room_types", "room categories", [](C& c) -> int& { return c.setup.data.house.room_types; }));
    f.push_back(integer("data", "noise_dim", "observation noise features", [](C& c) -> int& { return c.setup.data.house.noise_dim; }));
    f.push_back(real("data", "noise_scale", "observation noise standard deviation",
                     [](C& c) -> double& { return c.setup.data.house.noise_scale; }));
    f.push_back(integer("data", "filler_tokens", "canonical filler token count", [](C& c) -> int& { return c.setup.data.filler_tokens; }));
    // metrics
    f.push_back(real("metrics", "success_radius", "success distance, 0 selects 0.25 x mean edge length",
                     [](C& c) -> double& { return c.setup.success_radius; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

/// `section.key` or a bare key; bare keys are unique across sections.
const Field* resolve(std::string_view name) {
  const auto dot = name.find('.');
  if (dot != std::string_view::npos) return find_field(name.substr(0, dot), name.substr(dot + 1));
  for (const auto& f : fields()) {
    if (f.key == name) return &f;
  }
  return nullptr;
}

void assign(ExperimentConfig& config, const Field& field, std::string_view value, const std::string& where) {
  try {
    field.set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + field.section + "." + field.key + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::finalize() {
  setup.resolve();
  try {
    setup.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  if (modes.empty()) throw ConfigError("experiment.modes must list at least one mode");
  std::set<std::uint64_t> unique_seeds(seeds.begin(), seeds.end());
  if (unique_seeds.size() != seeds.size()) throw ConfigError("experiment.seeds contains duplicates");
  std::set<personal::Mode> unique_modes(modes.begin(), modes.end());
  if (unique_modes.size() != modes.size()) throw ConfigError("experiment.modes contains duplicates");
}

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  ExperimentConfig config;
  std::string section;
  std::set<const Field*> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    const auto comment = line.find_first_of("#;");
    line = trim(line.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      const bool known = std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == section; });
      if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Field* field = section.empty() ? resolve(key) : find_field(section, key);
    if (!field) {
      throw ConfigError(where + ": unknown key '" + (section.empty() ? key : section + "." + key) + "'");
    }
    if (!seen.insert(field).second) throw ConfigError(where + ": duplicate key '" + field->section + "." + field->key + "'");
    assign(config, *field, value, where);
  }
  config.finalize();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  const std::string_view key = trim(assignment.substr(0, eq));
  const Field* field = resolve(key);
  if (!field) throw ConfigError("override: unknown key '" + std::string(key) + "'");
  assign(config, *field, trim(assignment.substr(eq + 1)), "override");
  config.finalize();
}

std::string dump_config(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

std::vector<KeyInfo> known_keys() {
  std::vector<KeyInfo> out;
  for (const auto& f : fields()) out.push_back({f.section, f.key, f.doc});
  return out;
}

}  // namespace pfednav::config
