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
#include <string>
#include <string_view>
#include <vector>

#include "pfednav/federation.hpp"

namespace pfednav::config {

struct ExperimentConfig {
  fed::ExperimentSetup setup;
  std::vector<std::uint64_t> seeds{1};
  std::vector<personal::Mode> modes{personal::Mode::FedAvg, personal::Mode::PFedNavi};
  std::string output_dir;

  /// Resolves derived model dimensions, then validates every section.
  void finalize();
};

/// Sections of `[name]` headers holding `key = value` lines; `#` and `;`
/// start comments. Keys before the first header are looked up by bare name.
/// Unknown keys, malformed values and duplicates raise ConfigError naming
/// the source line.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// `key=value` with the key either `section.key` or a bare key.
void apply_override(ExperimentConfig& config, std::string_view assignment);

/// Canonical text of every key; parsing it reproduces the config.
std::string dump_config(const ExperimentConfig& config);

struct KeyInfo {
  std::string section;
  std::string key;
  std::string doc;
};
std::vector<KeyInfo> known_keys();

}  // namespace pfednav::config
