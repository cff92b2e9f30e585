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
#include <span>
#include <vector>

#include "pfednav/param_tree.hpp"

namespace pfednav {

/// Current version of the flat tree record. Layout in docs/checkpoint_format.md.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_tree(const ParamTree& tree);
/// Throws Error on bad magic, unknown version, truncation, or unknown keys.
ParamTree deserialize_tree(std::span<const std::uint8_t> bytes);

void save_tree(const std::filesystem::path& path, const ParamTree& tree);
ParamTree load_tree(const std::filesystem::path& path);

}  // namespace pfednav
