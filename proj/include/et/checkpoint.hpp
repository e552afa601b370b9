/* Copyright 2026 The et-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "et/detector.hpp"
#include "et/tensor.hpp"

namespace et {

/// Binary layout: "ETCK", u32 version, u64 header length, JSON header, u32
/// record count, then per record: u32 name length, name, u32 rank, rank x i64
/// dims, float64 data. Host byte order (little-endian on supported targets).
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  /// Groups such as "student", "teacher", "dc", "momentum.student".
  std::map<std::string, ParamSet<double>> groups;

  bool has(const std::string& group) const { return groups.count(group) > 0; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws DataError on a truncated or malformed file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json arch_to_json(const DetectorArch& arch);
DetectorArch arch_from_json(const nlohmann::json& j);
/// Human-readable list of differing architecture fields (empty when equal).
std::vector<std::string> arch_diff(const nlohmann::json& expected, const nlohmann::json& found);

}  // namespace et
