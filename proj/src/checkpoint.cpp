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

#include "et/checkpoint.hpp"

#include <cstdint>
#include <fstream>

namespace et {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(what + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write("ETCK", 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    const std::string header = ckpt.header.dump();
    put<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::uint32_t count = 0;
    for (const auto& [g, ps] : ckpt.groups) count += static_cast<std::uint32_t>(ps.size());
    put<std::uint32_t>(os, count);
    for (const auto& [g, ps] : ckpt.groups) {
      for (const auto& [name, t] : ps) {
        const std::string full = g + "/" + name;
        put<std::uint32_t>(os, static_cast<std::uint32_t>(full.size()));
        os.write(full.data(), static_cast<std::streamsize>(full.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (Index d : t.shape()) put<std::int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
      }
    }
    if (!os) throw DataError("write failed for checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + what);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "ETCK") throw DataError(what + ": not a checkpoint file");
  if (get<std::uint32_t>(is, what) != kCheckpointVersion) throw DataError(what + ": unsupported checkpoint version");
  const auto hlen = get<std::uint64_t>(is, what);
  if (hlen > (1u << 26)) throw DataError(what + ": header too large");
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw DataError(what + ": truncated checkpoint");
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(what + ": malformed header: " + e.what());
  }
  const auto count = get<std::uint32_t>(is, what);
  for (std::uint32_t r = 0; r < count; ++r) {
    const auto nlen = get<std::uint32_t>(is, what);
    if (nlen > 4096) throw DataError(what + ": record name too long");
    std::string full(nlen, '\0');
    is.read(full.data(), nlen);
    const auto slash = full.find('/');
    if (!is || slash == std::string::npos) throw DataError(what + ": malformed record name");
    const auto rank = get<std::uint32_t>(is, what);
    if (rank > 8) throw DataError(what + ": record rank too large");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = get<std::int64_t>(is, what);
      if (dim < 0 || dim > (1 << 24)) throw DataError(what + ": bad record dimension");
      shape.push_back(dim);
    }
    Tensor<double> t(shape);
    is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw DataError(what + ": truncated checkpoint");
    ckpt.groups[full.substr(0, slash)][full.substr(slash + 1)] = std::move(t);
  }
  return ckpt;
}

nlohmann::json arch_to_json(const DetectorArch& arch) {
  std::vector<int> widths;
  for (const auto& l : arch.backbone.layers) widths.push_back(l.out_channels);
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& s : arch.anchors.scales) {
    nlohmann::json priors = nlohmann::json::array();
    for (const auto& p : s.priors) priors.push_back({p.x(), p.y()});
    anchors.push_back({{"stride", s.stride}, {"priors", priors}});
  }
  return {{"image_size", arch.image_size},
          {"num_classes", arch.num_classes},
          {"widths", widths},
          {"num_scales", arch.num_scales()},
          {"anchors", anchors}};
}

DetectorArch arch_from_json(const nlohmann::json& j) {
  try {
    return DetectorArch::make(j.at("image_size").get<int>(), j.at("num_classes").get<int>(),
                              j.at("widths").get<std::vector<int>>(), j.at("num_scales").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed architecture record: ") + e.what());
  }
}

std::vector<std::string> arch_diff(const nlohmann::json& expected, const nlohmann::json& found) {
  std::vector<std::string> out;
  for (const auto& [key, value] : expected.items()) {
    if (!found.contains(key)) {
      out.push_back(key + ": missing in checkpoint");
    } else if (found[key] != value) {
      out.push_back(key + ": expected " + value.dump() + ", checkpoint has " + found[key].dump());
    }
  }
  for (const auto& [key, value] : found.items()) {
    if (!expected.contains(key)) out.push_back(key + ": unexpected field in checkpoint");
  }
  return out;
}

}  // namespace et
