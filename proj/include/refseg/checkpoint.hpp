// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Checkpoint container:
//
//   "RFSGCKPT"            8-byte magic
//   u32 version           little-endian, currently 1
//   u64 header_bytes      little-endian
//   header                JSON: {"config":{...},"vocab":[...],"tensors":[{"name","shape","offset"}]}
//   payload               float64 little-endian, tensors back to back in header order
//
// Loading checks every tensor against the shapes the config requires.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/error.hpp"
#include "refseg/refnet.hpp"
#include "refseg/tokenizer.hpp"

namespace refseg {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
};

inline constexpr char kCheckpointMagic[8] = {'R', 'F', 'S', 'G', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  validate_params(ck.params);
  nlohmann::ordered_json header;
  header["config"] = to_json(ck.params.config);
  header["vocab"] = ck.vocab.words();
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ck.params.weights) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = tensors;
  const std::string h = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&version), sizeof(version));
  out.append(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out += h;
  for (const auto& [name, t] : ck.params.weights)
    out.append(reinterpret_cast<const char*>(t.data.data()), t.size() * sizeof(double));
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  auto bad = [](const std::string& m) { fail(ErrorCode::kParseError, "checkpoint: " + m); };
  const std::size_t prefix = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) bad("bad magic");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  std::memcpy(&version, bytes.data() + 8, sizeof(version));
  std::memcpy(&hlen, bytes.data() + 12, sizeof(hlen));
  if (version != kCheckpointVersion) bad("unsupported version " + std::to_string(version));
  if (bytes.size() < prefix + hlen) bad("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, hlen));
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("header is not JSON: ") + e.what());
  }
  Checkpoint ck;
  ck.params.config = model_config_from_json(header.at("config"));
  ck.vocab = Vocabulary::from_words(header.at("vocab").get<std::vector<std::string>>());
  if (ck.vocab.size() > ck.params.config.vocab_size) bad("vocabulary larger than vocab_size");

  const char* payload = bytes.data() + prefix + hlen;
  const std::size_t payload_doubles = (bytes.size() - prefix - hlen) / sizeof(double);
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = numel(shape);
    if (offset + n > payload_doubles) bad("tensor " + name + " runs past the payload");
    Tensor t(shape);
    std::memcpy(t.data.data(), payload + offset * sizeof(double), n * sizeof(double));
    if (!ck.params.weights.emplace(name, std::move(t)).second) bad("duplicate tensor " + name);
  }
  validate_params(ck.params);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace refseg
