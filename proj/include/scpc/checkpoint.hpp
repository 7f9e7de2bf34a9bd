#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "scpc/image.hpp"
#include "scpc/models.hpp"

namespace scpc {

// Architecture-defining configuration; its digest guards checkpoint loads.
struct ModelConfig {
  GridSpec grid = GridSpec::desk_scale();
  EncoderConfig encoder;
  AutoregressorConfig autoregressor;

  // Fills derived fields (autoregressor width and grid side, pad canvas).
  void sync();
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Canonical text form hashed into the digest.
std::string architecture_string(const ModelConfig& cfg);
std::uint64_t architecture_digest(const ModelConfig& cfg);
std::string digest_hex(std::uint64_t digest);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// On-disk layout (little-endian):
//   "SCPC" | u32 version | u64 config digest
//   | u32 config length | config JSON (UTF-8) | u32 record count
//   | records: u16 name length, name, u8 rank, u32 extents[rank], f32 payload
struct Checkpoint {
  ModelConfig model;
  nlohmann::json training = nlohmann::json::object();
  NamedTensors parameters;

  std::uint64_t digest() const { return architecture_digest(model); }
  // nullptr when absent.
  const Tensor* find(const std::string& name) const;
  bool has_autoregressor() const { return find("autoregressor.role_table") != nullptr; }
  bool has_classifier() const { return find("head.weight") != nullptr; }
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws FormatError on bad magic/version, TruncationError on short payloads,
// ConfigMismatchError when `expected_digest` differs (unless `force`).
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest = {},
                           bool force = false);

Encoder make_encoder(const Checkpoint& ckpt);
Autoregressor make_autoregressor(const Checkpoint& ckpt);

}  // namespace scpc
