#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scpc/checkpoint.hpp"
#include "scpc/synthetic.hpp"
#include "scpc/training.hpp"

namespace scpc {

// Every tunable of the command line tool as one JSON tree. The default tree
// fixes the key set and the type of every value; config files and --set
// overrides may only replace values with ones of the same type.
class RunConfig {
public:
  RunConfig();

  static nlohmann::json defaults();

  // Merges a JSON object (nested or with dotted keys) into the tree.
  void merge(const nlohmann::json& patch);
  void merge_file(const std::filesystem::path& path);
  // "a.b=value"; value is parsed as JSON and falls back to a bare string.
  void set(const std::string& assignment);
  void set(const std::string& key, nlohmann::json value);
  // Applies a batch of assignments and reports every bad key in one ConfigError.
  void set_all(const std::vector<std::string>& assignments);

  const nlohmann::json& tree() const { return tree_; }
  const nlohmann::json& at(const std::string& dotted) const;

  ModelConfig model() const;
  PretrainConfig pretrain() const;
  FinetuneConfig finetune() const;
  SyntheticShapesSpec synth() const;

  // Builds and validates every derived config; throws ConfigError.
  void validate() const;

  void write_resolved(const std::filesystem::path& dir) const;

private:
  // Returns an empty string on success, otherwise the problem with `key`.
  std::string try_set(const std::string& key, const nlohmann::json& value);

  nlohmann::json tree_;
};

}  // namespace scpc
