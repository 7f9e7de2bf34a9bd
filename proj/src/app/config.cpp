#include "scpc/run_config.hpp"

#include <fstream>
#include <sstream>

#include "scpc/error.hpp"

namespace scpc {

using nlohmann::json;

json RunConfig::defaults() {
  const ModelConfig model;
  const PretrainConfig pre;
  const FinetuneConfig fine;
  const SyntheticShapesSpec synth;
  json channels = json::array();
  for (const auto& s : model.encoder.stages) channels.push_back(s.out_channels);
  return {
      {"seed", 0},
      {"threads", 1},
      {"verbosity", 0},
      {"dataset", ""},
      {"checkpoint", ""},
      {"grid",
       {{"image_side", model.grid.image_side}, {"patch_side", model.grid.patch_side}, {"stride", model.grid.stride}}},
      {"encoder",
       {{"channels", channels},
        {"kernel", model.encoder.stages.front().kernel},
        {"stride", model.encoder.stages.front().stride},
        {"padding", to_string(model.encoder.padding)},
        {"center", model.encoder.center},
        {"normalize", model.encoder.normalize}}},
      {"autoregressor",
       {{"layers", model.autoregressor.layers},
        {"heads", model.autoregressor.heads},
        {"ff_width", model.autoregressor.ff_width},
        {"normalize", model.autoregressor.normalize},
        {"zero_output_projection", model.autoregressor.zero_output_projection}}},
      {"pretrain",
       {{"perception", pre.perception},
        {"directions", {"forward", "backward"}},
        {"textures", pre.textures},
        {"omega0", 1.0},
        {"omega_textures", 0.5},
        {"temperature", 0.5},
        {"negatives", "prediction"},
        {"texture_negatives", to_string(pre.contrastive.texture_negatives)},
        {"lr", 0.005},
        {"momentum", 0.9},
        {"weight_decay", 1e-4},
        {"cosine_decay", pre.optimizer.cosine_decay},
        {"epochs", pre.epochs},
        {"batch_size", pre.batch_size},
        {"grad_clip", pre.optimizer.grad_clip},
        {"early_stop", pre.early_stop}}},
      {"finetune",
       {{"classes", fine.classes},
        {"lr", 0.5},
        {"momentum", 0.9},
        {"weight_decay", 0.0},
        {"epochs", fine.epochs},
        {"batch_size", fine.batch_size},
        {"freeze_encoder", fine.freeze_encoder}}},
      {"probe", {{"test_fraction", 0.5}, {"random_init", false}}},
      {"synth",
       {{"images_per_class", synth.images_per_class},
        {"image_side", synth.image_side},
        {"texture_randomization", synth.texture_randomization},
        {"seed", synth.seed}}},
  };
}

RunConfig::RunConfig() : tree_(defaults()) {}

namespace {

std::vector<std::string> split_key(const std::string& dotted) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(dotted);
  while (std::getline(in, part, '.')) parts.push_back(part);
  return parts;
}

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "non-negative integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool same_kind(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_unsigned() || def.is_number_integer()) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }
  if (def.is_number_float()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) {
    if (!v.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : v)
      if (!same_kind(def.front(), e)) return false;
    return true;
  }
  return false;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

void throw_problems(const std::vector<std::string>& problems) {
  if (problems.empty()) return;
  std::string msg = "invalid config keys:";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i == 0 ? " " : "; ") + problems[i];
  throw ConfigError(msg);
}

}  // namespace

std::string RunConfig::try_set(const std::string& key, const json& value) {
  const json defaults_tree = defaults();
  const json* def = &defaults_tree;
  json* slot = &tree_;
  for (const auto& part : split_key(key)) {
    if (!def->is_object() || !def->contains(part)) return key + " (unknown key)";
    def = &(*def)[part];
    slot = &(*slot)[part];
  }
  if (def->is_object()) return key + " (is a section, not a value)";
  if (!same_kind(*def, value)) {
    return key + " (expected " + type_name(*def) + ", got " + type_name(value) + ")";
  }
  *slot = value;
  return {};
}

void RunConfig::set(const std::string& key, json value) {
  const std::string problem = try_set(key, value);
  if (!problem.empty()) throw_problems({problem});
}

namespace {

std::pair<std::string, json> parse_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  return {key, value};
}

}  // namespace

void RunConfig::set(const std::string& assignment) {
  auto [key, value] = parse_assignment(assignment);
  set(key, std::move(value));
}

void RunConfig::set_all(const std::vector<std::string>& assignments) {
  std::vector<std::string> problems;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      problems.push_back(a + " (not of the form key=value)");
      continue;
    }
    auto [key, value] = parse_assignment(a);
    if (auto p = try_set(key, value); !p.empty()) problems.push_back(p);
  }
  throw_problems(problems);
}

void RunConfig::merge(const json& patch) {
  if (!patch.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(patch, "", flat);
  std::vector<std::string> problems;
  for (const auto& [key, value] : flat)
    if (auto p = try_set(key, value); !p.empty()) problems.push_back(p);
  throw_problems(problems);
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  const json patch = json::parse(in, nullptr, false);
  if (patch.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
  merge(patch);
}

const json& RunConfig::at(const std::string& dotted) const {
  const json* node = &tree_;
  for (const auto& part : split_key(dotted)) {
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key " + dotted);
    node = &(*node)[part];
  }
  return *node;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  const auto& g = tree_["grid"];
  m.grid = {g["image_side"].get<std::size_t>(), g["patch_side"].get<std::size_t>(), g["stride"].get<std::size_t>()};
  const auto& e = tree_["encoder"];
  m.encoder.stages.clear();
  for (const auto& c : e["channels"]) {
    m.encoder.stages.push_back({c.get<std::size_t>(), e["kernel"].get<std::size_t>(), e["stride"].get<std::size_t>()});
  }
  m.encoder.dim = m.encoder.stages.empty() ? 0 : m.encoder.stages.back().out_channels;
  m.encoder.padding = patch_padding_from_string(e["padding"].get<std::string>());
  m.encoder.center = e["center"].get<bool>();
  m.encoder.normalize = e["normalize"].get<bool>();
  const auto& a = tree_["autoregressor"];
  m.autoregressor.layers = a["layers"].get<std::size_t>();
  m.autoregressor.heads = a["heads"].get<std::size_t>();
  m.autoregressor.ff_width = a["ff_width"].get<std::size_t>();
  m.autoregressor.normalize = a["normalize"].get<bool>();
  m.autoregressor.zero_output_projection = a["zero_output_projection"].get<bool>();
  m.sync();
  return m;
}

PretrainConfig RunConfig::pretrain() const {
  PretrainConfig p;
  const auto& j = tree_["pretrain"];
  p.model = model();
  p.perception = j["perception"].get<std::size_t>();
  p.directions.clear();
  for (const auto& d : j["directions"]) p.directions.push_back(direction_from_string(d.get<std::string>()));
  p.textures = j["textures"].get<std::size_t>();
  p.weights = LossWeights::uniform(p.textures, j["omega0"].get<float>(), j["omega_textures"].get<float>());
  p.contrastive.temperature = j["temperature"].get<float>();
  const auto neg = j["negatives"].get<std::string>();
  if (neg == "prediction") {
    p.contrastive.negatives = NegativePairing::PredictionVsTrain;
  } else if (neg == "target") {
    p.contrastive.negatives = NegativePairing::TargetVsTrain;
  } else {
    throw ConfigError("pretrain.negatives must be 'prediction' or 'target', got '" + neg + "'");
  }
  p.contrastive.texture_negatives = texture_negatives_from_string(j["texture_negatives"].get<std::string>());
  p.optimizer.lr = j["lr"].get<float>();
  p.optimizer.momentum = j["momentum"].get<float>();
  p.optimizer.weight_decay = j["weight_decay"].get<float>();
  p.optimizer.cosine_decay = j["cosine_decay"].get<bool>();
  p.epochs = j["epochs"].get<std::size_t>();
  p.batch_size = j["batch_size"].get<std::size_t>();
  p.optimizer.grad_clip = j["grad_clip"].get<float>();
  p.early_stop = j["early_stop"].get<bool>();
  p.seed = tree_["seed"].get<std::uint64_t>();
  p.threads = tree_["threads"].get<std::size_t>();
  return p;
}

FinetuneConfig RunConfig::finetune() const {
  FinetuneConfig f;
  const auto& j = tree_["finetune"];
  f.classes = j["classes"].get<std::size_t>();
  f.lr = j["lr"].get<float>();
  f.momentum = j["momentum"].get<float>();
  f.weight_decay = j["weight_decay"].get<float>();
  f.epochs = j["epochs"].get<std::size_t>();
  f.batch_size = j["batch_size"].get<std::size_t>();
  f.freeze_encoder = j["freeze_encoder"].get<bool>();
  f.seed = tree_["seed"].get<std::uint64_t>();
  return f;
}

SyntheticShapesSpec RunConfig::synth() const {
  const auto& j = tree_["synth"];
  return {j["images_per_class"].get<std::size_t>(), j["image_side"].get<std::size_t>(),
          j["texture_randomization"].get<bool>(), j["seed"].get<std::uint64_t>()};
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const Error& ex) {
      problems.push_back(std::string(section) + ": " + ex.what());
    }
  };
  check("model", [&] { model().validate(); });
  // Pretraining validation repeats the model checks; skip it when those failed.
  if (problems.empty()) check("pretrain", [&] { pretrain().validate(); });
  check("finetune", [&] { finetune().validate(); });
  check("synth", [&] {
    if (synth().image_side < 8) throw ConfigError("image_side must be at least 8");
  });
  const double fraction = tree_["probe"]["test_fraction"].get<double>();
  if (!(fraction >= 0.0 && fraction < 1.0)) problems.push_back("probe: test_fraction must lie in [0, 1)");
  if (tree_["threads"].get<std::size_t>() < 1) problems.push_back("threads must be at least 1");
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (std::size_t i = 0; i < problems.size(); ++i) msg += (i == 0 ? " " : "; ") + problems[i];
  throw ConfigError(msg);
}

void RunConfig::write_resolved(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto path = dir / "resolved_config.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << tree_.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace scpc
