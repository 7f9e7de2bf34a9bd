#include "scpc/checkpoint.hpp"

#include <cstdio>
#include <sstream>

#include "scpc/binary_io.hpp"
#include "scpc/rng.hpp"

namespace scpc {

void ModelConfig::sync() {
  autoregressor.dim = encoder.dim;
  autoregressor.grid_side = grid.grid_side();
  encoder.full_side = grid.image_side;
}

void ModelConfig::validate() const {
  grid.validate();
  encoder.validate();
  autoregressor.validate();
  if (autoregressor.dim != encoder.dim) throw ConfigError("autoregressor width must equal encoder dim");
  if (autoregressor.grid_side != grid.grid_side()) throw ConfigError("positional table does not cover the grid");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.encoder.stages) {
    stages.push_back({{"out_channels", s.out_channels}, {"kernel", s.kernel}, {"stride", s.stride}});
  }
  return {
      {"grid", {{"image_side", cfg.grid.image_side}, {"patch_side", cfg.grid.patch_side}, {"stride", cfg.grid.stride}}},
      {"encoder",
       {{"stages", stages},
        {"dim", cfg.encoder.dim},
        {"padding", to_string(cfg.encoder.padding)},
        {"full_side", cfg.encoder.full_side},
        {"center", cfg.encoder.center},
        {"normalize", cfg.encoder.normalize}}},
      {"autoregressor",
       {{"layers", cfg.autoregressor.layers},
        {"heads", cfg.autoregressor.heads},
        {"dim", cfg.autoregressor.dim},
        {"ff_width", cfg.autoregressor.ff_width},
        {"grid_side", cfg.autoregressor.grid_side},
        {"normalize", cfg.autoregressor.normalize},
        {"zero_output_projection", cfg.autoregressor.zero_output_projection}}},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig cfg;
    const auto& g = j.at("grid");
    cfg.grid = {g.at("image_side").get<std::size_t>(), g.at("patch_side").get<std::size_t>(),
                g.at("stride").get<std::size_t>()};
    const auto& e = j.at("encoder");
    cfg.encoder.stages.clear();
    for (const auto& s : e.at("stages")) {
      cfg.encoder.stages.push_back(
          {s.at("out_channels").get<std::size_t>(), s.at("kernel").get<std::size_t>(), s.at("stride").get<std::size_t>()});
    }
    cfg.encoder.dim = e.at("dim").get<std::size_t>();
    cfg.encoder.padding = patch_padding_from_string(e.at("padding").get<std::string>());
    cfg.encoder.full_side = e.at("full_side").get<std::size_t>();
    cfg.encoder.center = e.at("center").get<bool>();
    cfg.encoder.normalize = e.at("normalize").get<bool>();
    const auto& a = j.at("autoregressor");
    cfg.autoregressor.layers = a.at("layers").get<std::size_t>();
    cfg.autoregressor.heads = a.at("heads").get<std::size_t>();
    cfg.autoregressor.dim = a.at("dim").get<std::size_t>();
    cfg.autoregressor.ff_width = a.at("ff_width").get<std::size_t>();
    cfg.autoregressor.grid_side = a.at("grid_side").get<std::size_t>();
    cfg.autoregressor.normalize = a.at("normalize").get<bool>();
    cfg.autoregressor.zero_output_projection = a.at("zero_output_projection").get<bool>();
    return cfg;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("malformed model configuration: ") + ex.what());
  }
}

std::string architecture_string(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "grid=" << cfg.grid.image_side << '/' << cfg.grid.patch_side << '/' << cfg.grid.stride << ";enc=";
  for (std::size_t i = 0; i < cfg.encoder.stages.size(); ++i) {
    const auto& s = cfg.encoder.stages[i];
    os << (i ? "," : "") << s.out_channels << 'k' << s.kernel << 's' << s.stride;
  }
  os << ";d=" << cfg.encoder.dim << ";pad=" << to_string(cfg.encoder.padding) << '/' << cfg.encoder.full_side
     << ";center=" << cfg.encoder.center << ";enorm=" << cfg.encoder.normalize << ";ar=L" << cfg.autoregressor.layers << 'H' << cfg.autoregressor.heads
     << 'F' << cfg.autoregressor.ff_width << 'S' << cfg.autoregressor.grid_side
     << ";anorm=" << cfg.autoregressor.normalize;
  return os.str();
}

std::uint64_t architecture_digest(const ModelConfig& cfg) { return fnv1a64(architecture_string(cfg)); }

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : parameters)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ByteWriter out;
  out.raw("SCPC");
  out.u32(kCheckpointVersion);
  out.u64(ckpt.digest());
  const std::string config = nlohmann::json{{"model", to_json(ckpt.model)}, {"training", ckpt.training}}.dump();
  out.u32(static_cast<std::uint32_t>(config.size()));
  out.raw(config);
  out.u32(static_cast<std::uint32_t>(ckpt.parameters.size()));
  for (const auto& [name, t] : ckpt.parameters) {
    if (name.size() > 0xffff) throw FormatError("parameter name too long: " + name);
    if (t.rank() > 0xff) throw FormatError("parameter rank too large: " + name);
    out.u16(static_cast<std::uint16_t>(name.size()));
    out.raw(name);
    out.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) out.u32(static_cast<std::uint32_t>(e));
    for (float v : t.data()) out.f32(v);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_bytes(path.string(), out.bytes());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest,
                           bool force) {
  const auto bytes = read_file_bytes(path.string());
  ByteReader in(bytes, path.string());
  if (bytes.size() < 4 || in.raw(4) != "SCPC") throw FormatError(path.string() + ": bad magic, expected SCPC");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t stored_digest = in.u64();
  const std::string config_text = in.raw(in.u32());
  nlohmann::json config;
  try {
    config = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(path.string() + ": malformed configuration block: " + ex.what());
  }
  Checkpoint ckpt;
  ckpt.model = model_config_from_json(config.at("model"));
  ckpt.training = config.value("training", nlohmann::json::object());
  if (ckpt.digest() != stored_digest) {
    throw FormatError(path.string() + ": header digest " + digest_hex(stored_digest) +
                      " does not match its configuration block (" + digest_hex(ckpt.digest()) + ")");
  }
  if (expected_digest && *expected_digest != stored_digest && !force) {
    throw ConfigMismatchError(path.string() + ": config digest mismatch: checkpoint " + digest_hex(stored_digest) +
                              ", expected " + digest_hex(*expected_digest));
  }
  const std::uint32_t records = in.u32();
  for (std::uint32_t r = 0; r < records; ++r) {
    std::string name = in.raw(in.u16());
    const std::size_t rank = in.u8();
    Shape shape(rank);
    for (auto& e : shape) e = in.u32();
    const std::size_t n = shape_numel(shape);
    if (in.remaining() < n * 4) {
      throw TruncationError(path.string() + ": truncated payload for parameter '" + name + "'");
    }
    std::vector<float> values(n);
    for (auto& v : values) v = in.f32();
    ckpt.parameters.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values), true));
  }
  if (!in.at_end()) throw FormatError(path.string() + ": trailing bytes after the last record");
  return ckpt;
}

Encoder make_encoder(const Checkpoint& ckpt) {
  Rng scratch(0);
  Encoder enc(ckpt.model.encoder, scratch);
  enc.load_parameters(ckpt.parameters);
  return enc;
}

Autoregressor make_autoregressor(const Checkpoint& ckpt) {
  Rng scratch(0);
  Autoregressor ar(ckpt.model.autoregressor, scratch);
  ar.load_parameters(ckpt.parameters);
  return ar;
}

}  // namespace scpc
