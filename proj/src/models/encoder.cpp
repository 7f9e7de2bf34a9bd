#include <cmath>

#include "scpc/models.hpp"
#include "scpc/ops.hpp"

namespace scpc {

std::string to_string(PatchPadding p) { return p == PatchPadding::Direct ? "direct" : "pad_to_full"; }

PatchPadding patch_padding_from_string(const std::string& name) {
  if (name == "direct") return PatchPadding::Direct;
  if (name == "pad_to_full") return PatchPadding::PadToFull;
  throw ConfigError("unknown patch padding '" + name + "' (expected direct or pad_to_full)");
}

void EncoderConfig::validate() const {
  if (stages.empty()) throw ConfigError("encoder needs at least one conv stage");
  for (const auto& s : stages) {
    if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0) {
      throw ConfigError("encoder stages need positive channels, kernel and stride");
    }
  }
  if (stages.back().out_channels != dim) {
    throw ConfigError("final encoder stage has " + std::to_string(stages.back().out_channels) +
                      " channels but representation dim is " + std::to_string(dim));
  }
  if (padding == PatchPadding::PadToFull && full_side == 0) throw ConfigError("pad_to_full needs full_side > 0");
}

void copy_parameters(const NamedTensors& from, NamedTensors& into, const std::string& owner) {
  for (auto& [name, dst] : into) {
    const Tensor* src = nullptr;
    for (const auto& [n, t] : from)
      if (n == name) src = &t;
    if (src == nullptr) throw ConfigError(owner + ": missing parameter '" + name + "'");
    if (src->shape() != dst.shape()) {
      throw ConfigError(owner + ": parameter '" + name + "' has shape " + shape_str(src->shape()) + ", expected " +
                        shape_str(dst.shape()));
    }
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }
}

template <typename Self, typename F>
void Encoder::visit(Self& self, F&& f) {
  for (std::size_t i = 0; i < self.kernels_.size(); ++i) {
    f("encoder.conv" + std::to_string(i) + ".weight", self.kernels_[i]);
    f("encoder.conv" + std::to_string(i) + ".bias", self.biases_[i]);
  }
}

Encoder::Encoder(EncoderConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::size_t in_channels = Image::kChannels;
  for (std::size_t i = 0; i < cfg_.stages.size(); ++i) {
    const auto& st = cfg_.stages[i];
    const std::size_t fan_in = in_channels * st.kernel * st.kernel;
    // He-uniform for ReLU stages; the last stage feeds the pool directly.
    const bool last = i + 1 == cfg_.stages.size();
    const double bound = std::sqrt((last ? 3.0 : 6.0) / static_cast<double>(fan_in));
    std::vector<float> w(st.out_channels * fan_in);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
    kernels_.push_back(Tensor::from({st.out_channels, in_channels, st.kernel, st.kernel}, std::move(w), true));
    biases_.push_back(Tensor::zeros({st.out_channels}, true));
    in_channels = st.out_channels;
  }
}

Tensor Encoder::encode_patches(std::span<const Image> patches) const {
  if (patches.empty()) throw DimensionError("encode_patches: no patches");
  const std::size_t p = patches.front().height();
  for (const auto& patch : patches) {
    if (patch.height() != p || patch.width() != p) {
      throw DimensionError("encode_patches: patches must be square and equally sized");
    }
  }
  std::size_t side = p;
  std::size_t offset = 0;
  if (cfg_.padding == PatchPadding::PadToFull) {
    if (p > cfg_.full_side) {
      throw DimensionError("encode_patches: patch side " + std::to_string(p) + " exceeds pad_to_full canvas " +
                           std::to_string(cfg_.full_side));
    }
    side = cfg_.full_side;
    offset = (side - p) / 2;
  }
  const std::size_t n = patches.size();
  const std::size_t plane = side * side;
  std::vector<float> batch(n * Image::kChannels * plane, 0.0f);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < Image::kChannels; ++c) {
      // Removing the flat color leaves edges and texture; padding stays zero.
      float mean = 0.0f;
      if (cfg_.center) {
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) mean += patches[b].at(c, y, x);
        mean /= static_cast<float>(p * p);
      }
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          batch[(b * Image::kChannels + c) * plane + (y + offset) * side + x + offset] = patches[b].at(c, y, x) - mean;
    }

  Tensor h = Tensor::from({n, Image::kChannels, side, side}, std::move(batch));
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const auto& st = cfg_.stages[i];
    h = ops::add_channel_bias(ops::conv2d(h, kernels_[i], st.stride, st.kernel / 2), biases_[i]);
    if (i + 1 < kernels_.size()) h = ops::relu(h);
  }
  Tensor pooled = ops::mean_pool_global(h);
  return cfg_.normalize ? ops::l2_normalize_rows(pooled) : pooled;
}

Tensor Encoder::encode_patch(const Image& patch) const {
  return ops::reshape(encode_patches(std::span<const Image>(&patch, 1)), {cfg_.dim});
}

RepGrid Encoder::encode_grid(const PatchGrid& grid) const {
  return RepGrid{grid.side(), encode_patches(grid.patches)};
}

NamedTensors Encoder::parameters() const {
  NamedTensors out;
  visit(*this, [&](std::string name, const Tensor& t) { out.emplace_back(std::move(name), t); });
  return out;
}

void Encoder::load_parameters(const NamedTensors& params) {
  NamedTensors mine = parameters();
  copy_parameters(params, mine, "encoder");
}

Encoder Encoder::replicate() const {
  Encoder copy = *this;
  visit(copy, [](const std::string&, Tensor& t) { t = t.alias_with_fresh_grad(); });
  return copy;
}

}  // namespace scpc
