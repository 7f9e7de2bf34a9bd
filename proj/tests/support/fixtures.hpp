#pragma once

#include <vector>

#include "scpc/synthetic.hpp"
#include "scpc/training.hpp"

namespace scpc::testing {

// 5×5 grid over 24×24 images with a small encoder and autoregressor.
inline ModelConfig tiny_model() {
  ModelConfig m;
  m.grid = {24, 8, 4};
  m.encoder.stages = {{4, 3, 2}, {8, 3, 2}};
  m.encoder.dim = 8;
  m.autoregressor.layers = 1;
  m.autoregressor.heads = 2;
  m.autoregressor.ff_width = 16;
  m.sync();
  return m;
}

inline PretrainConfig tiny_pretrain(std::size_t textures = 2) {
  PretrainConfig cfg;
  cfg.model = tiny_model();
  cfg.perception = 2;
  cfg.textures = textures;
  cfg.weights = LossWeights::uniform(textures, 1.0f, 0.5f);
  cfg.epochs = 2;
  return cfg;
}

inline std::vector<Image> shape_images(std::size_t per_class, std::size_t side = 64, std::uint64_t seed = 7) {
  SyntheticShapesSpec spec;
  spec.images_per_class = per_class;
  spec.image_side = side;
  spec.seed = seed;
  std::vector<Image> out;
  for (auto& li : generate_shapes(spec)) out.push_back(std::move(li.image));
  return out;
}

}  // namespace scpc::testing
