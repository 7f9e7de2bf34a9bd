#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scpc/image.hpp"
#include "scpc/rng.hpp"
#include "scpc/sequencing.hpp"
#include "scpc/tensor.hpp"

namespace scpc {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

enum class PatchPadding {
  Direct,     // encode the p×p patch as is
  PadToFull,  // zero-pad the patch to full_side × full_side (centred) first
};

std::string to_string(PatchPadding p);
PatchPadding patch_padding_from_string(const std::string& name);

struct ConvStage {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  bool operator==(const ConvStage&) const = default;
};

struct EncoderConfig {
  std::vector<ConvStage> stages{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  std::size_t dim = 64;  // must equal stages.back().out_channels
  PatchPadding padding = PatchPadding::Direct;
  std::size_t full_side = 64;  // canvas side for PadToFull
  bool center = true;          // subtract each patch's per-channel mean before the convolutions
  bool normalize = true;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// s×s grid of d-dimensional patch representations, stored as [s²×d] with
// cells in row-major order.
struct RepGrid {
  std::size_t side = 0;
  Tensor reps;

  std::size_t dim() const { return reps.dim(1); }
  std::span<const float> at(std::size_t row, std::size_t col) const {
    return reps.data().subspan((row * side + col) * dim(), dim());
  }
};

// Convolutional patch encoder: conv stack (ReLU between stages), global mean
// pool, optional L2 normalization.
class Encoder {
public:
  Encoder(EncoderConfig cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // [N×d] representations of N equally sized square patches.
  Tensor encode_patches(std::span<const Image> patches) const;
  Tensor encode_patch(const Image& patch) const;  // [d]
  RepGrid encode_grid(const PatchGrid& grid) const;

  NamedTensors parameters() const;
  // Copies values from `params` (matched by name, shapes checked).
  void load_parameters(const NamedTensors& params);
  // Same weights, private gradient buffers.
  Encoder replicate() const;

private:
  template <typename Self, typename F>
  static void visit(Self& self, F&& f);

  EncoderConfig cfg_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

struct AutoregressorConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ff_width = 128;
  std::size_t grid_side = 7;  // positional table covers grid_side² cells
  bool normalize = true;
  bool zero_output_projection = false;

  void validate() const;
  bool operator==(const AutoregressorConfig&) const = default;
};

// Transformer that maps training-block representations to one prediction per
// target coordinate. Each target is addressed by a query token made of its
// positional embedding plus a learned query-role embedding; all tokens attend
// to each other.
class Autoregressor {
public:
  Autoregressor(AutoregressorConfig cfg, Rng& rng);

  const AutoregressorConfig& config() const { return cfg_; }

  // train_reps is [k²×d] aligned with train_coords; returns [|target_coords|×d].
  Tensor predict(const Tensor& train_reps, std::span<const GridCoord> train_coords,
                 std::span<const GridCoord> target_coords) const;

  NamedTensors parameters() const;
  void load_parameters(const NamedTensors& params);
  Autoregressor replicate() const;

private:
  struct Layer {
    Tensor ln1_gamma, ln1_beta, wq, wk, wv, wo;
    Tensor ln2_gamma, ln2_beta, w1, b1, w2, b2;
  };
  template <typename Self, typename F>
  static void visit(Self& self, F&& f);
  Tensor self_attention(const Layer& layer, const Tensor& x) const;

  AutoregressorConfig cfg_;
  Tensor position_table_;  // [s²×d]
  Tensor role_table_;      // [2×d]: 0 = training token, 1 = target query
  std::vector<Layer> layers_;
  Tensor final_gamma_, final_beta_, out_weight_, out_bias_;
};

// Copies values by name; throws ConfigError on missing names or shape changes.
void copy_parameters(const NamedTensors& from, NamedTensors& into, const std::string& owner);

}  // namespace scpc
