#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scpc/tensor.hpp"

namespace scpc {

// ω₀ for the same-image term and ω_t for each texture variant t = 1..T.
// The weights are deliberately not normalized.
struct LossWeights {
  float same_image = 1.0f;
  std::vector<float> textures;

  static LossWeights uniform(std::size_t texture_count, float same_image, float per_texture) {
    return {same_image, std::vector<float>(texture_count, per_texture)};
  }
  // Throws ConfigError for an id with no weight.
  float weight(int texture_id) const;
  void validate() const;
  LossWeights scaled(float factor) const;
};

// Which pair forms the negative logits.
enum class NegativePairing {
  PredictionVsTrain,  // ȳᵢᵀx̆ⱼ (default)
  TargetVsTrain,      // y̆ᵢᵀx̆ⱼ, the literal printed form
};

// Where the negatives x̆ of a texture term come from. With only the original
// image's training block, "is this patch textured" separates every positive
// from every negative and the encoder learns to encode texture.
enum class TextureNegatives {
  Original,            // original-image training block only
  Variant,             // the same block of the textured variant
  OriginalAndVariant,  // both
};

std::string to_string(TextureNegatives n);
TextureNegatives texture_negatives_from_string(const std::string& s);

struct ContrastiveOptions {
  float temperature = 0.5f;
  NegativePairing negatives = NegativePairing::PredictionVsTrain;
  TextureNegatives texture_negatives = TextureNegatives::Variant;
};

// One (anchor, direction, texture) instance.
struct ContrastiveTerm {
  Tensor predictions;  // ȳ [m×d]
  Tensor targets;      // y̆ [m×d]
  Tensor train;        // x̆ negatives [n×d], normally the k² training block
  int texture_id = 0;
};

using ContrastiveBatch = std::vector<ContrastiveTerm>;

// Σ over target locations i of
//   −log( exp(ȳᵢᵀy̆ᵢ/τ) / (exp(ȳᵢᵀy̆ᵢ/τ) + Σⱼ exp(ȳᵢᵀx̆ⱼ/τ)) ).
Tensor contrastive_loss(const ContrastiveTerm& term, const ContrastiveOptions& opts);
// Sum of contrastive_loss over every term.
Tensor contrastive_loss(const ContrastiveBatch& batch, const ContrastiveOptions& opts);

// Positive and negative logits (before temperature) of one term, for metrics.
struct LogitSummary {
  double positive_sum = 0.0;
  std::size_t positive_count = 0;
  double negative_sum = 0.0;
  std::size_t negative_count = 0;
};
void summarize_logits(const ContrastiveTerm& term, const ContrastiveOptions& opts, LogitSummary& into);

// ω₀·L₀ + Σ ω_t·L_t over the given per-texture losses.
Tensor combined_loss(std::span<const std::pair<int, Tensor>> per_texture, const LossWeights& weights);

}  // namespace scpc
