#include <cmath>

#include "scpc/loss.hpp"
#include "scpc/ops.hpp"

namespace scpc {

float LossWeights::weight(int texture_id) const {
  if (texture_id == 0) return same_image;
  if (texture_id < 0 || static_cast<std::size_t>(texture_id) > textures.size()) {
    throw ConfigError("no loss weight for texture id " + std::to_string(texture_id));
  }
  return textures[static_cast<std::size_t>(texture_id - 1)];
}

void LossWeights::validate() const {
  bool any_positive = same_image > 0.0f;
  if (!(same_image >= 0.0f)) throw ConfigError("loss weights must be non-negative");
  for (float w : textures) {
    if (!(w >= 0.0f)) throw ConfigError("loss weights must be non-negative");
    any_positive = any_positive || w > 0.0f;
  }
  if (!any_positive) throw ConfigError("at least one loss weight must be positive");
}

LossWeights LossWeights::scaled(float factor) const {
  LossWeights out = *this;
  out.same_image *= factor;
  for (auto& w : out.textures) w *= factor;
  return out;
}

std::string to_string(TextureNegatives n) {
  switch (n) {
    case TextureNegatives::Original: return "original";
    case TextureNegatives::Variant: return "variant";
    case TextureNegatives::OriginalAndVariant: return "original+variant";
  }
  return "?";
}

TextureNegatives texture_negatives_from_string(const std::string& s) {
  for (auto n : {TextureNegatives::Original, TextureNegatives::Variant, TextureNegatives::OriginalAndVariant})
    if (s == to_string(n)) return n;
  throw ConfigError("texture negatives must be 'original', 'variant' or 'original+variant', got '" + s + "'");
}

namespace {

Tensor negative_logits(const ContrastiveTerm& term, NegativePairing pairing) {
  return ops::matmul_nt(pairing == NegativePairing::PredictionVsTrain ? term.predictions : term.targets, term.train);
}

void check_term(const ContrastiveTerm& term, const ContrastiveOptions& opts) {
  if (!(opts.temperature > 0.0f)) throw ConfigError("temperature must be positive");
  const auto& p = term.predictions;
  if (p.rank() != 2 || term.targets.shape() != p.shape() || term.train.rank() != 2 ||
      term.train.dim(1) != p.dim(1)) {
    throw DimensionError("contrastive_loss: misaligned shapes predictions " + shape_str(p.shape()) + ", targets " +
                         shape_str(term.targets.shape()) + ", train " + shape_str(term.train.shape()));
  }
}

}  // namespace

Tensor contrastive_loss(const ContrastiveTerm& term, const ContrastiveOptions& opts) {
  check_term(term, opts);
  const Tensor positive = ops::reshape(ops::row_dot(term.predictions, term.targets), {term.predictions.dim(0), 1});
  const Tensor logits =
      ops::scale(ops::concat_cols({positive, negative_logits(term, opts.negatives)}), 1.0f / opts.temperature);
  const std::vector<std::size_t> positive_column(term.predictions.dim(0), 0);
  return ops::cross_entropy_rows(logits, positive_column);
}

Tensor contrastive_loss(const ContrastiveBatch& batch, const ContrastiveOptions& opts) {
  if (batch.empty()) throw DimensionError("contrastive_loss: empty batch");
  std::vector<Tensor> parts;
  parts.reserve(batch.size());
  for (const auto& term : batch) parts.push_back(ops::reshape(contrastive_loss(term, opts), {1, 1}));
  return ops::sum(ops::concat_rows(parts));
}

void summarize_logits(const ContrastiveTerm& term, const ContrastiveOptions& opts, LogitSummary& into) {
  const std::size_t m = term.predictions.dim(0), d = term.predictions.dim(1), n = term.train.dim(0);
  const auto& left = opts.negatives == NegativePairing::PredictionVsTrain ? term.predictions : term.targets;
  for (std::size_t i = 0; i < m; ++i) {
    double pos = 0.0;
    for (std::size_t c = 0; c < d; ++c) pos += term.predictions.at(i * d + c) * term.targets.at(i * d + c);
    into.positive_sum += pos;
    ++into.positive_count;
    for (std::size_t j = 0; j < n; ++j) {
      double neg = 0.0;
      for (std::size_t c = 0; c < d; ++c) neg += left.at(i * d + c) * term.train.at(j * d + c);
      into.negative_sum += neg;
      ++into.negative_count;
    }
  }
}

Tensor combined_loss(std::span<const std::pair<int, Tensor>> per_texture, const LossWeights& weights) {
  if (per_texture.empty()) throw DimensionError("combined_loss: no component losses");
  std::vector<Tensor> parts;
  parts.reserve(per_texture.size());
  for (const auto& [texture_id, loss] : per_texture) {
    if (loss.numel() != 1) throw DimensionError("combined_loss: component losses must be scalars");
    parts.push_back(ops::reshape(ops::scale(loss, weights.weight(texture_id)), {1, 1}));
  }
  return ops::sum(ops::concat_rows(parts));
}

}  // namespace scpc
