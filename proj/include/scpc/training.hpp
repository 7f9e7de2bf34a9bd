#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "scpc/checkpoint.hpp"
#include "scpc/loss.hpp"
#include "scpc/optimizer.hpp"
#include "scpc/sequencing.hpp"
#include "scpc/synthetic.hpp"
#include "scpc/texture.hpp"

namespace scpc {

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<double> texture_losses;  // index = texture id, mean per target location
  double combined_loss = 0.0;          // Σ ω_t · texture_losses[t]
  double mean_positive_logit = 0.0;
  double mean_negative_logit = 0.0;
  double wall_time_ms = 0.0;  // the only non-deterministic field
};

nlohmann::json to_json(const MetricsRecord& m);
using MetricsSink = std::function<void(const MetricsRecord&)>;

// Writes one JSON object per line.
class JsonlMetricsWriter {
public:
  explicit JsonlMetricsWriter(std::ostream& out) : out_(out) {}
  void operator()(const MetricsRecord& m);

private:
  std::ostream& out_;
};

struct PretrainConfig {
  ModelConfig model;
  std::size_t perception = 3;
  std::vector<Direction> directions{Direction::Forward, Direction::Backward};
  std::size_t textures = 5;
  LossWeights weights = LossWeights::uniform(5, 1.0f, 0.5f);
  ContrastiveOptions contrastive;
  SgdConfig optimizer{0.005f, 0.9f, 1e-4f, true, 5.0f};
  std::size_t epochs = 30;
  std::size_t batch_size = 1;  // images per optimizer step
  bool early_stop = false;     // stop after 3 epochs with < 1e-3 relative improvement
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

// Randomly initialized encoder and autoregressor drawn from the "init" stream.
struct ModelPair {
  Encoder encoder;
  Autoregressor autoregressor;
};
ModelPair init_models(const ModelConfig& cfg, std::uint64_t seed);

NamedTensors all_parameters(const ModelPair& models);

// Original image (resized to the grid's image side) followed by its texture variants.
std::vector<Image> prepare_variants(const Image& img, const GridSpec& grid, const TextureBank& bank);
std::vector<PatchGrid> prepare_grids(std::span<const Image> variants, const GridSpec& grid);

struct ImageLoss {
  Tensor combined;                   // ω-weighted sum of the per-texture losses
  std::vector<Tensor> per_texture;   // L_t: mean over samples of the per-sample location sum
  LogitSummary logits;
  std::size_t samples = 0;
};

// Full contrastive objective for one image's grids (index = texture id).
ImageLoss image_loss(const ModelPair& models, std::span<const PatchGrid> grids, std::size_t perception,
                     std::span<const Direction> directions, const LossWeights& weights,
                     const ContrastiveOptions& opts);

// Unsupervised pretraining; returns encoder + autoregressor parameters.
Checkpoint pretrain(std::span<const Image> dataset, const PretrainConfig& cfg, const MetricsSink& sink = {});

nlohmann::json to_json(const PretrainConfig& cfg);

// Affine classifier over the mean patch representation of an image.
struct Classifier {
  Tensor weight;  // [d×classes]
  Tensor bias;    // [classes]

  static Classifier init(std::size_t dim, std::size_t classes, Rng& rng);
  std::size_t classes() const { return bias.numel(); }
  Tensor logits(const Tensor& embeddings) const;  // [n×d] -> [n×classes]
  NamedTensors parameters() const { return {{"head.weight", weight}, {"head.bias", bias}}; }
};

// Mean of the s×s patch representations of the resized image: [1×d].
Tensor image_embedding(const Encoder& encoder, const Image& img, const GridSpec& grid);
// Row-stacked embeddings without recording gradients: [n×d].
Tensor embed_images(const Encoder& encoder, std::span<const LabeledImage> images, const GridSpec& grid);

struct FinetuneConfig {
  std::size_t classes = 4;
  float lr = 0.5f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
  std::size_t epochs = 200;
  std::size_t batch_size = 0;  // 0 = full batch
  bool freeze_encoder = true;  // true = linear probe
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const FinetuneConfig& cfg);

// Trains `head` on fixed embeddings with cross-entropy; features are
// standardized internally and the standardization is folded back into the
// head so the result is a plain affine map of the raw embedding.
// Returns the training accuracy after the last epoch.
double train_head(Classifier& head, const Tensor& embeddings, std::span<const int> labels,
                  const FinetuneConfig& cfg);

double accuracy(const Classifier& head, const Tensor& embeddings, std::span<const int> labels);

// Supervised training with a classifier head. The encoder is copied from
// `pretrained`; the autoregressor is dropped. The encoder is left bitwise
// untouched when cfg.freeze_encoder is set.
Checkpoint finetune(const Checkpoint& pretrained, std::span<const LabeledImage> dataset, const FinetuneConfig& cfg,
                    const MetricsSink& sink = {});

Classifier make_classifier(const Checkpoint& ckpt);

struct ProbeReport {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Frozen-encoder linear probe fitted on `train` and scored on `test`.
ProbeReport linear_probe(const Encoder& encoder, const GridSpec& grid, std::span<const LabeledImage> train,
                         std::span<const LabeledImage> test, const FinetuneConfig& cfg);

// Mean cosine similarity between each original patch representation and the
// same patch in every texture variant, over `images`.
double texture_invariance(const Encoder& encoder, const GridSpec& grid, const TextureBank& bank,
                          std::span<const Image> images);

}  // namespace scpc
