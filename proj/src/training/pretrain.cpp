#include <chrono>
#include <cmath>
#include <thread>

#include "scpc/ops.hpp"
#include "scpc/training.hpp"

namespace scpc {

void PretrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (threads < 1) throw ConfigError("threads must be at least 1");
  if (directions.empty()) throw ConfigError("at least one scan direction is required");
  if (perception < 1) throw ConfigError("perception k must be at least 1");
  if (perception + 2 > model.grid.grid_side()) {
    throw ConfigError("perception " + std::to_string(perception) + " leaves no anchors on a " +
                      std::to_string(model.grid.grid_side()) + "x" + std::to_string(model.grid.grid_side()) +
                      " grid (need grid side >= k+2)");
  }
  if (weights.textures.size() != textures) {
    throw ConfigError("expected " + std::to_string(textures) + " texture weights, got " +
                      std::to_string(weights.textures.size()));
  }
  weights.validate();
  if (!(contrastive.temperature > 0.0f)) throw ConfigError("temperature must be positive");
  if (!(optimizer.lr >= 0.0f)) throw ConfigError("learning rate must be non-negative");
  optimizer.validate();
}

nlohmann::json to_json(const PretrainConfig& cfg) {
  nlohmann::json dirs = nlohmann::json::array();
  for (auto d : cfg.directions) dirs.push_back(to_string(d));
  return {
      {"perception", cfg.perception},
      {"directions", dirs},
      {"textures", cfg.textures},
      {"omega0", cfg.weights.same_image},
      {"omega_textures", cfg.weights.textures},
      {"temperature", cfg.contrastive.temperature},
      {"negatives", cfg.contrastive.negatives == NegativePairing::PredictionVsTrain ? "prediction" : "target"},
      {"texture_negatives", to_string(cfg.contrastive.texture_negatives)},
      {"lr", cfg.optimizer.lr},
      {"momentum", cfg.optimizer.momentum},
      {"weight_decay", cfg.optimizer.weight_decay},
      {"cosine_decay", cfg.optimizer.cosine_decay},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"grad_clip", cfg.optimizer.grad_clip},
      {"early_stop", cfg.early_stop},
      {"seed", cfg.seed},
  };
}

ModelPair init_models(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init");
  Encoder enc(cfg.encoder, rng);
  Autoregressor ar(cfg.autoregressor, rng);
  return {std::move(enc), std::move(ar)};
}

NamedTensors all_parameters(const ModelPair& models) {
  NamedTensors out = models.encoder.parameters();
  for (auto& p : models.autoregressor.parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<Image> prepare_variants(const Image& img, const GridSpec& grid, const TextureBank& bank) {
  return make_variants(resize(img, grid.image_side), bank.transforms());
}

std::vector<PatchGrid> prepare_grids(std::span<const Image> variants, const GridSpec& grid) {
  std::vector<PatchGrid> grids;
  grids.reserve(variants.size());
  for (std::size_t t = 0; t < variants.size(); ++t) grids.push_back(extract_grid(variants[t], grid, static_cast<int>(t)));
  return grids;
}

ImageLoss image_loss(const ModelPair& models, std::span<const PatchGrid> grids, std::size_t perception,
                     std::span<const Direction> directions, const LossWeights& weights,
                     const ContrastiveOptions& opts) {
  const auto samples = make_samples(grids, perception, directions);
  if (samples.empty()) throw ConfigError("no valid anchors for this grid and perception");
  const std::size_t s = grids.front().side();
  std::vector<RepGrid> reps;
  reps.reserve(grids.size());
  for (const auto& g : grids) reps.push_back(models.encoder.encode_grid(g));

  std::vector<std::vector<Tensor>> per_texture_terms(grids.size());
  ImageLoss result;
  Tensor predictions, train_reps;
  const AnchorSpec* current = nullptr;
  for (const auto& sample : samples) {
    // Samples are grouped by anchor; the prediction is shared by its variants.
    if (current == nullptr || !(*current == sample.anchor)) {
      current = &sample.anchor;
      train_reps = ops::gather_rows(reps[0].reps, sample.train.flat(s));
      predictions = models.autoregressor.predict(train_reps, sample.train.coords, sample.target.coords);
    }
    const auto t = static_cast<std::size_t>(sample.texture_id);
    Tensor negatives = train_reps;
    if (t > 0 && opts.texture_negatives != TextureNegatives::Original) {
      const Tensor variant = ops::gather_rows(reps[t].reps, sample.train.flat(s));
      negatives = opts.texture_negatives == TextureNegatives::Variant ? variant
                                                                      : ops::concat_rows({train_reps, variant});
    }
    ContrastiveTerm term{predictions, ops::gather_rows(reps[t].reps, sample.target.flat(s)), negatives,
                         sample.texture_id};
    per_texture_terms[t].push_back(ops::reshape(contrastive_loss(term, opts), {1, 1}));
    summarize_logits(term, opts, result.logits);
    ++result.samples;
  }

  std::vector<std::pair<int, Tensor>> components;
  for (std::size_t t = 0; t < per_texture_terms.size(); ++t) {
    const Tensor lt = ops::mean(ops::concat_rows(per_texture_terms[t]));
    result.per_texture.push_back(lt);
    components.emplace_back(static_cast<int>(t), lt);
  }
  result.combined = combined_loss(components, weights);
  return result;
}

namespace {

struct ImageOutcome {
  std::vector<double> texture_losses;
  LogitSummary logits;
};

// Forward + backward for one image on a private replica; gradients land in
// the replica's parameters.
ImageOutcome run_image(const ModelPair& replica, std::span<const PatchGrid> grids, const PretrainConfig& cfg,
                       float loss_scale) {
  Tape tape;
  TapeScope scope(tape);
  ImageLoss loss = image_loss(replica, grids, cfg.perception, cfg.directions, cfg.weights, cfg.contrastive);
  const Tensor scaled = ops::scale(loss.combined, loss_scale);
  backward(scaled);
  ImageOutcome out;
  const double locations = static_cast<double>(4 * cfg.perception + 4);
  for (const auto& lt : loss.per_texture) out.texture_losses.push_back(lt.item() / locations);
  out.logits = loss.logits;
  return out;
}

ModelPair replicate(const ModelPair& m) { return {m.encoder.replicate(), m.autoregressor.replicate()}; }

}  // namespace

Checkpoint pretrain(std::span<const Image> dataset, const PretrainConfig& cfg, const MetricsSink& sink) {
  if (dataset.empty()) throw ConfigError("pretrain: empty dataset");
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const TextureBank bank = TextureBank::standard(cfg.seed).first(cfg.textures);

  std::vector<std::vector<Image>> variants;
  variants.reserve(dataset.size());
  for (const auto& img : dataset) variants.push_back(prepare_variants(img, cfg.model.grid, bank));

  ModelPair models = init_models(cfg.model, cfg.seed);
  const NamedTensors params = all_parameters(models);
  SgdMomentum optimizer(cfg.optimizer);
  Rng order_rng = Rng::stream(cfg.seed, "data_order");

  const std::size_t steps_per_epoch = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::size_t step = 0;
  std::size_t epochs_done = 0;
  double previous_epoch_loss = 0.0;
  std::size_t stalled_epochs = 0;

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t first = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      const float lr = scheduled_lr(cfg.optimizer, step, total_steps);
      const float loss_scale = 1.0f / static_cast<float>(count);

      std::vector<ModelPair> replicas;
      std::vector<ImageOutcome> outcomes(count);
      for (std::size_t i = 0; i < count; ++i) replicas.push_back(replicate(models));
      std::vector<std::string> failures(count);
      auto work = [&](std::size_t i) {
        try {
          const std::size_t idx = order[first + i];
          const auto grids = prepare_grids(variants[idx], cfg.model.grid);
          outcomes[i] = run_image(replicas[i], grids, cfg, loss_scale);
        } catch (const std::exception& ex) {
          failures[i] = ex.what();
        }
      };
      const std::size_t workers = std::min(cfg.threads, count);
      if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) work(i);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) work(i);
          });
        }
        for (auto& t : pool) t.join();
      }
      for (std::size_t i = 0; i < count; ++i) {
        if (!failures[i].empty()) {
          throw NumericError("pretrain aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                             ", image " + std::to_string(order[first + i]) + ", lr " + std::to_string(lr) + ": " +
                             failures[i]);
        }
      }

      zero_grads(params);
      for (const auto& r : replicas) merge_grads(all_parameters(r), params);
      try {
        check_grads_finite(params);
      } catch (const NumericError& ex) {
        throw NumericError("pretrain aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ", lr " + std::to_string(lr) + ": " + ex.what());
      }

      MetricsRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.texture_losses.assign(cfg.textures + 1, 0.0);
      LogitSummary logits;
      for (const auto& o : outcomes) {
        for (std::size_t t = 0; t < o.texture_losses.size(); ++t) rec.texture_losses[t] += o.texture_losses[t] / count;
        logits.positive_sum += o.logits.positive_sum;
        logits.positive_count += o.logits.positive_count;
        logits.negative_sum += o.logits.negative_sum;
        logits.negative_count += o.logits.negative_count;
      }
      for (std::size_t t = 0; t < rec.texture_losses.size(); ++t) {
        rec.combined_loss += cfg.weights.weight(static_cast<int>(t)) * rec.texture_losses[t];
      }
      rec.mean_positive_logit = logits.positive_sum / static_cast<double>(std::max<std::size_t>(1, logits.positive_count));
      rec.mean_negative_logit = logits.negative_sum / static_cast<double>(std::max<std::size_t>(1, logits.negative_count));
      if (!std::isfinite(rec.combined_loss)) {
        throw NumericError("pretrain aborted at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": non-finite loss");
      }
      rec.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      epoch_loss += rec.combined_loss / static_cast<double>(steps_per_epoch);
      if (sink) sink(rec);

      optimizer.step(params, lr);
      ++step;
    }
    epochs_done = epoch;
    if (cfg.early_stop) {
      if (epoch > 1 && previous_epoch_loss > 0.0 &&
          (previous_epoch_loss - epoch_loss) / previous_epoch_loss < 1e-3) {
        ++stalled_epochs;
      } else {
        stalled_epochs = 0;
      }
      previous_epoch_loss = epoch_loss;
      if (stalled_epochs >= 3) break;
    }
  }

  Checkpoint ckpt;
  ckpt.model = cfg.model;
  ckpt.training = to_json(cfg);
  ckpt.training["epochs_completed"] = epochs_done;
  ckpt.training["steps"] = step;
  for (const auto& [name, t] : params) ckpt.parameters.emplace_back(name, t.detach());
  return ckpt;
}

double texture_invariance(const Encoder& encoder, const GridSpec& grid, const TextureBank& bank,
                          std::span<const Image> images) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& img : images) {
    const auto variants = prepare_variants(img, grid, bank);
    const auto grids = prepare_grids(variants, grid);
    const RepGrid original = encoder.encode_grid(grids[0]);
    for (std::size_t t = 1; t < grids.size(); ++t) {
      const RepGrid textured = encoder.encode_grid(grids[t]);
      for (std::size_t r = 0; r < original.side; ++r)
        for (std::size_t c = 0; c < original.side; ++c) {
          const auto a = original.at(r, c), b = textured.at(r, c);
          double dot = 0.0, na = 0.0, nb = 0.0;
          for (std::size_t i = 0; i < a.size(); ++i) {
            dot += static_cast<double>(a[i]) * b[i];
            na += static_cast<double>(a[i]) * a[i];
            nb += static_cast<double>(b[i]) * b[i];
          }
          total += (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
          ++count;
        }
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace scpc
