#include <chrono>
#include <cmath>
#include <numeric>

#include "scpc/ops.hpp"
#include "scpc/training.hpp"

namespace scpc {

void FinetuneConfig::validate() const {
  if (classes < 2) throw ConfigError("classes must be at least 2");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(lr >= 0.0f)) throw ConfigError("learning rate must be non-negative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must lie in [0, 1)");
}

nlohmann::json to_json(const FinetuneConfig& cfg) {
  return {{"classes", cfg.classes},           {"lr", cfg.lr},
          {"momentum", cfg.momentum},         {"weight_decay", cfg.weight_decay},
          {"epochs", cfg.epochs},             {"batch_size", cfg.batch_size},
          {"freeze_encoder", cfg.freeze_encoder}, {"seed", cfg.seed}};
}

Classifier Classifier::init(std::size_t dim, std::size_t classes, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<float> w(dim * classes);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
  return {Tensor::from({dim, classes}, std::move(w), true), Tensor::zeros({classes}, true)};
}

Tensor Classifier::logits(const Tensor& embeddings) const {
  return ops::add_row_bias(ops::matmul(embeddings, weight), bias);
}

Tensor image_embedding(const Encoder& encoder, const Image& img, const GridSpec& grid) {
  const PatchGrid patches = extract_grid(resize(img, grid.image_side), grid);
  const RepGrid reps = encoder.encode_grid(patches);
  const std::size_t cells = reps.side * reps.side;
  const Tensor averager = Tensor::full({1, cells}, 1.0f / static_cast<float>(cells));
  return ops::matmul(averager, reps.reps);
}

Tensor embed_images(const Encoder& encoder, std::span<const LabeledImage> images, const GridSpec& grid) {
  if (images.empty()) throw ConfigError("no images to embed");
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const auto& li : images) rows.push_back(image_embedding(encoder, li.image, grid).detach());
  return ops::concat_rows(rows).detach();
}

namespace {

void check_labels(std::span<const int> labels, std::size_t classes) {
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ConfigError("label " + std::to_string(l) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

std::vector<std::size_t> as_targets(std::span<const int> labels) {
  return {labels.begin(), labels.end()};
}

}  // namespace

double accuracy(const Classifier& head, const Tensor& embeddings, std::span<const int> labels) {
  const Tensor logits = head.logits(embeddings.detach());
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits.at(i * c + j) > logits.at(i * c + best)) best = j;
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

double train_head(Classifier& head, const Tensor& embeddings, std::span<const int> labels,
                  const FinetuneConfig& cfg) {
  cfg.validate();
  const std::size_t n = embeddings.dim(0), d = embeddings.dim(1);
  if (labels.size() != n) throw DimensionError("train_head: one label per embedding required");
  if (head.classes() != cfg.classes) {
    throw ConfigError("classifier head has " + std::to_string(head.classes()) + " classes, config expects " +
                      std::to_string(cfg.classes));
  }
  check_labels(labels, cfg.classes);

  // Standardize features; the head is trained in standardized space.
  std::vector<double> mu(d, 0.0), sigma(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += embeddings.at(i * d + j) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double z = embeddings.at(i * d + j) - mu[j];
      sigma[j] += z * z / static_cast<double>(n);
    }
  for (auto& s : sigma) s = std::sqrt(s) + 1e-6;
  std::vector<float> standardized(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      standardized[i * d + j] = static_cast<float>((embeddings.at(i * d + j) - mu[j]) / sigma[j]);
  const Tensor features = Tensor::from({n, d}, std::move(standardized));

  Classifier work{head.weight.clone(), head.bias.clone()};
  work.weight.set_requires_grad(true);
  work.bias.set_requires_grad(true);
  const NamedTensors params = work.parameters();
  SgdMomentum opt({cfg.lr, cfg.momentum, cfg.weight_decay, false});
  Rng order_rng = Rng::stream(cfg.seed, "probe_order");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) order_rng.shuffle(order);
    for (std::size_t first = 0; first < n; first += batch) {
      const std::size_t count = std::min(batch, n - first);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(first),
                                    order.begin() + static_cast<std::ptrdiff_t>(first + count));
      std::vector<std::size_t> targets;
      for (auto r : rows) targets.push_back(static_cast<std::size_t>(labels[r]));
      zero_grads(params);
      Tape tape;
      TapeScope scope(tape);
      const Tensor loss = ops::scale(
          ops::cross_entropy_rows(work.logits(ops::gather_rows(features, rows)), targets), 1.0f / count);
      backward(loss);
      opt.step(params, cfg.lr);
    }
  }

  // Fold the standardization into the affine map: W' = W/σ, b' = b − Σ μ·W/σ.
  const std::size_t c = cfg.classes;
  auto w = head.weight.mutable_data();
  auto b = head.bias.mutable_data();
  for (std::size_t k = 0; k < c; ++k) {
    double shift = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double wj = work.weight.at(j * c + k) / sigma[j];
      w[j * c + k] = static_cast<float>(wj);
      shift += mu[j] * wj;
    }
    b[k] = static_cast<float>(work.bias.at(k) - shift);
  }
  return accuracy(head, embeddings, labels);
}

Classifier make_classifier(const Checkpoint& ckpt) {
  const Tensor* w = ckpt.find("head.weight");
  const Tensor* b = ckpt.find("head.bias");
  if (w == nullptr || b == nullptr) throw ConfigError("checkpoint has no classifier head");
  return {w->clone(), b->clone()};
}

Checkpoint finetune(const Checkpoint& pretrained, std::span<const LabeledImage> dataset, const FinetuneConfig& cfg,
                    const MetricsSink& sink) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("finetune: empty dataset");
  std::vector<int> labels;
  for (const auto& li : dataset) labels.push_back(li.label);
  check_labels(labels, cfg.classes);

  const GridSpec grid = pretrained.model.grid;
  Encoder encoder = make_encoder(pretrained);
  Rng head_rng = Rng::stream(cfg.seed, "head_init");
  Classifier head = pretrained.has_classifier() ? make_classifier(pretrained)
                                                : Classifier::init(pretrained.model.encoder.dim, cfg.classes, head_rng);
  if (head.classes() != cfg.classes) {
    throw ConfigError("class-count mismatch: checkpoint head has " + std::to_string(head.classes()) +
                      " classes, config expects " + std::to_string(cfg.classes));
  }
  const auto start = std::chrono::steady_clock::now();

  if (cfg.freeze_encoder) {
    const Tensor embeddings = embed_images(encoder, dataset, grid);
    train_head(head, embeddings, labels, cfg);
    if (sink) {
      MetricsRecord rec;
      rec.step = cfg.epochs;
      rec.epoch = cfg.epochs;
      rec.combined_loss = ops::cross_entropy_rows(head.logits(embeddings), as_targets(labels)).item() /
                          static_cast<double>(labels.size());
      rec.texture_losses = {rec.combined_loss};
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      sink(rec);
    }
  } else {
    NamedTensors params = encoder.parameters();
    for (auto& p : head.parameters()) params.push_back(p);
    SgdMomentum opt({cfg.lr, cfg.momentum, cfg.weight_decay, false});
    Rng order_rng = Rng::stream(cfg.seed, "data_order");
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = dataset.size();
    const std::size_t batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      order_rng.shuffle(order);
      for (std::size_t first = 0; first < n; first += batch) {
        const std::size_t count = std::min(batch, n - first);
        zero_grads(params);
        Tape tape;
        TapeScope scope(tape);
        std::vector<Tensor> rows;
        std::vector<std::size_t> targets;
        for (std::size_t i = 0; i < count; ++i) {
          const auto& li = dataset[order[first + i]];
          rows.push_back(image_embedding(encoder, li.image, grid));
          targets.push_back(static_cast<std::size_t>(li.label));
        }
        const Tensor loss =
            ops::scale(ops::cross_entropy_rows(head.logits(ops::concat_rows(rows)), targets), 1.0f / count);
        backward(loss);
        check_grads_finite(params);
        if (sink) {
          MetricsRecord rec;
          rec.step = step;
          rec.epoch = epoch;
          rec.combined_loss = loss.item();
          rec.texture_losses = {rec.combined_loss};
          rec.wall_time_ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
          sink(rec);
        }
        opt.step(params, cfg.lr);
        ++step;
      }
    }
  }

  Checkpoint out;
  out.model = pretrained.model;
  out.training = {{"finetune", to_json(cfg)}};
  if (pretrained.training.contains("perception")) out.training["pretrain"] = pretrained.training;
  for (const auto& [name, t] : encoder.parameters()) out.parameters.emplace_back(name, t.detach());
  for (const auto& [name, t] : head.parameters()) out.parameters.emplace_back(name, t.detach());
  return out;
}

ProbeReport linear_probe(const Encoder& encoder, const GridSpec& grid, std::span<const LabeledImage> train,
                         std::span<const LabeledImage> test, const FinetuneConfig& cfg) {
  std::vector<int> train_labels, test_labels;
  for (const auto& li : train) train_labels.push_back(li.label);
  for (const auto& li : test) test_labels.push_back(li.label);
  Rng head_rng = Rng::stream(cfg.seed, "head_init");
  Classifier head = Classifier::init(encoder.config().dim, cfg.classes, head_rng);
  ProbeReport report;
  report.train_accuracy = train_head(head, embed_images(encoder, train, grid), train_labels, cfg);
  if (!test.empty()) report.test_accuracy = accuracy(head, embed_images(encoder, test, grid), test_labels);
  return report;
}

}  // namespace scpc
