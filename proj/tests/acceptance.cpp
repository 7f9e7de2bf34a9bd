// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scpc/binary_io.hpp"
#include "scpc/commands.hpp"
#include "scpc/loss.hpp"
#include "scpc/ops.hpp"
#include "scpc/sequencing.hpp"
#include "scpc/training.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace scpc;
using namespace scpc::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

fs::path workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "scpc_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "scpc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out != nullptr) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

std::vector<json> pretrain_records(std::span<const Image> images, const PretrainConfig& cfg, Checkpoint& ckpt) {
  std::vector<json> records;
  ckpt = pretrain(images, cfg, [&](const MetricsRecord& m) {
    auto j = to_json(m);
    j.erase("wall_time_ms");
    records.push_back(std::move(j));
  });
  return records;
}

std::vector<Image> images_of(const std::vector<LabeledImage>& labeled) {
  std::vector<Image> out;
  for (const auto& li : labeled) out.push_back(li.image);
  return out;
}

Outcome ac1_geometry() {
  Outcome o;
  std::size_t configurations = 0;
  for (std::size_t s = 5; s <= 9; ++s) {
    for (std::size_t k = 1; k <= 3; ++k) {
      for (Direction d : {Direction::Forward, Direction::Backward}) {
        std::size_t brute = 0;
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j)
            brute += d == Direction::Forward ? (i + k + 2 <= s && j + k + 2 <= s)
                                             : (i >= 2 && j >= 2 && i + k <= s && j + k <= s);
        const auto anchors = enumerate_anchors(s, k, d);
        o.require(anchors.size() == brute, "anchor count vs brute force");
        if (d == Direction::Forward) o.require(anchors.size() == (s - k - 1) * (s - k - 1), "(s-k-1)^2 anchors");
        for (const auto& a : anchors) {
          const auto [train, target] = build_sequences(a);
          std::set<std::pair<std::size_t, std::size_t>> tr, tg;
          for (const auto& c : train.coords) tr.insert({c.row, c.col});
          for (const auto& c : target.coords) tg.insert({c.row, c.col});
          o.require(train.coords.size() == k * k && tr.size() == k * k, "|train| = k^2");
          o.require(target.coords.size() == 4 * k + 4 && tg.size() == 4 * k + 4, "|target| = 4k+4");
          for (const auto& c : tr) o.require(tg.count(c) == 0, "train and target disjoint");
        }
        ++configurations;
      }
    }
  }
  const GridSpec full = GridSpec::paper_scale();
  full.validate();
  o.require(full.grid_side() == 7, "224/56/28 gives a 7x7 grid");
  o.detail << configurations << " (s, k, direction) configurations; 224/56/28 grid " << full.grid_side() << "x"
           << full.grid_side();
  return o;
}

Outcome ac2_gradients() {
  Outcome o;
  Rng rng(3);
  double worst_op = 0.0;
  auto op = [&](const char* name, std::vector<Tensor> in, const std::function<Tensor(const std::vector<Tensor>&)>& f) {
    const double err = check_op(std::move(in), f).relative_error;
    worst_op = std::max(worst_op, err);
    o.require(err < 1e-3, name);
  };
  const std::vector<std::size_t> rows{3, 0, 3, 1};
  const std::vector<std::size_t> classes{2, 0, 3};
  op("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto& x) { return ops::add(x[0], x[1]); });
  op("sub", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto& x) { return ops::sub(x[0], x[1]); });
  op("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto& x) { return ops::mul(x[0], x[1]); });
  op("scale", {random_tensor({5}, rng)}, [](auto& x) { return ops::scale(x[0], -1.7f); });
  op("relu", {random_away_from_zero({4, 3}, rng)}, [](auto& x) { return ops::relu(x[0]); });
  op("add_row_bias", {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
     [](auto& x) { return ops::add_row_bias(x[0], x[1]); });
  op("add_channel_bias", {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng)},
     [](auto& x) { return ops::add_channel_bias(x[0], x[1]); });
  op("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
     [](auto& x) { return ops::matmul(x[0], x[1]); });
  op("matmul_nt", {random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)},
     [](auto& x) { return ops::matmul_nt(x[0], x[1]); });
  op("transpose", {random_tensor({3, 4}, rng)}, [](auto& x) { return ops::transpose(x[0]); });
  op("conv2d", {random_tensor({2, 8, 8}, rng), random_tensor({3, 2, 3, 3}, rng)},
     [](auto& x) { return ops::conv2d(x[0], x[1], 1, 1); });
  op("conv2d strided", {random_tensor({2, 2, 7, 7}, rng), random_tensor({3, 2, 3, 3}, rng)},
     [](auto& x) { return ops::conv2d(x[0], x[1], 2, 1); });
  op("mean_pool_global", {random_tensor({4, 5, 5}, rng)}, [](auto& x) { return ops::mean_pool_global(x[0]); });
  op("softmax", {random_tensor({6}, rng, -2, 2)}, [](auto& x) { return ops::softmax(x[0]); });
  op("softmax_rows", {random_tensor({3, 5}, rng, -2, 2)}, [](auto& x) { return ops::softmax_rows(x[0]); });
  op("attention", {random_tensor({2, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
     [](auto& x) { return ops::attention(x[0], x[1], x[2]); });
  op("layer_norm", {random_tensor({3, 6}, rng, -2, 2), random_tensor({6}, rng), random_tensor({6}, rng)},
     [](auto& x) { return ops::layer_norm(x[0], x[1], x[2]); });
  op("l2_normalize_rows", {random_tensor({4, 5}, rng)}, [](auto& x) { return ops::l2_normalize_rows(x[0]); });
  op("row_dot", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
     [](auto& x) { return ops::row_dot(x[0], x[1]); });
  op("cross_entropy_rows", {random_tensor({3, 4}, rng, -2, 2)},
     [&](auto& x) { return ops::cross_entropy_rows(x[0], classes); });
  op("gather_rows", {random_tensor({5, 3}, rng)}, [&](auto& x) { return ops::gather_rows(x[0], rows); });
  op("embedding", {random_tensor({5, 3}, rng)}, [&](auto& x) { return ops::embedding(x[0], rows); });
  op("concat_rows", {random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)},
     [](auto& x) { return ops::concat_rows({x[0], x[1]}); });
  op("concat_cols", {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)},
     [](auto& x) { return ops::concat_cols({x[0], x[1]}); });
  op("slice_cols", {random_tensor({3, 6}, rng)}, [](auto& x) { return ops::slice_cols(x[0], 2, 3); });
  op("reshape", {random_tensor({3, 4}, rng)}, [](auto& x) { return ops::reshape(x[0], {2, 6}); });
  op("sum", {random_tensor({3, 4}, rng)}, [](auto& x) { return ops::sum(x[0]); });
  op("mean", {random_tensor({3, 4}, rng)}, [](auto& x) { return ops::mean(x[0]); });

  // Full pretraining loss on a 5×5 grid toy, with every parameter of both
  // models. The joint directional derivative carries the 1e-2 bound.
  const PretrainConfig cfg = tiny_pretrain(2);
  const auto variants =
      prepare_variants(shape_images(1).front(), cfg.model.grid, TextureBank::standard().first(cfg.textures));
  const auto grids = prepare_grids(variants, cfg.model.grid);
  double worst_joint = 0.0;
  for (std::uint64_t seed : {5, 6, 7, 8}) {
    const ModelPair models = init_models(cfg.model, seed);
    std::vector<Tensor> params;
    for (const auto& [name, t] : all_parameters(models)) params.push_back(t);
    const auto r = check_loss(
        params,
        [&] { return image_loss(models, grids, cfg.perception, cfg.directions, cfg.weights, cfg.contrastive).combined; },
        3e-4, 0);
    worst_joint = std::max(worst_joint, r.joint);
  }
  o.require(grids.front().side() == 5, "5x5 toy grid");
  o.require(worst_joint < 1e-2, "end-to-end loss within 1e-2");
  o.detail << "worst op error " << std::scientific << std::setprecision(2) << worst_op << " (< 1e-3), end-to-end "
           << worst_joint << " (< 1e-2)";
  return o;
}

Outcome ac3_loss() {
  Outcome o;
  ContrastiveOptions unit;
  unit.temperature = 1.0f;
  const std::size_t d = 8, k = 3;
  const Tensor same = Tensor::full({1, d}, 1.0f / std::sqrt(static_cast<float>(d)));
  const Tensor ring = ops::concat_rows(std::vector<Tensor>(4 * k + 4, same));
  const Tensor block = ops::concat_rows(std::vector<Tensor>(k * k, same));
  const double uniform = contrastive_loss(ContrastiveTerm{ring, ring, block, 0}, unit).item();
  o.require(std::abs(uniform - 16.0 * std::log(10.0)) < 1e-4, "uniform logits give 16 log 10");

  const ContrastiveTerm single{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {1, 0}),
                               Tensor::from({1, 2}, {0, 1}), 0};
  const double closed = contrastive_loss(single, unit).item();
  o.require(std::abs(closed - std::log1p(std::exp(-1.0))) < 1e-6, "single negative closed form");

  // Linearity of the weighted sum in ω.
  Rng rng(3);
  std::vector<std::pair<int, Tensor>> parts;
  for (int t = 0; t < 4; ++t) {
    parts.emplace_back(t, contrastive_loss(ContrastiveTerm{random_tensor({6, 4}, rng, -1, 1, false),
                                                           random_tensor({6, 4}, rng, -1, 1, false),
                                                           random_tensor({4, 4}, rng, -1, 1, false), t},
                                           ContrastiveOptions{}));
  }
  const LossWeights base = LossWeights::uniform(3, 1.0f, 0.5f);
  const double l1 = combined_loss(parts, base).item();
  double worst = 0.0;
  for (float c : {2.0f, 3.0f, 0.1f}) {
    const double lc = combined_loss(parts, base.scaled(c)).item();
    worst = std::max(worst, std::abs(lc - c * l1) / std::abs(c * l1));
  }
  o.require(worst <= 1e-6, "linearity in the weights");
  o.detail << "16log10 error " << std::scientific << std::setprecision(2) << std::abs(uniform - 16.0 * std::log(10.0))
           << ", closed form error " << std::abs(closed - std::log1p(std::exp(-1.0))) << ", linearity " << worst;
  return o;
}

Outcome ac4_determinism() {
  Outcome o;
  const auto corpus = generate_shapes(SyntheticShapesSpec{});
  const auto images = images_of(corpus);
  PretrainConfig cfg;
  cfg.epochs = 1;
  Checkpoint a, b;
  const auto ra = pretrain_records(images, cfg, a);
  const auto rb = pretrain_records(images, cfg, b);
  save_checkpoint(workdir() / "ac4_a.scpc", a);
  save_checkpoint(workdir() / "ac4_b.scpc", b);
  o.require(ra == rb, "metrics identical");
  o.require(slurp(workdir() / "ac4_a.scpc") == slurp(workdir() / "ac4_b.scpc"), "checkpoint bytes identical");
  o.detail << images.size() << " images, " << ra.size() << " steps each, checkpoint "
           << fs::file_size(workdir() / "ac4_a.scpc") << " bytes";
  return o;
}

Outcome ac5_optimization() {
  Outcome o;
  SyntheticShapesSpec spec;
  spec.images_per_class = 2;
  const auto images = images_of(generate_shapes(spec));
  PretrainConfig cfg;  // defaults: 30 epochs
  Checkpoint ckpt;
  std::map<std::size_t, std::pair<double, std::size_t>> epochs;
  for (const auto& r : pretrain_records(images, cfg, ckpt)) {
    auto& e = epochs[r["epoch"].get<std::size_t>()];
    e.first += r["combined_loss"].get<double>();
    ++e.second;
  }
  const double first = epochs.begin()->second.first / static_cast<double>(epochs.begin()->second.second);
  const double last = epochs.rbegin()->second.first / static_cast<double>(epochs.rbegin()->second.second);
  o.require(images.size() == 8 && epochs.size() == 30, "8 images, 30 epochs");
  o.require(last < 0.7 * first, "final-epoch mean below 0.7 x epoch-1 mean");
  o.detail << std::fixed << std::setprecision(4) << "epoch 1 mean L_C " << first << ", epoch " << epochs.size()
           << " mean " << last << ", ratio " << last / first << " (< 0.7)";
  return o;
}

// Shape-bias effect: two pretraining runs that differ only in ω_t.
constexpr std::size_t kShapeBiasEpochs = 40;
constexpr std::size_t kProbeImagesPerClass = 50;
constexpr std::uint64_t kProbeCorpusSeed = 99;

Outcome ac6_shape_bias() {
  Outcome o;
  const auto corpus = generate_shapes(SyntheticShapesSpec{});
  const auto images = images_of(corpus);
  PretrainConfig with, without;
  with.epochs = without.epochs = kShapeBiasEpochs;
  without.weights = LossWeights::uniform(without.textures, 1.0f, 0.0f);
  Checkpoint a, b;
  const auto ra = pretrain_records(images, with, a);
  const auto rb = pretrain_records(images, without, b);
  o.require(ra.size() == rb.size(), "identical step counts");

  const TextureBank bank = TextureBank::standard(with.seed).first(with.textures);
  const double inv_with = texture_invariance(make_encoder(a), with.model.grid, bank, images);
  const double inv_without = texture_invariance(make_encoder(b), without.model.grid, bank, images);
  o.require(inv_with > inv_without, "(a) invariance higher with texture terms");

  SyntheticShapesSpec probe_spec;
  probe_spec.images_per_class = kProbeImagesPerClass;
  probe_spec.seed = kProbeCorpusSeed;
  const fs::path probe_dir = workdir() / "ac6_probe";
  write_corpus(probe_dir, generate_shapes(probe_spec));
  const fs::path ckpt = workdir() / "ac6_pretrained.scpc";
  save_checkpoint(ckpt, a);
  std::string pretrained_out, random_out;
  const int pc = cli({"probe", "--data", probe_dir.string(), "--checkpoint", ckpt.string()}, &pretrained_out);
  const int rc = cli({"probe", "--data", probe_dir.string(), "--set", "probe.random_init=true", "--seed",
                      std::to_string(with.seed)},
                     &random_out);
  o.require(pc == 0 && rc == 0, "probe commands succeed");
  double acc_pre = 0.0, acc_rand = 0.0;
  if (pc == 0 && rc == 0) {
    acc_pre = json::parse(pretrained_out)["test_accuracy"].get<double>();
    acc_rand = json::parse(random_out)["test_accuracy"].get<double>();
  }
  o.require(acc_pre >= acc_rand + 0.10, "(b) probe accuracy >= random init + 10pp");
  o.detail << std::fixed << std::setprecision(4) << "(a) invariance " << inv_with << " (omega_t=0.5) vs "
           << inv_without << " (omega_t=0), " << ra.size() << " steps each; (b) probe " << acc_pre
           << " pretrained vs " << acc_rand << " random init on " << 4 * kProbeImagesPerClass << " images";
  return o;
}

Outcome ac7_round_trips() {
  Outcome o;
  // Checkpoint save/load is bitwise lossless.
  Checkpoint ckpt;
  ckpt.model.sync();
  const ModelPair models = init_models(ckpt.model, 11);
  ckpt.parameters = all_parameters(models);
  ckpt.training = {{"note", "acceptance"}};
  const fs::path path = workdir() / "ac7.scpc";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path, ckpt.digest());
  bool same = back.parameters.size() == ckpt.parameters.size() && back.model == ckpt.model;
  for (std::size_t i = 0; same && i < back.parameters.size(); ++i) {
    const auto x = back.parameters[i].second.data(), y = ckpt.parameters[i].second.data();
    same = back.parameters[i].first == ckpt.parameters[i].first && std::equal(x.begin(), x.end(), y.begin());
  }
  save_checkpoint(workdir() / "ac7_again.scpc", back);
  o.require(same, "parameters bitwise equal after load");
  o.require(slurp(path) == slurp(workdir() / "ac7_again.scpc"), "re-saved file identical");

  // Golden gridcheck outputs.
  struct Golden {
    const char* file;
    GridSpec spec;
    std::size_t k;
    std::vector<Direction> dirs;
  };
  const std::vector<Golden> goldens{
      {"gridcheck_paper_k3_forward.txt", GridSpec::paper_scale(), 3, {Direction::Forward}},
      {"gridcheck_desk_k1_both.txt", GridSpec::desk_scale(), 1, {Direction::Forward, Direction::Backward}},
      {"gridcheck_s5_k3_both.txt", {24, 8, 4}, 3, {Direction::Forward, Direction::Backward}},
  };
  for (const auto& g : goldens) {
    o.require(format_gridcheck(g.spec, g.k, g.dirs) == slurp(fs::path(SCPC_GOLDEN_DIR) / g.file), g.file);
  }

  // Rerunning pretrain from its own resolved config reproduces the metrics.
  const fs::path data = workdir() / "ac7_data", first = workdir() / "ac7_run1", second = workdir() / "ac7_run2";
  const std::vector<std::string> small{"--set", "synth.images_per_class=1", "pretrain.epochs=2", "seed=5"};
  auto with = [&](std::vector<std::string> args) {
    args.insert(args.end(), small.begin(), small.end());
    return args;
  };
  o.require(cli(with({"gensynth", "--out", data.string()})) == 0, "gensynth");
  o.require(cli(with({"pretrain", "--data", data.string(), "--out", first.string()})) == 0, "first pretrain run");
  o.require(cli({"pretrain", "--config", (first / "resolved_config.json").string(), "--data", data.string(), "--out",
                 second.string()}) == 0,
            "rerun from resolved config");
  auto strip = [](const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
      auto j = json::parse(line);
      j.erase("wall_time_ms");
      out.push_back(std::move(j));
    }
    return out;
  };
  const auto m1 = strip(slurp(first / "metrics.jsonl")), m2 = strip(slurp(second / "metrics.jsonl"));
  o.require(!m1.empty() && m1 == m2, "rerun metrics identical");
  o.require(slurp(first / "checkpoint.scpc") == slurp(second / "checkpoint.scpc"), "rerun checkpoint identical");
  o.detail << "checkpoint " << fs::file_size(path) << " bytes, " << goldens.size() << " golden files, rerun "
           << m1.size() << " metrics records";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1 geometry oracle", ac1_geometry},     {"AC2 gradient integrity", ac2_gradients},
      {"AC3 loss oracles", ac3_loss},            {"AC4 determinism", ac4_determinism},
      {"AC5 optimization sanity", ac5_optimization}, {"AC6 shape-bias effect", ac6_shape_bias},
      {"AC7 format round-trips", ac7_round_trips},
  };
  bool all = true;
  for (const auto& [name, run] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o.pass = false;
      o.detail << "[exception: " << ex.what() << "]";
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << " [" << std::fixed
              << std::setprecision(1) << seconds << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
