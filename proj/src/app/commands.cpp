#include "scpc/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "scpc/error.hpp"
#include "scpc/run_config.hpp"

namespace scpc {

namespace {

struct Options {
  std::optional<std::string> config_file;
  std::vector<std::string> sets;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string metrics;
  std::optional<std::string> data;
  std::optional<std::string> checkpoint;
  std::string image;
  std::optional<std::size_t> perception;
  std::string direction;
  bool force = false;
};

std::string kind_of(const std::exception& ex) {
  if (dynamic_cast<const ConfigMismatchError*>(&ex)) return "config_mismatch";
  if (dynamic_cast<const ConfigError*>(&ex)) return "config";
  if (dynamic_cast<const TruncationError*>(&ex)) return "truncated";
  if (dynamic_cast<const FormatError*>(&ex)) return "format";
  if (dynamic_cast<const IoError*>(&ex)) return "io";
  if (dynamic_cast<const DimensionError*>(&ex)) return "dimension";
  if (dynamic_cast<const NumericError*>(&ex)) return "numeric";
  if (dynamic_cast<const TapeError*>(&ex)) return "tape";
  return "internal";
}

void report(std::ostream& err, const std::string& command, const std::string& kind, const std::string& message) {
  std::string flat;
  for (char c : message) {
    if (c == '\n') flat += ' ';
    else if (c == '"') flat += "\\\"";
    else flat += c;
  }
  err << "error command=" << (command.empty() ? "none" : command) << " kind=" << kind << " message=\"" << flat
      << "\"\n";
}

RunConfig resolve(const Options& o, const std::string& command) {
  RunConfig cfg;
  if (o.config_file) cfg.merge_file(*o.config_file);
  if (!o.threads) {
    if (const char* env = std::getenv("SCPC_THREADS"); env != nullptr && *env != '\0') {
      char* end = nullptr;
      const unsigned long long n = std::strtoull(env, &end, 10);
      if (*end != '\0' || n == 0) throw ConfigError(std::string("SCPC_THREADS must be a positive integer, got '") + env + "'");
      cfg.set("threads", n);
    }
  }
  cfg.set_all(o.sets);
  if (o.seed) cfg.set(command == "gensynth" ? "synth.seed" : "seed", *o.seed);
  if (o.threads) cfg.set("threads", *o.threads);
  if (o.data) cfg.set("dataset", *o.data);
  if (o.checkpoint) cfg.set("checkpoint", *o.checkpoint);
  if (o.perception) cfg.set("pretrain.perception", *o.perception);
  if (!o.direction.empty()) {
    nlohmann::json dirs = nlohmann::json::array();
    if (o.direction == "both") {
      dirs = {"forward", "backward"};
    } else {
      dirs.push_back(to_string(direction_from_string(o.direction)));
    }
    cfg.set("pretrain.directions", dirs);
  }
  cfg.validate();
  return cfg;
}

std::filesystem::path require_out(const Options& o, const std::string& command) {
  if (o.out_dir.empty()) throw ConfigError(command + " requires --out");
  return o.out_dir;
}

std::filesystem::path require_file(const RunConfig& cfg, const std::string& key, const char* flag, const char* what) {
  const auto path = cfg.at(key).get<std::string>();
  if (path.empty())
    throw ConfigError(std::string("no ") + what + " given (use " + flag + " or --set " + key + "=...)");
  if (!std::filesystem::exists(path)) throw IoError(std::string(what) + " not found: " + path);
  return path;
}

std::vector<LabeledImage> load_dataset(const RunConfig& cfg) {
  const auto data = require_file(cfg, "dataset", "--data", "dataset");
  auto images = read_corpus(data);
  if (images.empty()) throw ConfigError("dataset " + data.string() + " holds no images");
  return images;
}

Checkpoint load_input_checkpoint(const RunConfig& cfg, bool force) {
  const auto path = require_file(cfg, "checkpoint", "--checkpoint", "checkpoint file");
  return load_checkpoint(path, architecture_digest(cfg.model()), force);
}

// Metrics go to --metrics (a path or "-" for standard output), else to
// <out>/metrics.jsonl.
class MetricsTarget {
public:
  MetricsTarget(const std::string& spec, const std::filesystem::path& out_dir, std::ostream& stdout_stream) {
    if (spec == "-") {
      stream_ = &stdout_stream;
      return;
    }
    const std::filesystem::path path = spec.empty() ? out_dir / "metrics.jsonl" : std::filesystem::path(spec);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    file_.open(path, std::ios::trunc);
    if (!file_) throw IoError("cannot write metrics to " + path.string());
    stream_ = &file_;
  }
  std::ostream& stream() { return *stream_; }

private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

MetricsSink make_sink(std::ostream& metrics, std::ostream& err, int verbosity) {
  return [&metrics, &err, verbosity, writer = JsonlMetricsWriter(metrics)](const MetricsRecord& m) mutable {
    writer(m);
    if (verbosity > 0) err << "epoch " << m.epoch << " step " << m.step << " loss " << m.combined_loss << '\n';
  };
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// --- commands; each returns a callable that does the work once inputs are valid.

using Work = std::function<void()>;

Work cmd_gensynth(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o, "gensynth");
  const auto dir = require_out(o, "gensynth");
  return [cfg, dir, &out] {
    const auto images = generate_shapes(cfg.synth());
    write_corpus(dir, images);
    cfg.write_resolved(dir);
    const double baseline = histogram_baseline_accuracy(images, kShapeClassCount);
    out << nlohmann::json{{"images", images.size()},
                          {"classes", kShapeClassCount},
                          {"manifest", (dir / "manifest.csv").string()},
                          {"histogram_baseline_accuracy", baseline}}
               .dump()
        << '\n';
  };
}

Work cmd_pretrain(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(o, "pretrain");
  const auto dir = require_out(o, "pretrain");
  auto labeled = load_dataset(cfg);
  return [cfg, dir, labeled = std::move(labeled), metrics = o.metrics, &out, &err] {
    std::vector<Image> images;
    for (const auto& li : labeled) images.push_back(li.image);
    cfg.write_resolved(dir);
    MetricsTarget target(metrics, dir, out);
    const Checkpoint ckpt =
        pretrain(images, cfg.pretrain(), make_sink(target.stream(), err, cfg.at("verbosity").get<int>()));
    save_checkpoint(dir / "checkpoint.scpc", ckpt);
    if (metrics != "-") {
      out << nlohmann::json{{"checkpoint", (dir / "checkpoint.scpc").string()}, {"digest", digest_hex(ckpt.digest())},
                            {"training", ckpt.training}}
                 .dump()
          << '\n';
    }
  };
}

Work cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve(o, "finetune");
  const auto dir = require_out(o, "finetune");
  auto pretrained = load_input_checkpoint(cfg, o.force);
  auto labeled = load_dataset(cfg);
  return [cfg, dir, labeled = std::move(labeled), pretrained = std::move(pretrained), metrics = o.metrics, &out,
          &err] {
    cfg.write_resolved(dir);
    MetricsTarget target(metrics, dir, out);
    const FinetuneConfig fc = cfg.finetune();
    const Checkpoint ckpt =
        finetune(pretrained, labeled, fc, make_sink(target.stream(), err, cfg.at("verbosity").get<int>()));
    save_checkpoint(dir / "checkpoint.scpc", ckpt);
    const Encoder encoder = make_encoder(ckpt);
    std::vector<int> labels;
    for (const auto& li : labeled) labels.push_back(li.label);
    const double acc = accuracy(make_classifier(ckpt), embed_images(encoder, labeled, ckpt.model.grid), labels);
    if (metrics != "-") {
      out << nlohmann::json{{"checkpoint", (dir / "checkpoint.scpc").string()}, {"train_accuracy", acc}}.dump()
          << '\n';
    }
  };
}

// Stratified split: the last round(fraction·n_c) images of every class are held out.
void split_dataset(std::span<const LabeledImage> all, double fraction, std::vector<LabeledImage>& train,
                   std::vector<LabeledImage>& test) {
  std::map<int, std::vector<const LabeledImage*>> by_class;
  for (const auto& li : all) by_class[li.label].push_back(&li);
  for (const auto& [label, members] : by_class) {
    const auto held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
    const std::size_t keep = members.size() - std::min(held, members.size() - 1);
    for (std::size_t i = 0; i < members.size(); ++i) (i < keep ? train : test).push_back(*members[i]);
  }
}

Work cmd_probe(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o, "probe");
  const bool random_init = cfg.at("probe.random_init").get<bool>();
  std::optional<Checkpoint> ckpt;
  if (!random_init) ckpt = load_input_checkpoint(cfg, o.force);
  auto labeled = load_dataset(cfg);
  return [cfg, labeled = std::move(labeled), ckpt = std::move(ckpt), random_init, out_dir = o.out_dir, &out] {
    const ModelConfig model = ckpt ? ckpt->model : cfg.model();
    const Encoder encoder = ckpt ? make_encoder(*ckpt) : init_models(model, cfg.pretrain().seed).encoder;
    std::vector<LabeledImage> train, test;
    split_dataset(labeled, cfg.at("probe.test_fraction").get<double>(), train, test);
    FinetuneConfig fc = cfg.finetune();
    fc.freeze_encoder = true;
    const ProbeReport report = linear_probe(encoder, model.grid, train, test, fc);
    const nlohmann::json result{{"encoder", random_init ? "random" : "pretrained"},
                                {"train_images", train.size()},
                                {"test_images", test.size()},
                                {"train_accuracy", report.train_accuracy},
                                {"test_accuracy", report.test_accuracy}};
    if (!out_dir.empty()) {
      cfg.write_resolved(out_dir);
      write_json(std::filesystem::path(out_dir) / "probe.json", result);
    }
    out << result.dump() << '\n';
  };
}

Work cmd_gridcheck(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o, "gridcheck");
  const GridSpec grid = cfg.model().grid;
  const PretrainConfig pc = cfg.pretrain();
  if (!o.image.empty()) {
    if (!std::filesystem::exists(o.image)) throw IoError("image not found: " + o.image);
    const Image img = read_image(o.image);
    extract_grid(resize(img, grid.image_side), grid);
  }
  return [grid, pc, &out] { out << format_gridcheck(grid, pc.perception, pc.directions); };
}

Work cmd_texcheck(const Options& o, std::ostream& out) {
  const RunConfig cfg = resolve(o, "texcheck");
  const auto dir = require_out(o, "texcheck");
  std::optional<Image> source;
  if (!o.image.empty()) {
    if (!std::filesystem::exists(o.image)) throw IoError("image not found: " + o.image);
    source = read_image(o.image);
  }
  return [cfg, dir, source, &out] {
    const GridSpec grid = cfg.model().grid;
    SyntheticShapesSpec spec = cfg.synth();
    spec.images_per_class = 1;
    const Image img = source ? *source : generate_shapes(spec).front().image;
    const TextureBank bank = TextureBank::standard(cfg.pretrain().seed).first(cfg.pretrain().textures);
    const auto variants = prepare_variants(img, grid, bank);
    std::filesystem::create_directories(dir);
    cfg.write_resolved(dir);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < variants.size(); ++t) {
      const std::string kind = t == 0 ? "original" : to_string(bank.at(static_cast<int>(t)).kind);
      const auto file = dir / ("texture_" + std::to_string(t) + "_" + kind + ".png");
      write_png(file, variants[t]);
      rows.push_back({{"texture_id", t},
                      {"kind", kind},
                      {"file", file.string()},
                      {"edge_overlap", edge_overlap(variants[0], variants[t], 0.25f)},
                      {"mean_abs_difference", mean_abs_difference(variants[0], variants[t])}});
    }
    out << rows.dump() << '\n';
  };
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_file, "JSON config file merged over the defaults");
  sub->add_option("--set", o.sets, "Override a config value: dotted.key=value (repeatable)")->take_all();
  sub->add_option("--out", o.out_dir, "Output directory");
  sub->add_option("--seed", o.seed, "Root seed of every random stream");
  sub->add_option("--threads", o.threads, "Worker threads for pretraining (env SCPC_THREADS)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shape-biased contrastive predictive coding on image patch grids"};
  app.require_subcommand(1);
  Options o;

  auto* gensynth = app.add_subcommand("gensynth", "Write the synthetic shapes corpus (IMGF + manifest.csv)");
  add_common(gensynth, o);

  auto* pre = app.add_subcommand("pretrain", "Unsupervised contrastive pretraining");
  add_common(pre, o);
  pre->add_option("--data", o.data, "Corpus manifest or directory");
  pre->add_option("--metrics", o.metrics, "Metrics JSONL path, or - for standard output");

  auto* fine = app.add_subcommand("finetune", "Supervised training of a classifier head");
  add_common(fine, o);
  fine->add_option("--data", o.data, "Labeled corpus manifest or directory");
  fine->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint");
  fine->add_option("--metrics", o.metrics, "Metrics JSONL path, or - for standard output");
  fine->add_flag("--force", o.force, "Load a checkpoint whose architecture digest differs");

  auto* probe = app.add_subcommand("probe", "Linear probe of a frozen encoder on a held-out split");
  add_common(probe, o);
  probe->add_option("--data", o.data, "Labeled corpus manifest or directory");
  probe->add_option("--checkpoint", o.checkpoint, "Checkpoint holding the encoder");
  probe->add_flag("--force", o.force, "Load a checkpoint whose architecture digest differs");

  auto* grid = app.add_subcommand("gridcheck", "Print anchors and train/target sequences of a grid");
  add_common(grid, o);
  grid->add_option("--image", o.image, "Optional image to lay the grid over");
  grid->add_option("-k,--perception", o.perception, "Perception size k");
  grid->add_option("--direction", o.direction, "forward, backward or both");

  auto* tex = app.add_subcommand("texcheck", "Write the texture variants of an image as PNG");
  add_common(tex, o);
  tex->add_option("--image", o.image, "Source image (default: first synthetic shape)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report(err, "", "usage", e.what());
    return kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Work work;
  try {
    if (command == "gensynth") work = cmd_gensynth(o, out);
    else if (command == "pretrain") work = cmd_pretrain(o, out, err);
    else if (command == "finetune") work = cmd_finetune(o, out, err);
    else if (command == "probe") work = cmd_probe(o, out);
    else if (command == "gridcheck") work = cmd_gridcheck(o, out);
    else work = cmd_texcheck(o, out);
  } catch (const std::exception& ex) {
    report(err, command, kind_of(ex), ex.what());
    return kExitUsage;
  }
  try {
    work();
  } catch (const std::exception& ex) {
    report(err, command, kind_of(ex), ex.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace scpc
