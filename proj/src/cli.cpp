#include "mcanet/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <sstream>
#include <spdlog/spdlog.h>

#include "mcanet/cam.hpp"
#include "mcanet/checkpoint.hpp"
#include "mcanet/errors.hpp"
#include "mcanet/gradcheck_suite.hpp"
#include "mcanet/training.hpp"

namespace mcanet {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

Manifest require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw UsageError("data.manifest is required (pass --manifest or --data.manifest)");
  if (!fs::exists(cfg.manifest)) throw UsageError("manifest not found: " + cfg.manifest);
  return load_manifest(cfg.manifest);
}

fs::path require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw UsageError("run.checkpoint is required (pass --checkpoint)");
  if (!fs::exists(cfg.checkpoint)) throw UsageError("checkpoint not found: " + cfg.checkpoint);
  return cfg.checkpoint;
}

RunConfig with_classes(RunConfig cfg, const Manifest& m) {
  cfg.head.num_classes = m.num_classes();
  cfg.validate();
  return cfg;
}

Manifest select_split(const Manifest& m, const RunConfig& cfg, Split split) {
  if (split == Split::kAll) return m;
  auto [train, test] = split_train_test(m, cfg.train_fraction, cfg.seed);
  return split == Split::kTrain ? train : test;
}

double split_map(Model<float>& model, const std::vector<LabeledSample<float>>& samples,
                 const std::vector<std::string>& names) {
  std::span<const LabeledSample<float>> s(samples);
  return mean_average_precision(make_prediction_set(predict_scores(model, s), stack_labels(s), names));
}

EvalReport evaluate(Model<float>& model, const std::vector<LabeledSample<float>>& samples,
                    const std::vector<std::string>& names, double threshold) {
  std::span<const LabeledSample<float>> s(samples);
  return per_class_report(make_prediction_set(predict_scores(model, s), stack_labels(s), names), threshold);
}

std::string epoch_name(std::size_t epoch) { return fmt::format("epoch_{:03d}.mcan", epoch); }

}  // namespace

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  if (text == "all") return Split::kAll;
  throw UsageError("unknown split '" + std::string(text) + "' (expected train|test|all)");
}

SynthResult cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  SynthOptions o;
  o.out_dir = out_dir;
  o.n_images = cfg.synth_images;
  o.image_size = cfg.backbone.input_size;
  o.num_classes = cfg.head.num_classes;
  o.seed = cfg.seed;
  o.presence_probability = cfg.synth_presence;
  SynthResult r = generate_synthetic_dataset(o);
  out << "wrote " << r.manifest.rows.size() << " images (" << o.image_size << "x" << o.image_size << ", "
      << o.num_classes << " classes) and " << r.boxes.size() << " boxes to " << out_dir.string() << "\n";
  return r;
}

TrainSummary cmd_train(const RunConfig& base, const std::optional<fs::path>& resume, std::ostream& out) {
  const Manifest manifest = require_manifest(base);
  const RunConfig cfg = with_classes(base, manifest);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir / "checkpoints");

  auto [train_m, test_m] = split_train_test(manifest, cfg.train_fraction, cfg.seed);
  const auto train = load_samples<float>(train_m, cfg.backbone.input_size);
  const auto test = load_samples<float>(test_m, cfg.backbone.input_size);

  Model<float> model(cfg.model(), cfg.seed);
  Trainer<float> trainer(model, std::span<const LabeledSample<float>>(train), cfg.trainer_options());

  if (resume) {
    const CheckpointMeta meta = load_checkpoint(model, *resume);
    if (meta.seed != cfg.seed) {
      throw UsageError(fmt::format("checkpoint seed {} differs from run.seed {}", meta.seed, cfg.seed));
    }
    trainer.set_position(meta.epoch, meta.step);
    out << "resumed from " << resume->string() << " at epoch " << meta.epoch << "\n";
  }
  write_text(dir / "config.txt", cfg.to_text());
  write_text(dir / "seed.txt", std::to_string(cfg.seed) + "\n");

  std::ofstream log(dir / "loss_log.csv", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "loss_log.csv").string());
  if (!resume) log << "epoch,step,lr_head,lr_backbone,loss\n";
  trainer.on_step = [&](const StepRecord& r) {
    log << fmt::format("{},{},{:.9g},{:.9g},{:.9g}\n", r.epoch, r.step, r.lr_head, r.lr_backbone, r.loss);
  };

  TrainSummary summary;
  const auto start = std::chrono::steady_clock::now();
  while (trainer.epoch() < cfg.optim.epochs) {
    EpochStats s = trainer.train_epoch();
    log.flush();
    const CheckpointMeta meta{trainer.epoch(), trainer.global_step(), cfg.seed, cfg.to_text()};
    save_checkpoint(model, meta, dir / "checkpoints" / epoch_name(trainer.epoch()));
    out << fmt::format("epoch {:3d}  loss {:.5f}  {:.0f} img/s\n", trainer.epoch(), s.mean_loss,
                       s.images_per_second);
    summary.epochs.push_back(std::move(s));
  }
  summary.epochs_run = summary.epochs.size();
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary.final_checkpoint = dir / "model.mcan";
  save_checkpoint(model, {trainer.epoch(), trainer.global_step(), cfg.seed, cfg.to_text()},
                  summary.final_checkpoint);

  summary.train_map = split_map(model, train, manifest.class_names);
  summary.test_report = evaluate(model, test, manifest.class_names, cfg.threshold);
  summary.test_map = summary.test_report.map;
  const std::string header = fmt::format("train mAP {:.4f}\ntest mAP {:.4f}\n\n", summary.train_map, summary.test_map);
  write_text(dir / "report.txt", header + summary.test_report.to_table());
  write_text(dir / "report.csv", summary.test_report.to_csv());
  out << header << summary.test_report.to_table();
  return summary;
}

EvalReport cmd_eval(const RunConfig& base, Split split, std::ostream& out) {
  const fs::path ckpt = require_checkpoint(base);
  const Manifest manifest = require_manifest(base);
  const RunConfig cfg = with_classes(base, manifest);
  Model<float> model(cfg.model(), cfg.seed);
  load_checkpoint(model, ckpt);
  const auto samples = load_samples<float>(select_split(manifest, cfg, split), cfg.backbone.input_size);
  EvalReport report = evaluate(model, samples, manifest.class_names, cfg.threshold);
  const std::string stem = split == Split::kTrain ? "eval_train" : split == Split::kTest ? "eval_test" : "eval_all";
  fs::create_directories(cfg.out_dir);
  write_text(fs::path(cfg.out_dir) / (stem + ".txt"), report.to_table());
  write_text(fs::path(cfg.out_dir) / (stem + ".csv"), report.to_csv());
  out << report.to_table();
  return report;
}

CamSummary cmd_cam(const RunConfig& base, const std::vector<std::string>& images,
                   const std::vector<std::string>& classes, std::ostream& out) {
  const fs::path ckpt = require_checkpoint(base);
  const Manifest manifest = require_manifest(base);
  const RunConfig cfg = with_classes(base, manifest);
  Model<float> model(cfg.model(), cfg.seed);
  load_checkpoint(model, ckpt);

  std::vector<ManifestRow> rows;
  if (images.empty()) {
    rows = select_split(manifest, cfg, Split::kTest).rows;
  } else {
    for (const auto& path : images) {
      auto it = std::find_if(manifest.rows.begin(), manifest.rows.end(),
                             [&](const ManifestRow& r) { return r.image_path == path; });
      if (it == manifest.rows.end()) throw UsageError("image '" + path + "' is not in the manifest");
      rows.push_back(*it);
    }
  }
  std::vector<std::size_t> class_ids;
  for (const auto& name : classes) {
    auto it = std::find(manifest.class_names.begin(), manifest.class_names.end(), name);
    if (it == manifest.class_names.end()) throw UsageError("unknown class '" + name + "'");
    class_ids.push_back(static_cast<std::size_t>(it - manifest.class_names.begin()));
  }

  fs::path boxes_path = cfg.boxes;
  if (boxes_path.empty() && fs::exists(manifest.base_dir / "boxes.csv")) boxes_path = manifest.base_dir / "boxes.csv";
  const std::vector<ShapeBox> boxes = boxes_path.empty() ? std::vector<ShapeBox>{} : load_boxes(boxes_path);

  const fs::path dir = fs::path(cfg.out_dir) / "cam";
  fs::create_directories(dir);
  const std::size_t size = cfg.backbone.input_size;
  CamSummary summary;
  for (const auto& row : rows) {
    const RgbImage original = read_ppm(manifest.resolve(row));
    Tensor<float> image = image_to_tensor<float>(original);
    if (original.width != size || original.height != size) image = resize_bilinear(image, size, size);
    const RgbImage base_image = tensor_to_image(image);

    std::vector<std::size_t> wanted = class_ids;
    if (wanted.empty()) {
      for (std::size_t c = 0; c < row.labels.size(); ++c)
        if (row.labels[c]) wanted.push_back(c);
    }
    const std::string stem = fs::path(row.image_path).stem().string();
    for (std::size_t c : wanted) {
      const ActivationMap cam = compute_cam(model, image, c);
      const fs::path file = dir / cam_filename(stem, manifest.class_names[c]);
      render_heatmap(cam, base_image, file);
      summary.written.push_back(file);
      for (const auto& b : boxes) {
        if (b.image_path != row.image_path || b.class_name != manifest.class_names[c]) continue;
        ShapeBox scaled = b;
        scaled.xmin = b.xmin * size / original.width;
        scaled.xmax = b.xmax * size / original.width;
        scaled.ymin = b.ymin * size / original.height;
        scaled.ymax = b.ymax * size / original.height;
        ++summary.scored;
        summary.hits += localization_score(cam, scaled);
      }
    }
  }
  out << "wrote " << summary.written.size() << " heatmaps to " << dir.string() << "\n";
  if (summary.scored) {
    out << fmt::format("localization: {}/{} peaks inside the box ({:.3f})\n", summary.hits, summary.scored,
                       summary.hit_rate());
  }
  return summary;
}

bool cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  bool ok = true;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& c : gradcheck_suite(cfg.seed)) {
    const GradCheckReport r = c.run();
    const bool pass = r.passed(kGradCheckTolerance);
    ok = ok && pass;
    out << fmt::format("{} {:<42} max rel err {:.3e}  coords {:5d}", pass ? "PASS" : "FAIL", c.name, r.worst(),
                       r.coords_checked);
    if (std::isfinite(r.kink_margin)) out << fmt::format("  relu margin {:.2e}", r.kink_margin);
    if (r.kink_crossings) out << fmt::format("  kink crossings {}", r.kink_crossings);
    out << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out << fmt::format("{} ({:.1f} s, tolerance {:.0e})\n", ok ? "all gradients match" : "gradient check FAILED",
                     secs, kGradCheckTolerance);
  return ok;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale backbone + class-specific residual attention for multi-label images"};
  app.require_subcommand(1);

  std::string config_path;
  std::string synth_out = "data";
  std::optional<std::size_t> n, classes_n, size;
  std::string manifest, checkpoint, out_dir, resume, split = "test";
  std::vector<std::string> images, class_names;

  auto common = [&](CLI::App* sub) {
    sub->allow_extras();
    sub->add_option("--config", config_path, "key = value config file");
    return sub;
  };
  auto* synth = common(app.add_subcommand("synth", "Write a synthetic shape dataset"));
  synth->add_option("--out", synth_out, "dataset directory");
  synth->add_option("--n", n, "number of images (data.synth_images)");
  synth->add_option("--classes", classes_n, "number of classes (csra.classes)");
  synth->add_option("--size", size, "image side in pixels (backbone.input_size)");

  auto* train = common(app.add_subcommand("train", "Train and write a run directory"));
  train->add_option("--manifest", manifest, "manifest CSV (data.manifest)");
  train->add_option("--out", out_dir, "run directory (run.out_dir)");
  train->add_option("--resume", resume, "checkpoint to continue from");

  auto* eval = common(app.add_subcommand("eval", "Evaluate a checkpoint"));
  eval->add_option("--checkpoint", checkpoint, "checkpoint (run.checkpoint)");
  eval->add_option("--manifest", manifest, "manifest CSV (data.manifest)");
  eval->add_option("--split", split, "train|test|all");
  eval->add_option("--out", out_dir, "output directory (run.out_dir)");

  auto* cam = common(app.add_subcommand("cam", "Export class activation heatmaps"));
  cam->add_option("--checkpoint", checkpoint, "checkpoint (run.checkpoint)");
  cam->add_option("--manifest", manifest, "manifest CSV (data.manifest)");
  cam->add_option("--images", images, "manifest image paths (default: test split)");
  cam->add_option("--class", class_names, "class names (default: classes present in each image)");
  cam->add_option("--out", out_dir, "output directory (run.out_dir)");

  auto* grad = common(app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op"));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Overrides flags = parse_override_flags(sub->remaining());
    auto alias = [&](const std::string& key, const std::string& value) { flags.emplace_back(key, value); };
    if (n) alias("data.synth_images", std::to_string(*n));
    if (classes_n) alias("csra.classes", std::to_string(*classes_n));
    if (size) alias("backbone.input_size", std::to_string(*size));
    if (!manifest.empty()) alias("data.manifest", manifest);
    if (!checkpoint.empty()) alias("run.checkpoint", checkpoint);
    if (!out_dir.empty()) alias("run.out_dir", out_dir);

    std::string text = config_path.empty() ? std::string() : read_text(config_path);
    if (sub == eval || sub == cam) {
      // The checkpoint's own configuration fixes the architecture and split;
      // the config file and flags refine it.
      const RunConfig probe = parse_config(text, flags);
      const CheckpointMeta meta = read_checkpoint_meta(read_archive(require_checkpoint(probe)));
      text = meta.config_text + "\n" + text;
    }
    const RunConfig cfg = parse_config(text, flags);

    if (sub == synth) {
      cmd_synth(cfg, synth_out, out);
    } else if (sub == train) {
      cmd_train(cfg, resume.empty() ? std::nullopt : std::optional<fs::path>(resume), out);
    } else if (sub == eval) {
      cmd_eval(cfg, parse_split(split), out);
    } else if (sub == cam) {
      cmd_cam(cfg, images, class_names, out);
    } else if (sub == grad) {
      if (!cmd_gradcheck(cfg, out)) return kExitAcceptance;
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace mcanet
