#include "mrdn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "mrdn/checkpoint.hpp"
#include "mrdn/config.hpp"
#include "mrdn/data.hpp"
#include "mrdn/error.hpp"
#include "mrdn/metrics.hpp"
#include "mrdn/train.hpp"

namespace fs = std::filesystem;

namespace mrdn {

ImageRGB super_resolve(const Generator<float>& gen, const ImageRGB& lr, int scale) {
  const int stages = recurrence_depth(scale);
  NoGradGuard guard;
  ImageRGB cur = lr;
  for (int s = 0; s < stages; ++s) {
    cur = quantized(from_tensor(gen.forward_2x(to_tensor<float>(cur))));
  }
  return cur;
}

Generator<float> load_generator(const fs::path& ckpt, const ModelConfig& cfg) {
  Generator<float> gen(cfg, 0);
  const std::vector<std::string> ignore{"disc."};
  load_params(gen.params(), Checkpoint::load(ckpt), ignore);
  return gen;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

bool is_image_file(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  return fs::is_regular_file(p) && (ext == ".png" || ext == ".ppm");
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string alpha_dir(double alpha) { return "alpha_" + fixed(alpha, 3); }

// Model selection shared by infer and curve.
struct ModelChoice {
  bool tiny = false;
  std::string config;

  void add_to(CLI::App* cmd) {
    cmd->add_flag("--tiny", tiny, "Use the small test architecture");
    cmd->add_option("--config", config, "Run config whose [model] section describes the architecture");
  }

  ModelConfig resolve(int scale) const {
    ModelConfig cfg = ModelConfig::standard();
    if (!config.empty()) cfg = RunConfig::load(config).model;
    if (tiny) cfg = ModelConfig::tiny();
    cfg.scale = scale;
    cfg.validate();
    return cfg;
  }
};

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool tiny = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = RunConfig::load(a.config);
  if (a.tiny) cfg.apply_tiny();
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) {
    cfg.out = a.out;
    cfg.log.clear();
  }
  cfg.model.scale = cfg.plan.effective_scale();

  // Every input is checked before any work starts.
  if (cfg.manifest.empty()) throw UsageError("config has no [data] manifest");
  if (!fs::is_regular_file(cfg.manifest)) throw DataError("manifest '" + cfg.manifest.string() + "' not found");
  if (cfg.plan.phase != Phase::kPretrain2x && a.resume.empty()) {
    throw UsageError("phase " + to_string(cfg.plan.phase) +
                     " fine-tunes a trained 2x network; pass its checkpoint with --resume");
  }
  std::optional<Checkpoint> initial;
  if (!a.resume.empty()) initial = Checkpoint::load(a.resume);
  for (const fs::path& p : {cfg.out, cfg.log_path()}) {
    const fs::path parent = p.parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
      throw UsageError("output directory '" + parent.string() + "' does not exist");
    }
  }

  const int scale = cfg.plan.effective_scale();
  const PairedDataset data = PairedDataset::from_manifest(DatasetManifest::load(cfg.manifest), scale);
  Generator<float> gen(cfg.model, cfg.seed);
  std::optional<Discriminator<float>> disc;
  if (cfg.plan.phase == Phase::kGanFinetune) disc.emplace(cfg.disc, cfg.seed + 1);
  std::optional<FeatureExtractor<float>> features;
  if (cfg.weights.feat > 0.0) features.emplace(cfg.features);

  TrainSetup setup;
  setup.generator = &gen;
  setup.features = features ? &*features : nullptr;
  setup.discriminator = disc ? &*disc : nullptr;
  setup.initial = initial ? &*initial : nullptr;
  const std::size_t every = std::max<std::size_t>(1, cfg.plan.iterations / 10);
  setup.on_iteration = [&](const TraceRow& row) {
    if ((row.iter + 1) % every == 0 || row.iter + 1 == cfg.plan.iterations) {
      out << "iter " << row.iter + 1 << "/" << cfg.plan.iterations << " lr " << row.lr << " loss "
          << row.total << "\n";
    }
  };

  out << "training " << to_string(cfg.plan.phase) << " at scale " << scale << " on " << data.size()
      << " images, " << cfg.plan.iterations << " iterations\n";
  const TrainResult result = train_phase(setup, data, cfg.plan, cfg.weights, cfg.seed + 2);
  result.checkpoint.save(cfg.out);
  atomic_write(cfg.log_path(), format_trace(result.trace));
  out << "wrote " << cfg.out.string() << " and " << cfg.log_path().string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  int scale = 4;
  std::string out;
  ModelChoice model;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const ModelConfig cfg = a.model.resolve(a.scale);
  const Generator<float> gen = load_generator(a.checkpoint, cfg);
  fs::create_directories(a.out);
  for (const auto& input : a.inputs) {
    const ImageRGB lr = load_image(input);
    const fs::path dest = fs::path(a.out) / (fs::path(input).stem().string() + ".png");
    save_image(super_resolve(gen, lr, a.scale), dest);
    out << input << " -> " << dest.string() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ref_dir;
  std::string test_dir;
  int scale = 4;
  std::string scores;
  std::optional<std::size_t> shave;
  std::string out;
  bool y_channel = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  recurrence_depth(a.scale);
  std::map<std::string, fs::path> refs, tests;
  for (const auto& p : list_images(a.ref_dir)) refs[p.stem().string()] = p;
  for (const auto& p : list_images(a.test_dir)) tests[p.stem().string()] = p;
  std::vector<std::string> unmatched;
  for (const auto& [id, p] : refs) {
    if (tests.count(id) == 0) unmatched.push_back(p.string());
  }
  for (const auto& [id, p] : tests) {
    if (refs.count(id) == 0) unmatched.push_back(p.string());
  }
  if (!unmatched.empty()) {
    std::string msg = "unmatched files:";
    for (const auto& u : unmatched) msg += " " + u;
    throw DataError(msg);
  }
  if (refs.empty()) throw DataError("no images in '" + a.ref_dir + "'");

  std::optional<ScoreBackend> scores;
  if (!a.scores.empty()) scores = ScoreBackend::load(a.scores);
  MetricOptions opt;
  opt.shave = a.shave.value_or(static_cast<std::size_t>(a.scale));
  opt.channel = a.y_channel ? MetricChannel::kY : MetricChannel::kRgb;

  std::vector<MetricReport> rows;
  for (const auto& [id, ref_path] : refs) {
    rows.push_back(evaluate_pair(id, load_image(ref_path), load_image(tests.at(id)), opt,
                                 scores ? &*scores : nullptr));
  }
  const std::string csv = reports_to_csv(rows);
  if (a.out.empty()) {
    out << csv;
  } else {
    atomic_write(a.out, csv);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// curve

struct CurveArgs {
  std::string ckpt_distortion;
  std::string ckpt_perceptual;
  std::string manifest;
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  int scale = 4;
  std::string out;
  std::string scores;
  std::optional<std::size_t> shave;
  std::string reference = "hr";
  ModelChoice model;
};

int cmd_curve(const CurveArgs& a, std::ostream& out) {
  for (double alpha : a.alphas) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (a.reference != "hr" && a.reference != "distortion") {
    throw UsageError("--reference must be hr or distortion");
  }
  const ModelConfig cfg = a.model.resolve(a.scale);
  const Generator<float> gen_d = load_generator(a.ckpt_distortion, cfg);
  const Generator<float> gen_p = load_generator(a.ckpt_perceptual, cfg);
  const PairedDataset data = PairedDataset::from_manifest(DatasetManifest::load(a.manifest), a.scale);
  std::optional<ScoreBackend> scores;
  if (!a.scores.empty()) scores = ScoreBackend::load(a.scores);
  MetricOptions opt;
  opt.shave = a.shave.value_or(static_cast<std::size_t>(a.scale));

  std::vector<BlendTriple> triples;
  for (const auto& pair : data.pairs()) {
    BlendTriple t;
    t.out_distortion = super_resolve(gen_d, pair.lr, a.scale);
    t.out_perceptual = super_resolve(gen_p, pair.lr, a.scale);
    t.reference = a.reference == "hr" ? pair.hr : t.out_distortion;
    triples.push_back(std::move(t));
  }

  std::ostringstream csv;
  csv << "alpha,rmse,P_mean\n";
  for (double alpha : a.alphas) {
    const fs::path dir = fs::path(a.out) / alpha_dir(alpha);
    fs::create_directories(dir);
    double rmse_sum = 0.0, p_sum = 0.0;
    bool all_p = scores.has_value();
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const ImageRGB img = quantized(blend(triples[i].out_distortion, triples[i].out_perceptual, alpha));
      save_image(img, dir / (data.pairs()[i].id + ".png"));
      rmse_sum += rmse(triples[i].reference, img, opt);
      if (scores) {
        const auto s = scores->lookup(alpha_dir(alpha) + "/" + data.pairs()[i].id);
        if (s) {
          p_sum += perceptual_score(s->m, s->n);
        } else {
          all_p = false;
        }
      }
    }
    const double n = static_cast<double>(triples.size());
    csv << fixed(alpha, 6) << ',' << fixed(rmse_sum / n, 6) << ',';
    if (all_p) csv << fixed(p_sum / n, 6);
    csv << '\n';
  }
  const fs::path csv_path = fs::path(a.out) / "curve.csv";
  atomic_write(csv_path, csv.str());
  out << "wrote " << csv_path.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// degrade

struct DegradeArgs {
  std::string hr_dir;
  int scale = 4;
  std::string out;
};

int cmd_degrade(const DegradeArgs& a, std::ostream& out, std::ostream& err) {
  recurrence_depth(a.scale);
  const auto scale = static_cast<std::size_t>(a.scale);
  if (!fs::is_directory(a.hr_dir)) throw DataError("'" + a.hr_dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(a.hr_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(a.out);

  DatasetManifest manifest;
  manifest.scale = scale;
  std::vector<std::string> failed;
  for (const auto& path : files) {
    try {
      const ImageRGB hr = center_crop_multiple(load_image(path), scale);
      const std::string name = path.stem().string() + ".png";
      save_image(degrade_bi(hr, scale), fs::path(a.out) / name);
      manifest.pairs.push_back({fs::absolute(path), fs::path(name)});
      out << path.string() << " -> " << name << "\n";
    } catch (const DataError& e) {
      failed.push_back(path.string() + ": " + e.what());
    }
  }
  atomic_write(fs::path(a.out) / "manifest.txt", manifest.to_text());
  if (!failed.empty()) {
    err << "could not degrade " << failed.size() << " file(s):\n";
    for (const auto& f : failed) err << "  " << f << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scale-recurrent residual dense super-resolution", "mrdn"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Run one training phase from a config file");
  c_train->add_option("--config", train.config, "Run config")->required();
  c_train->add_option("--resume", train.resume, "Initial checkpoint (required by fine-tune phases)");
  c_train->add_option("--seed", train.seed, "Overrides [train] seed");
  c_train->add_option("--out", train.out, "Checkpoint path (log goes to <out>.log)");
  c_train->add_flag("--tiny", train.tiny, "Use the small test architecture");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Super-resolve images with a checkpoint");
  c_infer->add_option("checkpoint", infer.checkpoint)->required();
  c_infer->add_option("inputs", infer.inputs)->required();
  c_infer->add_option("--scale", infer.scale)->check(CLI::IsMember({2, 4, 8}));
  c_infer->add_option("--out", infer.out, "Output directory")->required();
  infer.model.add_to(c_infer);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "PSNR/RMSE/track report over matching image pairs");
  c_eval->add_option("ref_dir", eval.ref_dir)->required();
  c_eval->add_option("test_dir", eval.test_dir)->required();
  c_eval->add_option("--scale", eval.scale)->check(CLI::IsMember({2, 4, 8}));
  c_eval->add_option("--scores", eval.scores, "id<TAB>M<TAB>N score file");
  c_eval->add_option("--shave", eval.shave, "Border pixels ignored (default: scale)");
  c_eval->add_option("--out", eval.out, "CSV path (default: stdout)");
  c_eval->add_flag("--y-channel", eval.y_channel, "Measure on BT.601 luma instead of RGB");

  CurveArgs curve;
  auto* c_curve = app.add_subcommand("curve", "Blend two models' outputs along a list of alphas");
  c_curve->add_option("ckpt_distortion", curve.ckpt_distortion)->required();
  c_curve->add_option("ckpt_perceptual", curve.ckpt_perceptual)->required();
  c_curve->add_option("manifest", curve.manifest)->required();
  c_curve->add_option("--alphas", curve.alphas, "Comma-separated blend weights in [0, 1]")->delimiter(',');
  c_curve->add_option("--scale", curve.scale)->check(CLI::IsMember({2, 4, 8}));
  c_curve->add_option("--out", curve.out, "Output directory")->required();
  c_curve->add_option("--scores", curve.scores, "Score file keyed alpha_<a>/<id>");
  c_curve->add_option("--shave", curve.shave, "Border pixels ignored (default: scale)");
  c_curve->add_option("--reference", curve.reference, "RMSE reference: hr or distortion");
  curve.model.add_to(c_curve);

  DegradeArgs degrade;
  auto* c_degrade = app.add_subcommand("degrade", "Bicubic-downsample a directory of HR images");
  c_degrade->add_option("hr_dir", degrade.hr_dir)->required();
  c_degrade->add_option("--scale", degrade.scale)->check(CLI::IsMember({2, 4, 8}));
  c_degrade->add_option("--out", degrade.out, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_infer->parsed()) return cmd_infer(infer, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_curve->parsed()) return cmd_curve(curve, out);
    if (c_degrade->parsed()) return cmd_degrade(degrade, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace mrdn
