#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "drconv/checkpoint.hpp"
#include "drconv/drconv_layer.hpp"
#include "drconv/errors.hpp"
#include "drconv/mask_analysis.hpp"
#include "drconv/parallel.hpp"
#include "drconv/trainer.hpp"
#include "drconv/verify.hpp"

namespace drconv::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxRedraws = 64;

struct GradcheckArgs {
  std::size_t m = 8;
  std::size_t k = 1;
  std::size_t channels = 2;
  std::size_t spatial = 4;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double h = 1e-5;
  std::size_t threads = 1;
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::size_t threads = 0;  // 0 keeps the config value
};

struct EvalArgs {
  std::string checkpoint;
  std::string data = "synth";
};

struct CostArgs {
  std::string config;
  std::string input_size;
};

struct VisualizeArgs {
  std::string checkpoint;
  std::string data = "synth";
  std::string layer;
  std::string out;
  std::size_t count = 4;
  std::uint64_t seed = 7;
};

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    h = std::stoul(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    w = std::stoul(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::logic_error&) {
    throw ConfigError("input-size", "expected HxW, got '" + s + "'");
  }
  if (h == 0 || w == 0) throw ConfigError("input-size", "dimensions must be positive");
  return {h, w};
}

void require_file(const std::string& path, const std::string& field) {
  if (!fs::is_regular_file(path)) throw ConfigError(field, "no such file '" + path + "'");
}

DataConfig data_source(const std::string& flag, const std::optional<DataConfig>& base) {
  if (!flag.empty()) return parse_data_spec(flag, base);
  if (base) return *base;
  throw ConfigError("data", "no data source: pass --data or add a data section to the config");
}

const LayerConfig* find_layer(const ModelConfig& cfg, const std::string& name) {
  for (const LayerConfig& l : cfg.layers)
    if (l.name == name) return &l;
  return nullptr;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  set_num_threads(a.threads);
  const ConvSpec spec{a.k, 1, Padding::same_zero, a.channels, a.channels};
  std::mt19937_64 rng(a.seed);
  const DRConvLayer layer = DRConvLayer::create(spec, a.m, 0, rng);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  verify::GradCheckOptions opt;
  opt.h = a.h;
  opt.tolerance = a.tolerance;
  opt.projection_seed = a.seed;
  for (std::size_t draw = 1; draw <= kMaxRedraws; ++draw) {
    Tensor4 x = Tensor4::zeros({1, a.spatial, a.spatial, a.channels});
    for (double& v : x.data()) v = uni(rng);
    const verify::GradCheckReport report = verify::check_drconv_gradients(layer, x, opt);
    if (report.tie_adjacent) continue;
    out << "instance m=" << a.m << " k=" << a.k << " channels=" << a.channels
        << " spatial=" << a.spatial << " seed=" << a.seed << " draws=" << draw << "\n";
    out << report.to_text();
    return report.passed() ? kOk : kCheckFailed;
  }
  out << "result=FAIL reason=every input draw had tie-adjacent guide logits\n";
  return kCheckFailed;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig run = load_run_config(a.config);
  if (a.threads != 0) run.train.threads = a.threads;
  run.train.validate();
  const DataConfig data = data_source(a.data, run.data);
  Model model = Model::build(run.model, run.train.seed);
  const SplitData split = load_data(data, model.config());

  fs::create_directories(a.out);
  const fs::path log_path = fs::path(a.out) / "metrics.log";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw ConfigError("out", "cannot write '" + log_path.string() + "'");
  log << "run source=" << data.source << " train=" << split.train.size()
      << " val=" << split.val.size() << " params=" << model.param_count()
      << " seed=" << run.train.seed << " threads=" << run.train.threads << "\n";

  const Dataset* val = split.val.size() > 0 ? &split.val : nullptr;
  train(model, split.train, val, run.train, [&](const EpochMetrics& m) {
    const std::string line = m.to_log_line();
    log << line << "\n";
    log.flush();
    out << line << "\n";
  });
  const fs::path ckpt = fs::path(a.out) / "checkpoint.bin";
  save_checkpoint(model, ckpt.string());
  out << "wrote " << ckpt.string() << " and " << log_path.string() << "\n";
  return kOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  const Model model = load_checkpoint(a.checkpoint);
  const SplitData split = load_data(parse_data_spec(a.data, std::nullopt), model.config());
  const Dataset& d = split.val.size() > 0 ? split.val : split.train;
  out << "samples=" << d.size() << " accuracy=" << std::setprecision(6) << evaluate(model, d)
      << "\n";
  return kOk;
}

int cmd_cost(const CostArgs& a, std::ostream& out) {
  RunConfig run = load_run_config(a.config);
  if (!a.input_size.empty()) {
    const auto [h, w] = parse_size(a.input_size);
    run.model.input_h = h;
    run.model.input_w = w;
  }
  const Model model = Model::build(run.model, 0);
  const auto rows = model.cost_table();
  out << std::left << std::setw(14) << "layer" << std::setw(10) << "type" << std::setw(16)
      << "input" << std::right << std::setw(14) << "madds" << std::setw(12) << "params" << "\n";
  std::uint64_t madds = 0, params = 0;
  for (const auto& r : rows) {
    const std::string in = std::to_string(r.input.h) + "x" + std::to_string(r.input.w) + "x" +
                           std::to_string(r.input.c);
    out << std::left << std::setw(14) << r.name << std::setw(10) << r.type << std::setw(16) << in
        << std::right << std::setw(14) << r.cost.madds << std::setw(12) << r.cost.params << "\n";
    madds += r.cost.madds;
    params += r.cost.params;
  }
  out << std::left << std::setw(40) << "total" << std::right << std::setw(14) << madds
      << std::setw(12) << params << "\n";
  return kOk;
}

int cmd_visualize(const VisualizeArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  const Model model = load_checkpoint(a.checkpoint);
  const LayerConfig* layer = find_layer(model.config(), a.layer);
  if (layer == nullptr || layer->type != LayerKind::drconv) {
    // Delegates to the model for the error listing the available layers.
    (void)model.guided_mask(a.layer, Tensor4::zeros({1, model.config().input_h,
                                                     model.config().input_w,
                                                     model.config().input_c}));
  }
  DataConfig data = parse_data_spec(a.data, std::nullopt);
  Dataset d;
  if (data.source == "synth") {
    const ModelConfig& mc = model.config();
    d = synth_region_dataset(a.count, mc.input_h, mc.input_w, mc.classes, a.seed);
  } else {
    data.val_fraction = 0.0;
    const SplitData split = load_data(data, model.config());
    d = split.train.slice(0, std::min(a.count, split.train.size()));
  }
  const GuidedMask mask = model.guided_mask(a.layer, d.images);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < mask.n(); ++i) {
    const std::string stem = (fs::path(a.out) / (a.layer + "_" + std::to_string(i))).string();
    std::ofstream(stem + ".ppm", std::ios::binary) << encode_ppm(mask, i, layer->m);
    std::ofstream(stem + ".pgm", std::ios::binary) << encode_index_grid(mask, i, layer->m);
  }
  out << "wrote " << mask.n() << " mask images (" << mask.h() << "x" << mask.w() << ", m="
      << layer->m << ") to " << a.out << "\n";
  if (d.regions && mask.n() >= 2) {
    const AgreementTest t = mask_agreement_test(mask, *d.regions, 1000, a.seed);
    out << "region_agreement=" << t.score << " null_mean=" << t.null_mean
        << " null_p95=" << t.null_p95 << "\n";
  }
  return kOk;
}

}  // namespace

SplitData load_data(const DataConfig& data, const ModelConfig& model) {
  if (data.source == "synth") {
    if (model.input_c != 1) {
      throw ConfigError("model.input_c", "synthetic data has a single channel");
    }
    if (data.n_train == 0) throw ConfigError("data.n_train", "must be positive");
    Dataset all = synth_region_dataset(data.n_train + data.n_val, model.input_h, model.input_w,
                                       model.classes, data.seed);
    if (data.n_val == 0) return {std::move(all), Dataset{}};
    return {all.slice(0, data.n_train), all.slice(data.n_train, all.size())};
  }
  if (data.source != "idx") {
    throw ConfigError("data.source", "expected 'synth' or 'idx', got '" + data.source + "'");
  }
  if (data.images.empty()) throw ConfigError("data.images", "missing data path");
  if (data.labels.empty()) throw ConfigError("data.labels", "missing data path");
  require_file(data.images, "data.images");
  require_file(data.labels, "data.labels");
  if (!(data.val_fraction >= 0.0 && data.val_fraction < 1.0)) {
    throw ConfigError("data.val_fraction", "must lie in [0, 1)");
  }
  Dataset all = load_idx(data.images, data.labels, model.classes);
  const Shape4 s = all.images.shape();
  if (s.h != model.input_h || s.w != model.input_w || s.c != model.input_c) {
    throw ConfigError("data.images", "images are " + s.str() + " but the model expects " +
                                         std::to_string(model.input_h) + "x" +
                                         std::to_string(model.input_w) + "x" +
                                         std::to_string(model.input_c));
  }
  const auto n_val =
      static_cast<std::size_t>(static_cast<double>(all.size()) * data.val_fraction);
  const std::size_t n_train = all.size() - n_val;
  if (n_train == 0) throw ConfigError("data.val_fraction", "leaves no training samples");
  if (n_val == 0) return {std::move(all), Dataset{}};
  return {all.slice(0, n_train), all.slice(n_train, all.size())};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamic region-aware convolution toolkit"};
  app.require_subcommand(1);

  GradcheckArgs g;
  auto* gc = app.add_subcommand("gradcheck", "Check drconv gradients against finite differences");
  gc->add_option("--m", g.m, "Number of regions")->check(CLI::PositiveNumber);
  gc->add_option("--k", g.k, "Kernel size (odd)")
      ->check(CLI::Validator(
          [](const std::string& s) {
            return (std::stoul(s) % 2 == 1) ? std::string{} : std::string("k must be odd");
          },
          "ODD"));
  gc->add_option("--channels", g.channels, "Input and output channels")->check(CLI::PositiveNumber);
  gc->add_option("--spatial", g.spatial, "Input height and width")->check(CLI::PositiveNumber);
  gc->add_option("--seed", g.seed, "Instance seed");
  gc->add_option("--tolerance", g.tolerance, "Relative error tolerance")
      ->check(CLI::PositiveNumber);
  gc->add_option("--step", g.h, "Finite-difference step")->check(CLI::PositiveNumber);
  gc->add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train a model from a JSON run config");
  tr->add_option("--config", t.config, "Run config (JSON)")->required();
  tr->add_option("--data", t.data, "synth | idx:IMAGES,LABELS (overrides the config)");
  tr->add_option("--out", t.out, "Output directory")->required();
  tr->add_option("--threads", t.threads, "Worker threads (overrides the config)");

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint");
  ev->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", e.data, "synth | idx:IMAGES,LABELS");

  CostArgs c;
  auto* co = app.add_subcommand("cost", "Per-layer multiply-adds and parameter counts");
  co->add_option("--config", c.config, "Run or model config (JSON)")->required();
  co->add_option("--input-size", c.input_size, "HxW (overrides the config)");

  VisualizeArgs v;
  auto* vi = app.add_subcommand("visualize", "Write guided masks as PPM images and index grids");
  vi->add_option("--checkpoint", v.checkpoint, "Checkpoint file")->required();
  vi->add_option("--data", v.data, "synth | idx:IMAGES,LABELS");
  vi->add_option("--layer", v.layer, "drconv layer name")->required();
  vi->add_option("--out", v.out, "Output directory")->required();
  vi->add_option("--count", v.count, "Number of samples")->check(CLI::PositiveNumber);
  vi->add_option("--seed", v.seed, "Seed of the synthetic samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n";
    return kUsage;
  }

  try {
    if (gc->parsed()) return cmd_gradcheck(g, out);
    if (tr->parsed()) return cmd_train(t, out);
    if (ev->parsed()) return cmd_eval(e, out);
    if (co->parsed()) return cmd_cost(c, out);
    return cmd_visualize(v, out);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kUsage;
  } catch (const LookupError& ex) {
    err << "lookup error: " << ex.what() << "\n";
    return kUsage;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << "\n";
    return kUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kCheckFailed;
  }
}

}  // namespace drconv::cli
