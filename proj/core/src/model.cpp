#include "drconv/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "drconv/errors.hpp"
#include "json.hpp"

namespace drconv {

using nlohmann::json;

const char* to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::standard: return "standard";
    case LayerKind::drconv: return "drconv";
    case LayerKind::local: return "local";
  }
  return "standard";
}

const char* to_string(HeadKind h) noexcept { return h == HeadKind::gap ? "gap" : "flatten"; }

namespace {

LayerKind layer_kind_from(const std::string& s, const std::string& field) {
  if (s == "standard") return LayerKind::standard;
  if (s == "drconv") return LayerKind::drconv;
  if (s == "local") return LayerKind::local;
  throw ConfigError(field, "unknown layer type '" + s + "' (standard|drconv|local)");
}

HeadKind head_kind_from(const std::string& s, const std::string& field) {
  if (s == "gap") return HeadKind::gap;
  if (s == "flatten") return HeadKind::flatten;
  throw ConfigError(field, "unknown head '" + s + "' (gap|flatten)");
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(path.empty() ? key : path + "." + key, "unknown field");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  const std::string field = path.empty() ? key : path + "." + key;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong value type");
  }
}

template <class T>
void read_required(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path.empty() ? key : path + "." + key, "missing");
  read(j, key, out, path);
}

void read_size(const json& j, const char* key, std::size_t& out, const std::string& path) {
  if (!j.contains(key)) return;
  const std::string field = path.empty() ? key : path + "." + key;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(field, "expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

ModelConfig model_from(const json& j, const std::string& path) {
  reject_unknown(j, {"input", "layers", "head", "head_width", "classes"}, path);
  ModelConfig m;
  if (!j.contains("input")) throw ConfigError(path + ".input", "missing");
  const json& in = j.at("input");
  reject_unknown(in, {"h", "w", "c"}, path + ".input");
  read_size(in, "h", m.input_h, path + ".input");
  read_size(in, "w", m.input_w, path + ".input");
  read_size(in, "c", m.input_c, path + ".input");
  if (j.contains("layers")) {
    if (!j.at("layers").is_array()) throw ConfigError(path + ".layers", "expected an array");
    std::size_t i = 0;
    for (const json& lj : j.at("layers")) {
      const std::string lp = path + ".layers[" + std::to_string(i++) + "]";
      reject_unknown(lj, {"name", "type", "k", "stride", "padding", "in_channels", "out_channels",
                          "m", "hidden", "guide_gain", "bias", "pool_after"},
                     lp);
      LayerConfig l;
      read(lj, "name", l.name, lp);
      std::string type = "standard";
      read_required(lj, "type", type, lp);
      l.type = layer_kind_from(type, lp + ".type");
      read_size(lj, "k", l.k, lp);
      read_size(lj, "stride", l.stride, lp);
      if (lj.contains("padding")) {
        std::string p;
        read(lj, "padding", p, lp);
        try {
          l.padding = padding_from_string(p);
        } catch (const ConfigError&) {
          throw ConfigError(lp + ".padding", "unknown padding mode '" + p + "'");
        }
      }
      read_size(lj, "in_channels", l.in_channels, lp);
      if (!lj.contains("out_channels")) throw ConfigError(lp + ".out_channels", "missing");
      read_size(lj, "out_channels", l.out_channels, lp);
      read_size(lj, "m", l.m, lp);
      read_size(lj, "hidden", l.hidden, lp);
      read(lj, "guide_gain", l.guide_gain, lp);
      read(lj, "bias", l.bias, lp);
      read(lj, "pool_after", l.pool_after, lp);
      m.layers.push_back(std::move(l));
    }
  }
  if (j.contains("head")) {
    std::string h;
    read(j, "head", h, path);
    m.head = head_kind_from(h, path + ".head");
  }
  read_size(j, "head_width", m.head_width, path);
  if (!j.contains("classes")) throw ConfigError(path + ".classes", "missing");
  read_size(j, "classes", m.classes, path);
  m.resolve();
  return m;
}

json model_to(const ModelConfig& m) {
  json layers = json::array();
  for (const LayerConfig& l : m.layers) {
    json lj{{"name", l.name},
            {"type", to_string(l.type)},
            {"k", l.k},
            {"stride", l.stride},
            {"padding", to_string(l.padding)},
            {"in_channels", l.in_channels},
            {"out_channels", l.out_channels},
            {"pool_after", l.pool_after}};
    if (l.type == LayerKind::drconv) {
      lj["m"] = l.m;
      lj["hidden"] = l.hidden;
      lj["guide_gain"] = l.guide_gain;
    }
    if (l.type == LayerKind::standard) lj["bias"] = l.bias;
    layers.push_back(std::move(lj));
  }
  return json{{"input", {{"h", m.input_h}, {"w", m.input_w}, {"c", m.input_c}}},
              {"layers", std::move(layers)},
              {"head", to_string(m.head)},
              {"head_width", m.head_width},
              {"classes", m.classes}};
}

TrainConfig train_from(const json& j, const std::string& path) {
  reject_unknown(j, {"lr", "momentum", "weight_decay", "batch_size", "epochs", "seed", "threads",
                     "clip_norm"},
                 path);
  TrainConfig t;
  read(j, "lr", t.lr, path);
  read(j, "momentum", t.momentum, path);
  read(j, "weight_decay", t.weight_decay, path);
  read_size(j, "batch_size", t.batch_size, path);
  read_size(j, "epochs", t.epochs, path);
  read(j, "seed", t.seed, path);
  read_size(j, "threads", t.threads, path);
  read(j, "clip_norm", t.clip_norm, path);
  t.validate();
  return t;
}

DataConfig data_from(const json& j, const std::string& path) {
  reject_unknown(j, {"source", "images", "labels", "val_fraction", "n_train", "n_val", "h", "w",
                     "classes", "seed"},
                 path);
  DataConfig d;
  read(j, "source", d.source, path);
  if (d.source != "synth" && d.source != "idx") {
    throw ConfigError(path + ".source", "expected 'synth' or 'idx'");
  }
  read(j, "images", d.images, path);
  read(j, "labels", d.labels, path);
  read(j, "val_fraction", d.val_fraction, path);
  read_size(j, "n_train", d.n_train, path);
  read_size(j, "n_val", d.n_val, path);
  read_size(j, "h", d.h, path);
  read_size(j, "w", d.w, path);
  read_size(j, "classes", d.classes, path);
  read(j, "seed", d.seed, path);
  if (d.source == "idx") {
    if (d.images.empty()) throw ConfigError(path + ".images", "missing data path");
    if (d.labels.empty()) throw ConfigError(path + ".labels", "missing data path");
  }
  if (d.val_fraction < 0.0 || d.val_fraction >= 1.0) {
    throw ConfigError(path + ".val_fraction", "must lie in [0, 1)");
  }
  return d;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

void ModelConfig::resolve() {
  if (input_h == 0) throw ConfigError("model.input.h", "must be >= 1");
  if (input_w == 0) throw ConfigError("model.input.w", "must be >= 1");
  if (input_c == 0) throw ConfigError("model.input.c", "must be >= 1");
  if (classes < 2) throw ConfigError("model.classes", "must be >= 2");
  std::size_t channels = input_c;
  std::size_t h = input_h;
  std::size_t w = input_w;
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerConfig& l = layers[i];
    const std::string lp = "model.layers[" + std::to_string(i) + "]";
    if (l.name.empty()) l.name = "conv" + std::to_string(i + 1);
    if (!names.insert(l.name).second) throw ConfigError(lp + ".name", "duplicate layer name");
    if (l.in_channels == 0) l.in_channels = channels;
    if (l.in_channels != channels) {
      throw ConfigError(lp + ".in_channels", "expected " + std::to_string(channels) +
                                                 " to match the previous layer, got " +
                                                 std::to_string(l.in_channels));
    }
    if (l.out_channels == 0) throw ConfigError(lp + ".out_channels", "must be >= 1");
    if (l.k == 0 || l.k % 2 == 0) throw ConfigError(lp + ".k", "kernel size must be odd");
    if (l.stride == 0) throw ConfigError(lp + ".stride", "must be >= 1");
    if (l.type == LayerKind::drconv) {
      if (l.m == 0) throw ConfigError(lp + ".m", "region count must be >= 1");
      if (l.hidden == 0) l.hidden = l.m * l.in_channels;
      if (l.hidden % l.m != 0) throw ConfigError(lp + ".hidden", "must be a multiple of m");
      if (!(l.guide_gain > 0.0) || !std::isfinite(l.guide_gain))
        throw ConfigError(lp + ".guide_gain", "must be finite and > 0");
    }
    ConvSpec spec{l.k, l.stride, l.padding, l.in_channels, l.out_channels};
    try {
      h = spec.out_extent(h);
      w = spec.out_extent(w);
    } catch (const SizeError&) {
      throw ConfigError(lp + ".k", "feature map too small for this kernel");
    }
    if (l.type == LayerKind::drconv && (h < l.k || w < l.k)) {
      throw ConfigError(lp + ".k", "input map smaller than k x k for the filter generator");
    }
    if (l.pool_after) {
      if (h < 2 || w < 2) throw ConfigError(lp + ".pool_after", "feature map too small to pool");
      h /= 2;
      w /= 2;
    }
    channels = l.out_channels;
  }
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay", "must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (threads == 0) throw ConfigError("train.threads", "must be >= 1");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm", "must be >= 0");
}

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  reject_unknown(j, {"model", "train", "data"}, "");
  RunConfig r;
  if (!j.contains("model")) throw ConfigError("model", "missing");
  r.model = model_from(j.at("model"), "model");
  if (j.contains("train")) r.train = train_from(j.at("train"), "train");
  if (j.contains("data")) r.data = data_from(j.at("data"), "data");
  return r;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string model_config_to_json(const ModelConfig& cfg) { return model_to(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& json_text) {
  return model_from(parse_json(json_text), "model");
}

DataConfig parse_data_spec(const std::string& spec, const std::optional<DataConfig>& base) {
  if (spec == "synth") {
    if (base && base->source == "synth") return *base;
    return DataConfig{};
  }
  constexpr std::string_view prefix = "idx:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string rest = spec.substr(prefix.size());
    const auto comma = rest.find(',');
    DataConfig d = base.value_or(DataConfig{});
    d.source = "idx";
    if (comma == std::string::npos) {
      throw ConfigError("data", "expected idx:IMAGES,LABELS");
    }
    d.images = rest.substr(0, comma);
    d.labels = rest.substr(comma + 1);
    if (d.images.empty()) throw ConfigError("data.images", "missing data path");
    if (d.labels.empty()) throw ConfigError("data.labels", "missing data path");
    return d;
  }
  throw ConfigError("data", "expected 'synth' or 'idx:IMAGES,LABELS', got '" + spec + "'");
}

// --- Model ------------------------------------------------------------------

Model Model::build(ModelConfig cfg, std::uint64_t seed) {
  cfg.resolve();
  Model model;
  std::mt19937_64 rng(seed);
  Shape4 shape{1, cfg.input_h, cfg.input_w, cfg.input_c};
  auto push = [&](std::unique_ptr<Module> m) {
    shape = m->output_shape(shape);
    model.modules_.push_back(std::move(m));
  };
  for (const LayerConfig& l : cfg.layers) {
    const ConvSpec spec{l.k, l.stride, l.padding, l.in_channels, l.out_channels};
    switch (l.type) {
      case LayerKind::standard:
        push(std::make_unique<StandardConv2d>(l.name, spec, l.bias, rng));
        break;
      case LayerKind::local:
        push(std::make_unique<LocalConv2d>(l.name, spec, shape.h, shape.w, rng));
        break;
      case LayerKind::drconv:
        push(std::make_unique<DRConv2d>(l.name, DRConvLayer::create(spec, l.m, l.hidden, rng, l.guide_gain)));
        break;
    }
    push(std::make_unique<ReLU>(l.name + ".relu"));
    if (l.pool_after) push(std::make_unique<MaxPool2>(l.name + ".pool"));
  }
  if (cfg.head == HeadKind::gap) {
    push(std::make_unique<GlobalAvgPool>("gap"));
  } else {
    push(std::make_unique<Flatten>("flatten"));
  }
  if (cfg.head_width > 0) {
    push(std::make_unique<Dense>("fc_hidden", shape.c, cfg.head_width, rng));
    push(std::make_unique<ReLU>("fc_hidden.relu"));
  }
  push(std::make_unique<Dense>("fc", shape.c, cfg.classes, rng));
  model.config_ = std::move(cfg);
  return model;
}

void Model::require_input(const Tensor4& x) const {
  const Shape4 s = x.shape();
  if (s.h != config_.input_h || s.w != config_.input_w || s.c != config_.input_c) {
    throw ShapeError("model expects (n," + std::to_string(config_.input_h) + "," +
                     std::to_string(config_.input_w) + "," + std::to_string(config_.input_c) +
                     ") input, got " + s.str());
  }
}

Model::Trace Model::forward_trace(const Tensor4& x) const {
  require_input(x);
  Trace trace;
  trace.states.reserve(modules_.size());
  Tensor4 h = x;
  for (const auto& m : modules_) {
    auto [y, state] = m->forward(h);
    trace.states.push_back(std::move(state));
    h = std::move(y);
  }
  trace.logits = std::move(h);
  return trace;
}

Tensor4 Model::forward(const Tensor4& x) const { return forward_trace(x).logits; }

std::vector<ParamGrads> Model::backward(Trace& trace, const Tensor4& dlogits) const {
  if (trace.states.size() != modules_.size()) {
    throw ContextError("Model::backward: trace does not belong to this model");
  }
  std::vector<ParamGrads> grads(modules_.size());
  Tensor4 g = dlogits;
  for (std::size_t i = modules_.size(); i-- > 0;) {
    g = modules_[i]->backward(*trace.states[i], g, grads[i]);
  }
  trace.states.clear();
  return grads;
}

std::vector<std::string> Model::drconv_layer_names() const {
  std::vector<std::string> names;
  for (const auto& m : modules_)
    if (m->type() == "drconv") names.push_back(m->name());
  return names;
}

GuidedMask Model::guided_mask(const std::string& layer, const Tensor4& x) const {
  require_input(x);
  Tensor4 h = x;
  for (const auto& m : modules_) {
    auto [y, state] = m->forward(h);
    if (m->name() == layer && m->type() == "drconv") return DRConv2d::mask_of(*state);
    h = std::move(y);
  }
  std::string available;
  for (const auto& n : drconv_layer_names()) available += (available.empty() ? "" : ", ") + n;
  throw LookupError("no drconv layer named '" + layer + "'; available: " +
                    (available.empty() ? "(none)" : available));
}

std::vector<Model::CostRow> Model::cost_table() const {
  std::vector<CostRow> rows;
  Shape4 shape{1, config_.input_h, config_.input_w, config_.input_c};
  for (const auto& m : modules_) {
    const LayerCost c = m->cost(shape);
    if (c.madds != 0 || c.params != 0) rows.push_back({m->name(), m->type(), shape, c});
    shape = m->output_shape(shape);
  }
  return rows;
}

std::uint64_t Model::param_count() const {
  std::uint64_t total = 0;
  for (const auto& m : modules_)
    for (auto v : m->param_values()) total += v.size();
  return total;
}

}  // namespace drconv
