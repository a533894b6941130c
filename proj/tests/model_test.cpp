#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "drconv/errors.hpp"
#include "drconv/model.hpp"
#include "test_support.hpp"

namespace drconv {
namespace {

std::string field_of(const std::string& json) {
  try {
    parse_run_config(json);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(Config, ParsesAFullRunConfig) {
  const RunConfig r = parse_run_config(R"({
    "model": {"input": {"h": 10, "w": 12, "c": 2},
              "layers": [{"type": "standard", "k": 3, "out_channels": 4, "pool_after": true},
                         {"type": "drconv", "k": 1, "out_channels": 3, "m": 2, "hidden": 4,
                          "padding": "circular", "name": "dr"}],
              "head": "flatten", "head_width": 6, "classes": 5},
    "train": {"lr": 0.1, "momentum": 0.5, "weight_decay": 0, "batch_size": 8, "epochs": 2,
              "seed": 9, "threads": 2},
    "data": {"source": "synth", "n_train": 10, "n_val": 4, "seed": 3}})");
  EXPECT_EQ(r.model.input_h, 10u);
  EXPECT_EQ(r.model.input_w, 12u);
  EXPECT_EQ(r.model.input_c, 2u);
  ASSERT_EQ(r.model.layers.size(), 2u);
  EXPECT_EQ(r.model.layers[0].name, "conv1");
  EXPECT_EQ(r.model.layers[0].in_channels, 2u);
  EXPECT_EQ(r.model.layers[1].name, "dr");
  EXPECT_EQ(r.model.layers[1].in_channels, 4u);
  EXPECT_EQ(r.model.layers[1].padding, Padding::circular);
  EXPECT_EQ(r.model.layers[1].type, LayerKind::drconv);
  EXPECT_EQ(r.model.head, HeadKind::flatten);
  EXPECT_EQ(r.train.threads, 2u);
  EXPECT_DOUBLE_EQ(r.train.lr, 0.1);
  ASSERT_TRUE(r.data.has_value());
  EXPECT_EQ(r.data->n_train, 10u);
}

TEST(Config, ErrorsNameTheField) {
  const std::string input = R"("input": {"h": 8, "w": 8, "c": 1})";
  EXPECT_EQ(field_of("{}"), "model");
  EXPECT_EQ(field_of("[1"), "config");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "extra": 1})"), "extra");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2, "colour": 1}})"),
            "model.colour");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(}})"), "model.classes");
  EXPECT_EQ(field_of(R"({"model": {)" + input +
                     R"(, "classes": 2, "layers": [{"type": "standard", "k": 2, "out_channels": 2}]}})"),
            "model.layers[0].k");
  EXPECT_EQ(field_of(R"({"model": {)" + input +
                     R"(, "classes": 2, "layers": [{"type": "fancy", "out_channels": 2}]}})"),
            "model.layers[0].type");
  EXPECT_EQ(field_of(R"({"model": {)" + input +
                     R"(, "classes": 2, "layers": [{"type": "drconv", "out_channels": 2, "m": 3, "hidden": 4}]}})"),
            "model.layers[0].hidden");
  EXPECT_EQ(field_of(R"({"model": {)" + input +
                     R"(, "classes": 2, "layers": [{"type": "drconv", "out_channels": 2, "guide_gain": 0}]}})"),
            "model.layers[0].guide_gain");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "train": {"clip_norm": -1}})"),
            "train.clip_norm");
  EXPECT_EQ(field_of(R"({"model": {)" + input +
                     R"(, "classes": 2, "layers": [{"type": "standard", "out_channels": "x"}]}})"),
            "model.layers[0].out_channels");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "train": {"batch_size": 0}})"),
            "train.batch_size");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "train": {"momentum": 1.0}})"),
            "train.momentum");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "data": {"source": "disk"}})"),
            "data.source");
  EXPECT_EQ(field_of(R"({"model": {)" + input + R"(, "classes": 2}, "data": {"source": "idx"}})"),
            "data.images");
}

TEST(Config, GuideGainScalesOnlyTheGuide) {
  ModelConfig cfg;
  cfg.input_h = 6;
  cfg.input_w = 6;
  LayerConfig l;
  l.type = LayerKind::drconv;
  l.out_channels = 2;
  l.m = 3;
  cfg.layers = {l};
  const Model a = Model::build(cfg, 4);
  cfg.layers[0].guide_gain = 5.0;
  const Model b = Model::build(cfg, 4);
  const auto pa = a.modules()[0]->param_values();
  const auto pb = b.modules()[0]->param_values();
  ASSERT_EQ(pa.size(), 4u);
  for (std::size_t i = 0; i < pa[0].size(); ++i) EXPECT_NEAR(pb[0][i], 5.0 * pa[0][i], 1e-14);
  for (std::size_t s = 1; s < pa.size(); ++s)
    EXPECT_TRUE(std::equal(pa[s].begin(), pa[s].end(), pb[s].begin()));
  EXPECT_EQ(model_config_from_json(model_config_to_json(b.config())).layers[0].guide_gain, 5.0);
}

TEST(Config, ModelJsonRoundTrip) {
  ModelConfig cfg;
  cfg.input_h = 9;
  cfg.input_w = 7;
  LayerConfig l;
  l.type = LayerKind::drconv;
  l.out_channels = 3;
  l.m = 2;
  l.padding = Padding::circular;
  cfg.layers = {l};
  cfg.head = HeadKind::flatten;
  cfg.classes = 3;
  cfg.resolve();
  const std::string text = model_config_to_json(cfg);
  EXPECT_EQ(model_config_to_json(model_config_from_json(text)), text);
}

TEST(Config, DataSpec) {
  const DataConfig d = parse_data_spec("idx:a.idx,b.idx", std::nullopt);
  EXPECT_EQ(d.source, "idx");
  EXPECT_EQ(d.images, "a.idx");
  EXPECT_EQ(d.labels, "b.idx");
  EXPECT_EQ(parse_data_spec("synth", std::nullopt).source, "synth");
  EXPECT_THROW(parse_data_spec("idx:only", std::nullopt), ConfigError);
  EXPECT_THROW(parse_data_spec("csv:x", std::nullopt), ConfigError);
}

ModelConfig small_config(LayerKind first, LayerKind second, HeadKind head) {
  ModelConfig cfg;
  cfg.input_h = 7;
  cfg.input_w = 6;
  cfg.input_c = 2;
  LayerConfig a;
  a.type = first;
  a.out_channels = 3;
  a.m = 2;
  a.pool_after = true;
  LayerConfig b;
  b.type = second;
  b.out_channels = 2;
  b.m = 2;
  b.padding = Padding::circular;
  cfg.layers = {a, b};
  cfg.head = head;
  cfg.head_width = head == HeadKind::flatten ? 4 : 0;
  cfg.classes = 3;
  return cfg;
}

struct FdResult {
  double max_rel = 0.0;
  std::size_t count = 0;
};

// L = <logits, R>; compares the model gradient of every parameter array of
// modules[from..] against central differences.
FdResult check_params(Model& model, const Tensor4& x, std::size_t from, bool skip_guide) {
  std::mt19937_64 rng(99);
  const Tensor4 logits = model.forward(x);
  const Tensor4 r = testing::random_tensor(logits.shape(), rng);
  Model::Trace trace = model.forward_trace(x);
  const auto grads = model.backward(trace, r);
  const double h = 1e-6;
  FdResult res;
  for (std::size_t i = from; i < model.modules().size(); ++i) {
    auto slots = model.modules()[i]->params();
    for (std::size_t s = 0; s < slots.size(); ++s) {
      if (skip_guide && slots[s].name == "guide") continue;
      for (std::size_t e = 0; e < slots[s].values.size(); ++e) {
        double& v = slots[s].values[e];
        const double keep = v;
        v = keep + h;
        const double up = dot(model.forward(x), r);
        v = keep - h;
        const double down = dot(model.forward(x), r);
        v = keep;
        const double fd = (up - down) / (2 * h);
        const double an = grads[i][s][e];
        res.max_rel = std::max(res.max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
        ++res.count;
      }
    }
  }
  return res;
}

TEST(ModelGradient, StandardAndLocalStackMatchesFiniteDifferences) {
  for (HeadKind head : {HeadKind::gap, HeadKind::flatten}) {
    Model model = Model::build(small_config(LayerKind::standard, LayerKind::local, head), 5);
    std::mt19937_64 rng(1);
    const Tensor4 x = testing::random_tensor({2, 7, 6, 2}, rng);
    const FdResult r = check_params(model, x, 0, false);
    EXPECT_GT(r.count, 100u);
    EXPECT_LT(r.max_rel, 1e-6);
  }
}

// Without a drconv layer downstream, every parameter except the guide weights
// has an exact gradient under the frozen mask.
TEST(ModelGradient, DrconvFirstMatchesFiniteDifferences) {
  Model model = Model::build(small_config(LayerKind::drconv, LayerKind::local, HeadKind::flatten), 8);
  std::mt19937_64 rng(2);
  const Tensor4 x = testing::random_tensor({2, 7, 6, 2}, rng);
  const FdResult r = check_params(model, x, 0, true);
  EXPECT_GT(r.count, 100u);
  EXPECT_LT(r.max_rel, 1e-6);
}

TEST(ModelGradient, DrconvAfterStandardStem) {
  Model model = Model::build(small_config(LayerKind::standard, LayerKind::drconv, HeadKind::gap), 3);
  std::mt19937_64 rng(4);
  const Tensor4 x = testing::random_tensor({2, 7, 6, 2}, rng);
  const std::size_t drconv_index = 3;  // conv, relu, pool, drconv
  ASSERT_EQ(model.modules()[drconv_index]->type(), "drconv");
  const FdResult r = check_params(model, x, drconv_index, true);
  EXPECT_GT(r.count, 30u);
  EXPECT_LT(r.max_rel, 1e-6);
}

TEST(Model, ForwardShapeAndInputCheck) {
  const Model model = Model::build(small_config(LayerKind::standard, LayerKind::drconv, HeadKind::gap), 1);
  const Tensor4 y = model.forward(Tensor4::zeros({3, 7, 6, 2}));
  EXPECT_EQ(y.shape(), (Shape4{3, 1, 1, 3}));
  EXPECT_THROW(model.forward(Tensor4::zeros({1, 6, 6, 2})), ShapeError);
}

TEST(Model, BuildIsDeterministicInTheSeed) {
  const auto cfg = small_config(LayerKind::drconv, LayerKind::local, HeadKind::flatten);
  const Model a = Model::build(cfg, 12);
  const Model b = Model::build(cfg, 12);
  const Model c = Model::build(cfg, 13);
  std::mt19937_64 rng(0);
  const Tensor4 x = testing::random_tensor({2, 7, 6, 2}, rng);
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_NE(a.forward(x), c.forward(x));
}

TEST(Model, GuidedMaskLookup) {
  const Model model = Model::build(small_config(LayerKind::standard, LayerKind::drconv, HeadKind::gap), 1);
  EXPECT_EQ(model.drconv_layer_names(), (std::vector<std::string>{"conv2"}));
  const GuidedMask mask = model.guided_mask("conv2", Tensor4::filled({2, 7, 6, 2}, 0.5));
  EXPECT_EQ(mask.n(), 2u);
  EXPECT_EQ(mask.h(), 3u);
  EXPECT_EQ(mask.w(), 3u);
  EXPECT_LE(mask.max_value(), 1);
  try {
    model.guided_mask("conv1", Tensor4::zeros({1, 7, 6, 2}));
    FAIL() << "expected LookupError";
  } catch (const LookupError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2"), std::string::npos);
  }
}

TEST(Model, CostTableSumsToParamCount) {
  const Model model = Model::build(small_config(LayerKind::drconv, LayerKind::local, HeadKind::flatten), 1);
  const auto rows = model.cost_table();
  std::uint64_t params = 0;
  for (const auto& row : rows) params += row.cost.params;
  EXPECT_EQ(params, model.param_count());
  ASSERT_GE(rows.size(), 4u);
  EXPECT_EQ(rows[0].type, "drconv");
  EXPECT_EQ(rows[0].input, (Shape4{1, 7, 6, 2}));
  EXPECT_EQ(rows[1].type, "local");
  EXPECT_EQ(rows[1].input, (Shape4{1, 3, 3, 3}));
}

TEST(Model, AcceptanceConfigsAreParameterMatched) {
  const RunConfig dr = load_run_config(std::string(DRCONV_CONFIG_DIR) + "/drconv_synth.json");
  const RunConfig st = load_run_config(std::string(DRCONV_CONFIG_DIR) + "/standard_synth.json");
  const double a = static_cast<double>(Model::build(dr.model, 1).param_count());
  const double b = static_cast<double>(Model::build(st.model, 1).param_count());
  EXPECT_LT(std::abs(a - b) / b, 0.05);
  std::size_t drconv_layers = 0;
  for (const auto& l : dr.model.layers) drconv_layers += l.type == LayerKind::drconv;
  EXPECT_GE(drconv_layers, 1u);
  EXPECT_EQ(dr.model.layers.size(), 3u);
  EXPECT_EQ(st.model.layers.size(), 3u);
}

}  // namespace
}  // namespace drconv
