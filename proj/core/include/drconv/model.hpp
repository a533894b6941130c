#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drconv/conv.hpp"
#include "drconv/layers.hpp"

namespace drconv {

enum class LayerKind { standard, drconv, local };
enum class HeadKind { gap, flatten };

const char* to_string(LayerKind k) noexcept;
const char* to_string(HeadKind h) noexcept;

struct LayerConfig {
  std::string name;  // defaults to conv<i> (1-based)
  LayerKind type = LayerKind::standard;
  std::size_t k = 3;
  std::size_t stride = 1;
  Padding padding = Padding::same_zero;
  std::size_t in_channels = 0;  // 0: inferred from the previous layer
  std::size_t out_channels = 0;
  std::size_t m = 4;       // drconv only
  std::size_t hidden = 0;  // drconv only; 0 selects m * in_channels
  double guide_gain = 1.0; // drconv only; scales the guide init bound
  bool bias = true;        // standard only
  bool pool_after = false; // 2x2 max pooling after the activation
};

// Conv stack (each conv followed by ReLU and optional pooling), then a head:
// global average pooling or flatten, an optional hidden dense layer of
// head_width units with ReLU, and a dense classifier.
struct ModelConfig {
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  std::size_t input_c = 1;
  std::vector<LayerConfig> layers;
  HeadKind head = HeadKind::gap;
  std::size_t head_width = 0;
  std::size_t classes = 2;

  // Fills inferred fields and throws ConfigError naming the offending field.
  void resolve();
};

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  // Global L2 bound on each step's gradient; 0 disables clipping.
  double clip_norm = 0.0;

  void validate() const;
};

struct DataConfig {
  std::string source = "synth";  // synth | idx
  std::string images;            // idx only
  std::string labels;            // idx only
  double val_fraction = 0.2;     // idx only: tail of the file held out
  std::size_t n_train = 4000;
  std::size_t n_val = 1000;
  std::size_t h = 24;
  std::size_t w = 24;
  std::size_t classes = 4;
  std::uint64_t seed = 7;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::optional<DataConfig> data;
};

// JSON text <-> config. Unknown keys are rejected; errors name the field.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);
DataConfig parse_data_spec(const std::string& spec, const std::optional<DataConfig>& base);

class Model {
 public:
  static Model build(ModelConfig cfg, std::uint64_t seed);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<std::unique_ptr<Module>>& modules() const noexcept { return modules_; }
  std::vector<std::unique_ptr<Module>>& modules() noexcept { return modules_; }

  struct Trace {
    std::vector<std::unique_ptr<ModuleState>> states;
    std::vector<Tensor4> outputs;
    Tensor4 logits;
  };

  Trace forward_trace(const Tensor4& x) const;
  Tensor4 forward(const Tensor4& x) const;
  // Gradients for every module, aligned with modules() and their params().
  std::vector<ParamGrads> backward(Trace& trace, const Tensor4& dlogits) const;

  std::vector<std::string> drconv_layer_names() const;
  // Guided mask of the named drconv layer; LookupError lists the valid names.
  GuidedMask guided_mask(const std::string& layer, const Tensor4& x) const;

  struct CostRow {
    std::string name;
    std::string type;
    Shape4 input;
    LayerCost cost;
  };
  std::vector<CostRow> cost_table() const;
  std::uint64_t param_count() const;

 private:
  Model() = default;
  void require_input(const Tensor4& x) const;

  ModelConfig config_;
  std::vector<std::unique_ptr<Module>> modules_;
};

}  // namespace drconv
