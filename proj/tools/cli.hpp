#pragma once

#include <ostream>
#include <utility>

#include "drconv/dataset.hpp"
#include "drconv/model.hpp"

namespace drconv::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kUsage = 2;

// Entry point of the drconv tool:
//   gradcheck | train | eval | cost | visualize
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct SplitData {
  Dataset train;
  Dataset val;
};

// Materialises a data config for a model. Synthetic data takes its image size
// and class count from the model; IDX data holds out the last val_fraction.
// Missing files and size disagreements throw ConfigError naming the field.
SplitData load_data(const DataConfig& data, const ModelConfig& model);

}  // namespace drconv::cli
