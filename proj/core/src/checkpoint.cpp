#include "drconv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "drconv/errors.hpp"
#include "json.hpp"

namespace drconv {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'R', 'C', 'V', 'C', 'K', 'P', 'T'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t off, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= std::uint64_t{in[off + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
  json params = json::array();
  for (const auto& m : model.modules()) {
    auto& mod = const_cast<Module&>(*m);
    for (const ParamSlot& p : mod.params()) {
      params.push_back({{"module", m->name()}, {"name", p.name}, {"count", p.values.size()}});
    }
  }
  const json manifest{{"model", json::parse(model_config_to_json(model.config()))},
                      {"params", std::move(params)}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kCheckpointVersion, 4);
  put_le(out, text.size(), 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& m : model.modules())
    for (auto values : m->param_values())
      for (double v : values) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("not a drconv checkpoint (bad magic)");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t len = get_le(bytes, 12, 8);
  if (len > bytes.size() - 20) throw FormatError("checkpoint manifest is truncated");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is corrupt: ") + e.what());
  }
  if (!manifest.contains("model") || !manifest.contains("params") ||
      !manifest.at("params").is_array()) {
    throw FormatError("checkpoint manifest lacks model or params");
  }

  Model model = [&] {
    try {
      return Model::build(model_config_from_json(manifest.at("model").dump()), 0);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint model config invalid: ") + e.what());
    }
  }();

  const json& entries = manifest.at("params");
  std::size_t entry = 0;
  std::size_t offset = 20 + len;
  for (auto& m : model.modules()) {
    for (ParamSlot& p : m->params()) {
      if (entry >= entries.size()) throw FormatError("checkpoint manifest has too few params");
      const json& e = entries[entry++];
      if (e.value("module", "") != m->name() || e.value("name", "") != p.name ||
          e.value("count", std::size_t{0}) != p.values.size()) {
        throw FormatError("checkpoint manifest entry " + std::to_string(entry - 1) +
                          " does not match layer " + m->name() + "." + p.name);
      }
      if (bytes.size() - offset < 8 * p.values.size()) {
        throw FormatError("checkpoint payload is truncated");
      }
      for (double& v : p.values) {
        v = std::bit_cast<double>(get_le(bytes, offset, 8));
        offset += 8;
      }
    }
  }
  if (entry != entries.size()) throw FormatError("checkpoint manifest has extra params");
  if (offset != bytes.size()) throw FormatError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace drconv
