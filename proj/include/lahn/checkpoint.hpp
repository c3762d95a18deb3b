#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "lahn/config.hpp"
#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/io.hpp"

namespace lahn {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  EncoderParams main;
  std::optional<EncoderParams> momentum;
  std::size_t epoch = 0;
  double val_macro_f1 = 0.0;
};

namespace detail {

inline nlohmann::json params_to_json(const EncoderParams& p) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : p.named()) {
    out[name] = {{"shape", t.shape()}, {"values", t.data()}};
  }
  return out;
}

inline EncoderParams params_from_json(const nlohmann::json& j, const EncoderDims& dims, bool trainable) {
  EncoderParams p;
  p.dims = dims;
  auto load = [&](const char* name) {
    if (!j.contains(name)) throw ParseError(std::string("checkpoint: missing tensor '") + name + "'");
    const auto& t = j.at(name);
    return ad::Tensor(t.at("shape").get<ad::Shape>(), t.at("values").get<std::vector<double>>(), trainable);
  };
  p.embedding = load("embedding");
  p.w1 = load("w1");
  p.b1 = load("b1");
  p.w2 = load("w2");
  p.b2 = load("b2");
  p.w_head = load("w_head");
  p.b_head = load("b_head");
  const EncoderParams expected = init_params(0, dims);
  auto have = p.named();
  auto want = expected.named();
  for (std::size_t k = 0; k < have.size(); ++k) {
    if (have[k].second.shape() != want[k].second.shape()) {
      throw ValidationError("checkpoint: tensor '" + have[k].first + "' has shape " +
                            ad::to_string(have[k].second.shape()) + ", expected " +
                            ad::to_string(want[k].second.shape()));
    }
  }
  return p;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = "lahn-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(c.config);
  j["vocab_size"] = c.main.dims.vocab_size;
  j["epoch"] = c.epoch;
  j["val_macro_f1"] = c.val_macro_f1;
  j["main"] = detail::params_to_json(c.main);
  if (c.momentum) j["momentum"] = detail::params_to_json(*c.momentum);
  return j.dump() + "\n";
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& source = "<checkpoint>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "lahn-checkpoint") throw ParseError(source + ": not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ParseError(source + ": unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint c;
    c.config = config_from_json(j.at("config"));
    c.epoch = j.at("epoch").get<std::size_t>();
    c.val_macro_f1 = j.at("val_macro_f1").get<double>();
    const EncoderDims dims = c.config.encoder_dims(j.at("vocab_size").get<std::size_t>());
    c.main = detail::params_from_json(j.at("main"), dims, true);
    if (j.contains("momentum")) c.momentum = detail::params_from_json(j.at("momentum"), dims, false);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source + ": " + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  write_file_atomic(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path), path); }

}  // namespace lahn
