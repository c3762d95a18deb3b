#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/io.hpp"
#include "lahn/sampler.hpp"

namespace lahn {

enum class Objective { CE, SCL_CE, LAHN };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::CE: return "ce";
    case Objective::SCL_CE: return "scl";
    case Objective::LAHN: return "lahn";
  }
  return "?";
}

inline Objective parse_objective(const std::string& s) {
  if (s == "ce") return Objective::CE;
  if (s == "scl") return Objective::SCL_CE;
  if (s == "lahn") return Objective::LAHN;
  throw ParameterError("unknown objective '" + s + "' (expected ce, scl or lahn)");
}

/// Queue fill fraction at which hard-negative sampling switches on.
inline constexpr double kSamplingFillThreshold = 0.25;

struct TrainConfig {
  Objective objective = Objective::LAHN;
  SamplingStrategy strategy = SamplingStrategy::LabelSimWeight;
  double tau = 0.05;
  double lambda = 0.1;
  double m = 0.999;
  std::size_t q = 1024;
  std::size_t k = 16;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  double dropout = 0.1;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t d_emb = 64;
  std::size_t hidden = 128;
  std::size_t d_feat = 64;
  Activation activation = Activation::Gelu;
  std::size_t max_len = 64;
  std::size_t max_vocab = 20000;
  std::size_t min_freq = 2;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ParameterError("config: " + msg); };
    if (!(tau > 0.0)) fail("tau must be > 0");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must be in [0, 1]");
    if (!(m >= 0.0 && m <= 1.0)) fail("m must be in [0, 1]");
    if (k < 1) fail("k must be >= 1");
    if (q < k) fail("q must be >= k");
    if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
    if (batch_size < 2) fail("batch_size must be >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      fail("adam betas must be in [0, 1)");
    }
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (d_emb == 0 || hidden == 0 || d_feat == 0) fail("encoder dims must be >= 1");
    if (max_len == 0) fail("max_len must be >= 1");
    if (max_vocab < 2) fail("max_vocab must be >= 2");
  }

  EncoderDims encoder_dims(std::size_t vocab_size) const {
    return EncoderDims{vocab_size, d_emb, hidden, d_feat, dropout, activation};
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"objective", to_string(c.objective)}, {"strategy", to_string(c.strategy)},
      {"tau", c.tau},                        {"lambda", c.lambda},
      {"m", c.m},                            {"q", c.q},
      {"k", c.k},                            {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},          {"dropout", c.dropout},
      {"epochs", c.epochs},                  {"seed", c.seed},
      {"adam_beta1", c.adam_beta1},          {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},              {"d_emb", c.d_emb},
      {"hidden", c.hidden},                  {"d_feat", c.d_feat},
      {"activation", to_string(c.activation)}, {"max_len", c.max_len},
      {"max_vocab", c.max_vocab},            {"min_freq", c.min_freq},
  };
}

/// Applies the keys of `j` on top of `base`. Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ParseError("config: expected a JSON object");
  const nlohmann::json known = to_json(base);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw ParseError("config: unknown key '" + it.key() + "'");
  }
  TrainConfig c = base;
  try {
    auto num = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    if (j.contains("objective")) c.objective = parse_objective(j.at("objective").get<std::string>());
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    num("tau", c.tau);
    num("lambda", c.lambda);
    num("m", c.m);
    num("q", c.q);
    num("k", c.k);
    num("learning_rate", c.learning_rate);
    num("batch_size", c.batch_size);
    num("dropout", c.dropout);
    num("epochs", c.epochs);
    num("seed", c.seed);
    num("adam_beta1", c.adam_beta1);
    num("adam_beta2", c.adam_beta2);
    num("adam_eps", c.adam_eps);
    num("d_emb", c.d_emb);
    num("hidden", c.hidden);
    num("d_feat", c.d_feat);
    num("max_len", c.max_len);
    num("max_vocab", c.max_vocab);
    num("min_freq", c.min_freq);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace lahn
