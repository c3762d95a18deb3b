#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lahn/error.hpp"
#include "lahn/ops.hpp"
#include "lahn/rng.hpp"
#include "lahn/tensor.hpp"
#include "lahn/text.hpp"

namespace lahn {

enum class Activation { Gelu, Relu };

inline std::string to_string(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  throw ParameterError("unknown activation '" + s + "' (expected gelu or relu)");
}

struct EncoderDims {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 64;
  std::size_t hidden = 128;
  std::size_t d_feat = 64;
  double dropout = 0.1;
  Activation activation = Activation::Gelu;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// embedding -> masked mean pool -> dropout -> linear -> act -> dropout ->
/// linear (feature) -> linear head (2 logits).
struct EncoderParams {
  EncoderDims dims;
  ad::Tensor embedding;  // [V × d_emb]
  ad::Tensor w1, b1;     // [d_emb × hidden], [hidden]
  ad::Tensor w2, b2;     // [hidden × d_feat], [d_feat]
  ad::Tensor w_head, b_head;  // [d_feat × 2], [2]

  std::vector<std::pair<std::string, ad::Tensor>> named() const {
    return {{"embedding", embedding}, {"w1", w1}, {"b1", b1},         {"w2", w2},
            {"b2", b2},               {"w_head", w_head}, {"b_head", b_head}};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named()) n += t.size();
    return n;
  }

  void zero_grad() const {
    for (auto& [name, t] : named()) {
      ad::Tensor handle = t;
      handle.zero_grad();
    }
  }

  void set_requires_grad(bool on) const {
    for (auto& [name, t] : named()) {
      ad::Tensor handle = t;
      handle.set_requires_grad(on);
    }
  }
};

struct EncoderOutput {
  ad::Tensor feature;  // [B × d_feat]
  ad::Tensor logits;   // [B × 2]
};

namespace detail {

inline ad::Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * a;
  return ad::Tensor::matrix(fan_in, fan_out, std::move(v), true);
}

}  // namespace detail

inline EncoderParams init_params(std::uint64_t seed, const EncoderDims& dims) {
  if (dims.vocab_size < 2 || dims.d_emb == 0 || dims.hidden == 0 || dims.d_feat == 0) {
    throw ParameterError("encoder dims must be positive with vocab_size >= 2");
  }
  if (!(dims.dropout >= 0.0 && dims.dropout < 1.0)) {
    throw ParameterError("encoder dropout must be in [0, 1)");
  }
  Rng rng(seed);
  EncoderParams p;
  p.dims = dims;
  std::vector<double> emb(dims.vocab_size * dims.d_emb);
  for (std::size_t i = 0; i < emb.size(); ++i) {
    emb[i] = i < dims.d_emb ? 0.0 : rng.normal(0.0, 0.02);  // PAD row stays zero
  }
  p.embedding = ad::Tensor::matrix(dims.vocab_size, dims.d_emb, std::move(emb), true);
  p.w1 = detail::glorot_uniform(dims.d_emb, dims.hidden, rng);
  p.b1 = ad::Tensor::zeros({dims.hidden}, true);
  p.w2 = detail::glorot_uniform(dims.hidden, dims.d_feat, rng);
  p.b2 = ad::Tensor::zeros({dims.d_feat}, true);
  p.w_head = detail::glorot_uniform(dims.d_feat, 2, rng);
  p.b_head = ad::Tensor::zeros({2}, true);
  return p;
}

/// Deep copy. The copy is gradient-exempt; momentum encoders are built this way.
inline EncoderParams clone_params(const EncoderParams& src) {
  EncoderParams p;
  p.dims = src.dims;
  p.embedding = src.embedding.detach();
  p.w1 = src.w1.detach();
  p.b1 = src.b1.detach();
  p.w2 = src.w2.detach();
  p.b2 = src.b2.detach();
  p.w_head = src.w_head.detach();
  p.b_head = src.b_head.detach();
  return p;
}

/// Applies the prediction head alone to features [S × d_feat].
inline ad::Tensor apply_head(ad::Tape& tape, const EncoderParams& p, const ad::Tensor& features) {
  return ad::add_bias(tape, ad::matmul(tape, features, p.w_head), p.b_head);
}

inline EncoderOutput forward(ad::Tape& tape, const EncoderParams& p, const Batch& batch, bool training,
                             Rng& rng) {
  const double drop = p.dims.dropout;
  ad::Tensor emb = ad::embedding_lookup(tape, p.embedding, batch.token_ids);
  ad::Tensor pooled = ad::mean_pool_groups(tape, emb, batch.mask, batch.seq_len);
  pooled = ad::dropout(tape, pooled, drop, training, rng);
  ad::Tensor h = ad::add_bias(tape, ad::matmul(tape, pooled, p.w1), p.b1);
  h = p.dims.activation == Activation::Gelu ? ad::gelu(tape, h) : ad::relu(tape, h);
  h = ad::dropout(tape, h, drop, training, rng);
  ad::Tensor feature = ad::add_bias(tape, ad::matmul(tape, h, p.w2), p.b2);
  ad::Tensor logits = apply_head(tape, p, feature);
  return {feature, logits};
}

/// Gradient-free forward (no tape kept).
inline EncoderOutput forward_eval(const EncoderParams& p, const Batch& batch) {
  ad::Tape scratch(ad::Tape::Mode::NoGrad);
  Rng unused(0);
  return forward(scratch, p, batch, false, unused);
}

}  // namespace lahn
