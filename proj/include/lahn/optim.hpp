#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lahn/encoder.hpp"
#include "lahn/error.hpp"

namespace lahn {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update at step t >= 1, in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
                      const AdamHyper& h, std::size_t t) {
  if (t < 1) throw ParameterError("adam_step: t must be >= 1");
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(grads.size()) + " grads for " +
                         std::to_string(params.size()) + " params");
  }
  if (moments.m.empty()) {
    moments.m.assign(params.size(), 0.0);
    moments.v.assign(params.size(), 0.0);
  }
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient");
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.m[i] = h.beta1 * moments.m[i] + (1.0 - h.beta1) * g;
    moments.v[i] = h.beta2 * moments.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = moments.m[i] / bc1;
    const double v_hat = moments.v[i] / bc2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

/// Adam over the trainable tensors of one EncoderParams. Moment buffers are
/// kept per named tensor of the parameter set it was built for.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(EncoderParams& params) {
    ++t_;
    auto named = params.named();
    if (moments_.empty()) moments_.resize(named.size());
    for (std::size_t k = 0; k < named.size(); ++k) {
      ad::Tensor& p = named[k].second;
      if (!p.requires_grad()) throw ParameterError("optimizer: '" + named[k].first + "' is gradient-exempt");
      std::vector<double> zeros;
      std::span<const double> g = p.grad();
      if (!p.has_grad()) {
        zeros.assign(p.size(), 0.0);
        g = zeros;
      }
      adam_step(p.mutable_values(), g, moments_[k], hyper_, t_);
    }
  }

  std::size_t steps() const { return t_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  const AdamHyper& hyper() const { return hyper_; }

 private:
  AdamHyper hyper_;
  std::vector<AdamMoments> moments_;
  std::size_t t_ = 0;
};

}  // namespace lahn
