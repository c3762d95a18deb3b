#pragma once

#include <span>
#include <string>
#include <vector>

#include "lahn/error.hpp"
#include "lahn/ops.hpp"
#include "lahn/sampler.hpp"
#include "lahn/tensor.hpp"

namespace lahn {

/// Similarities for one anchor: its positive and its (possibly empty)
/// selected negatives. An empty negative list is an undefined tensor.
struct ContrastiveInputs {
  ad::Tensor pos_sim;   // scalar
  ad::Tensor neg_sims;  // [n], n <= k
};

struct LossBreakdown {
  double l_cl = 0.0;
  double l_ce = 0.0;
  double total = 0.0;
  double lambda = 0.1;
};

namespace detail {

inline void require_tau(double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be > 0, got " + std::to_string(tau));
}

inline void require_binary(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw ValidationError("label must be 0 or 1, got " + std::to_string(y));
}

}  // namespace detail

/// Mean over anchors of the softmax cross-entropy of
/// [pos/tau, neg_1/tau, ..., neg_n/tau] against index 0. The positive is part
/// of the denominator; an anchor with no negatives contributes exactly 0.
inline ad::Tensor contrastive_loss(ad::Tape& tape, std::span<const ContrastiveInputs> anchors, double tau) {
  detail::require_tau(tau);
  if (anchors.empty()) throw DimensionError("contrastive_loss: no anchors");
  static constexpr int kPositive[1] = {0};
  std::vector<ad::Tensor> per_anchor;
  per_anchor.reserve(anchors.size());
  for (const auto& a : anchors) {
    std::vector<ad::Tensor> parts{a.pos_sim};
    if (a.neg_sims.defined()) parts.push_back(a.neg_sims);
    ad::Tensor sims = ad::concat(tape, parts);
    ad::Tensor logits = ad::reshape(tape, ad::scale(tape, sims, 1.0 / tau), {1, sims.size()});
    per_anchor.push_back(ad::softmax_cross_entropy(tape, logits, kPositive));
  }
  return ad::mean(tape, ad::concat(tape, per_anchor));
}

/// Scalar convenience form of contrastive_loss for one anchor.
inline double contrastive_loss(double pos_sim, const std::vector<double>& neg_sims, double tau) {
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  ContrastiveInputs in{ad::Tensor::scalar(pos_sim),
                       neg_sims.empty() ? ad::Tensor() : ad::Tensor::vector(neg_sims)};
  return contrastive_loss(tape, std::span<const ContrastiveInputs>(&in, 1), tau).item();
}

/// Batch-mean 2-class softmax cross-entropy.
inline ad::Tensor classification_loss(ad::Tape& tape, const ad::Tensor& logits, std::span<const int> labels) {
  detail::require_binary(labels);
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw DimensionError("classification_loss: expected [B x 2] logits, got " + ad::to_string(logits.shape()));
  }
  return ad::softmax_cross_entropy(tape, logits, labels);
}

inline double combined_loss(double l_cl, double l_ce, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ParameterError("lambda must be in [0, 1], got " + std::to_string(lambda));
  }
  return (1.0 - lambda) * l_cl + lambda * l_ce;
}

/// (1 - lambda) * l_cl + lambda * l_ce on the tape.
inline ad::Tensor combined_loss(ad::Tape& tape, const ad::Tensor& l_cl, const ad::Tensor& l_ce, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ParameterError("lambda must be in [0, 1], got " + std::to_string(lambda));
  }
  return ad::add(tape, ad::scale(tape, l_cl, 1.0 - lambda), ad::scale(tape, l_ce, lambda));
}

/// Per-anchor similarities between anchor features [B × d] (on the tape) and
/// constant positives [B × d] plus each anchor's selected negatives.
inline std::vector<ContrastiveInputs> anchor_similarities(ad::Tape& tape, const ad::Tensor& anchors,
                                                          const ad::Tensor& positives,
                                                          const std::vector<HardNegativeSet>& negatives) {
  if (anchors.shape() != positives.shape()) {
    throw DimensionError("anchor_similarities: anchors " + ad::to_string(anchors.shape()) + " vs positives " +
                         ad::to_string(positives.shape()));
  }
  const std::size_t batch = anchors.dim(0), dim = anchors.dim(1);
  if (negatives.size() != batch) {
    throw DimensionError("anchor_similarities: " + std::to_string(negatives.size()) + " negative sets for " +
                         std::to_string(batch) + " anchors");
  }
  std::vector<ContrastiveInputs> out(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    ad::Tensor a = ad::row(tape, anchors, i);
    out[i].pos_sim = ad::cosine_similarity(tape, a, ad::row(tape, positives, i));
    const HardNegativeSet& neg = negatives[i];
    if (neg.empty()) continue;
    std::vector<ad::Tensor> sims;
    sims.reserve(neg.size());
    for (std::size_t j = 0; j < neg.size(); ++j) {
      std::vector<double> f(neg.features.begin() + static_cast<std::ptrdiff_t>(j * dim),
                            neg.features.begin() + static_cast<std::ptrdiff_t>((j + 1) * dim));
      sims.push_back(ad::cosine_similarity(tape, a, ad::Tensor::vector(std::move(f))));
    }
    out[i].neg_sims = ad::concat(tape, sims);
  }
  return out;
}

/// Supervised contrastive loss over one batch: for anchor i with same-label
/// partners P(i), -(1/|P(i)|) sum_p log(exp(s_ip/tau) / sum_{a != i} exp(s_ia/tau))
/// with s = cosine similarity. Averaged over anchors with |P(i)| > 0.
inline ad::Tensor scl_loss(ad::Tape& tape, const ad::Tensor& features, std::span<const int> labels, double tau) {
  detail::require_tau(tau);
  detail::require_binary(labels);
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("scl_loss: features " + ad::to_string(features.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = labels.size();
  if (batch < 2) throw DimensionError("scl_loss: batch must hold at least 2 examples");
  std::vector<ad::Tensor> rows;
  rows.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) rows.push_back(ad::row(tape, features, i));

  std::vector<ad::Tensor> per_anchor;
  for (std::size_t i = 0; i < batch; ++i) {
    std::vector<int> positive_slots;
    std::vector<ad::Tensor> sims;
    for (std::size_t a = 0; a < batch; ++a) {
      if (a == i) continue;
      if (labels[a] == labels[i]) positive_slots.push_back(static_cast<int>(sims.size()));
      sims.push_back(ad::cosine_similarity(tape, rows[i], rows[a]));
    }
    if (positive_slots.empty()) continue;
    ad::Tensor logits = ad::reshape(tape, ad::scale(tape, ad::concat(tape, sims), 1.0 / tau), {1, sims.size()});
    std::vector<ad::Tensor> terms;
    for (int slot : positive_slots) {
      const int target[1] = {slot};
      terms.push_back(ad::softmax_cross_entropy(tape, logits, target));
    }
    per_anchor.push_back(ad::mean(tape, ad::concat(tape, terms)));
  }
  if (per_anchor.empty()) return ad::Tensor::scalar(0.0);
  return ad::mean(tape, ad::concat(tape, per_anchor));
}

}  // namespace lahn
