#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/momentum.hpp"
#include "lahn/tensor.hpp"

namespace lahn {

enum class SamplingStrategy {
  AllQueue,        // every queue entry is a negative; labels and k ignored
  SimOnly,         // opposite-label entries ranked by cosine similarity
  LabelSimWeight,  // opposite-label entries ranked by similarity x anchor-class probability
};

inline std::string to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::AllQueue: return "all";
    case SamplingStrategy::SimOnly: return "sim";
    case SamplingStrategy::LabelSimWeight: return "simweight";
  }
  return "?";
}

inline SamplingStrategy parse_strategy(const std::string& s) {
  if (s == "all") return SamplingStrategy::AllQueue;
  if (s == "sim") return SamplingStrategy::SimOnly;
  if (s == "simweight") return SamplingStrategy::LabelSimWeight;
  throw ParameterError("unknown sampling strategy '" + s + "' (expected all, sim or simweight)");
}

/// Negatives chosen for one anchor. `positions` index the snapshot rows.
struct HardNegativeSet {
  std::size_t dim = 0;
  std::vector<std::size_t> positions;
  std::vector<double> scores;
  std::vector<double> similarities;
  std::vector<double> probabilities;
  std::vector<double> features;  // [size × dim], rows in selection order

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
};

inline double cosine(std::span<const double> a, std::span<const double> b, double eps = 1e-8) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return dot / (std::max(std::sqrt(aa), eps) * std::max(std::sqrt(bb), eps));
}

/// Queue positions whose label differs from the anchor's, in queue order.
inline std::vector<std::size_t> filter_true_negatives(int anchor_label, std::span<const int> queue_labels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < queue_labels.size(); ++i)
    if (queue_labels[i] != anchor_label) out.push_back(i);
  return out;
}

/// Softmax probability of `anchor_label` for each row of head logits [S × 2].
inline std::vector<double> anchor_class_prob(const ad::Tensor& head_logits, int anchor_label) {
  if (head_logits.rank() != 2 || head_logits.dim(1) != 2) {
    throw DimensionError("anchor_class_prob: expected [S x 2] logits, got " +
                         ad::to_string(head_logits.shape()));
  }
  if (anchor_label != 0 && anchor_label != 1) throw ValidationError("anchor label must be 0 or 1");
  const std::size_t rows = head_logits.dim(0);
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double own = head_logits.at(i, static_cast<std::size_t>(anchor_label));
    const double other = head_logits.at(i, static_cast<std::size_t>(1 - anchor_label));
    // p = 1 / (1 + exp(other - own)), evaluated without overflow
    const double d = other - own;
    out[i] = d > 0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  }
  return out;
}

/// Ranking scores for label-filtered candidates. `candidate_feats` is
/// [n × dim] and `probs` is aligned with it. SimOnly scores by cosine;
/// LabelSimWeight by cosine x probability; AllQueue passes the cosine through
/// unranked.
inline std::vector<double> score_candidates(std::span<const double> anchor_feat,
                                            std::span<const double> candidate_feats,
                                            std::span<const double> probs, SamplingStrategy strategy) {
  const std::size_t dim = anchor_feat.size();
  if (dim == 0 || candidate_feats.size() % dim != 0) {
    throw DimensionError("score_candidates: candidate block of " + std::to_string(candidate_feats.size()) +
                         " values does not fit feature dim " + std::to_string(dim));
  }
  const std::size_t n = candidate_feats.size() / dim;
  if (strategy == SamplingStrategy::LabelSimWeight && probs.size() != n) {
    throw DimensionError("score_candidates: " + std::to_string(probs.size()) + " probabilities for " +
                         std::to_string(n) + " candidates");
  }
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sim = cosine(anchor_feat, candidate_feats.subspan(i * dim, dim));
    scores[i] = strategy == SamplingStrategy::LabelSimWeight ? sim * probs[i] : sim;
  }
  return scores;
}

/// The k best candidates by descending score; ties go to the lower queue
/// index. Fewer than k candidates returns them all.
inline HardNegativeSet select_hard_negatives(std::span<const double> scores,
                                             std::span<const std::size_t> candidate_indices, std::size_t k) {
  if (k == 0) throw ParameterError("select_hard_negatives: k must be >= 1");
  if (scores.size() != candidate_indices.size()) {
    throw DimensionError("select_hard_negatives: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(candidate_indices.size()) + " candidates");
  }
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidate_indices[a] < candidate_indices[b];
  };
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  HardNegativeSet out;
  for (std::size_t r = 0; r < take; ++r) {
    out.positions.push_back(candidate_indices[order[r]]);
    out.scores.push_back(scores[order[r]]);
  }
  return out;
}

struct SamplerConfig {
  SamplingStrategy strategy = SamplingStrategy::LabelSimWeight;
  std::size_t k = 16;
};

/// Hard negatives for every anchor of a batch against one queue snapshot.
///
/// anchor_feats is [B × dim]. The momentum head is applied once to the whole
/// snapshot (eval mode). `self_entry` optionally names the queue entry that
/// holds each anchor's own momentum view so it is never its own negative.
inline std::vector<HardNegativeSet> sample_for_batch(const ad::Tensor& anchor_feats,
                                                     std::span<const int> anchor_labels,
                                                     const QueueSnapshot& snapshot,
                                                     const EncoderParams& momentum,
                                                     const SamplerConfig& cfg,
                                                     std::span<const std::optional<std::uint64_t>> self_entry = {}) {
  if (anchor_feats.rank() != 2 || anchor_feats.dim(0) != anchor_labels.size()) {
    throw DimensionError("sample_for_batch: anchors " + ad::to_string(anchor_feats.shape()) + " with " +
                         std::to_string(anchor_labels.size()) + " labels");
  }
  if (cfg.k == 0) throw ParameterError("sample_for_batch: k must be >= 1");
  const std::size_t batch = anchor_labels.size();
  const std::size_t dim = anchor_feats.dim(1);
  std::vector<HardNegativeSet> out(batch);
  for (auto& s : out) s.dim = dim;
  if (snapshot.size() == 0) return out;
  if (snapshot.dim != dim) {
    throw DimensionError("sample_for_batch: snapshot dim " + std::to_string(snapshot.dim) +
                         " vs anchor dim " + std::to_string(dim));
  }

  ad::Tape no_grad(ad::Tape::Mode::NoGrad);
  const ad::Tensor logits = apply_head(no_grad, momentum, snapshot.feature_matrix());
  const std::vector<double> prob_of[2] = {anchor_class_prob(logits, 0), anchor_class_prob(logits, 1)};

  for (std::size_t b = 0; b < batch; ++b) {
    const int label = anchor_labels[b];
    if (label != 0 && label != 1) throw ValidationError("anchor label must be 0 or 1");
    const auto anchor = anchor_feats.values().subspan(b * dim, dim);
    const std::optional<std::uint64_t> own = b < self_entry.size() ? self_entry[b] : std::nullopt;

    std::vector<std::size_t> candidates;
    if (cfg.strategy == SamplingStrategy::AllQueue) {
      for (std::size_t i = 0; i < snapshot.size(); ++i) candidates.push_back(i);
    } else {
      candidates = filter_true_negatives(label, snapshot.labels);
    }
    if (own) {
      std::erase_if(candidates, [&](std::size_t i) { return snapshot.entry_ids[i] == *own; });
    }

    std::vector<double> cand_feats;
    std::vector<double> cand_probs;
    cand_feats.reserve(candidates.size() * dim);
    for (std::size_t i : candidates) {
      auto f = snapshot.feature(i);
      cand_feats.insert(cand_feats.end(), f.begin(), f.end());
      cand_probs.push_back(prob_of[label][i]);
    }

    HardNegativeSet& set = out[b];
    if (cfg.strategy == SamplingStrategy::AllQueue) {
      set.positions = candidates;
      set.scores = score_candidates(anchor, cand_feats, cand_probs, SamplingStrategy::AllQueue);
    } else {
      const auto scores = score_candidates(anchor, cand_feats, cand_probs, cfg.strategy);
      HardNegativeSet picked = select_hard_negatives(scores, candidates, cfg.k);
      set.positions = std::move(picked.positions);
      set.scores = std::move(picked.scores);
    }
    for (std::size_t i : set.positions) {
      auto f = snapshot.feature(i);
      set.features.insert(set.features.end(), f.begin(), f.end());
      set.similarities.push_back(cosine(anchor, f));
      set.probabilities.push_back(prob_of[label][i]);
    }
  }
  return out;
}

}  // namespace lahn
