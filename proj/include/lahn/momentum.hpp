#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/tensor.hpp"

namespace lahn {

/// Age-ordered copy of the queue, oldest entry first.
struct QueueSnapshot {
  std::size_t dim = 0;
  std::vector<double> features;  // [size × dim]
  std::vector<int> labels;
  std::vector<std::uint64_t> entry_ids;  // insertion counter of each entry

  std::size_t size() const { return labels.size(); }
  std::span<const double> feature(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  ad::Tensor feature_matrix() const {
    if (size() == 0) throw DimensionError("empty snapshot has no feature matrix");
    return ad::Tensor::matrix(size(), dim, features);
  }
};

/// Bounded FIFO of detached momentum features with labels. Entries are
/// evicted one at a time, oldest first, only when capacity is exceeded.
class MomentumQueue {
 public:
  MomentumQueue(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
    if (capacity == 0) throw ParameterError("queue capacity must be >= 1");
    if (dim == 0) throw ParameterError("queue feature dim must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_enqueued() const { return next_id_; }

  double fill_fraction() const { return static_cast<double>(size()) / static_cast<double>(capacity_); }

  /// Appends rows of `features` [B × dim] in batch order. Returns the entry
  /// id assigned to each row (ids of rows evicted in the same call included).
  std::vector<std::uint64_t> enqueue_batch(const ad::Tensor& features, std::span<const int> labels) {
    if (features.rank() != 2 || features.dim(1) != dim_) {
      throw DimensionError("enqueue: features " + ad::to_string(features.shape()) +
                           " do not match queue dim " + std::to_string(dim_));
    }
    if (features.dim(0) != labels.size()) {
      throw DimensionError("enqueue: " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(features.dim(0)) + " rows");
    }
    std::vector<std::uint64_t> ids;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      Entry e;
      e.id = next_id_++;
      e.label = labels[r];
      e.feature.assign(features.values().begin() + static_cast<std::ptrdiff_t>(r * dim_),
                       features.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * dim_));
      entries_.push_back(std::move(e));
      ids.push_back(entries_.back().id);
      if (entries_.size() > capacity_) entries_.pop_front();
    }
    return ids;
  }

  QueueSnapshot snapshot() const {
    QueueSnapshot s;
    s.dim = dim_;
    s.features.reserve(entries_.size() * dim_);
    for (const auto& e : entries_) {
      s.features.insert(s.features.end(), e.feature.begin(), e.feature.end());
      s.labels.push_back(e.label);
      s.entry_ids.push_back(e.id);
    }
    return s;
  }

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::uint64_t id = 0;
    int label = 0;
    std::vector<double> feature;
  };

  std::size_t capacity_;
  std::size_t dim_;
  std::deque<Entry> entries_;
  std::uint64_t next_id_ = 0;
};

struct EmaState {
  double m = 0.999;
  EncoderParams momentum;
};

inline EmaState make_ema_state(const EncoderParams& main, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ParameterError("momentum m must be in [0, 1], got " + std::to_string(m));
  return EmaState{m, clone_params(main)};
}

/// theta_m <- m * theta_m + (1 - m) * theta, elementwise, in place.
inline void ema_update(const EncoderParams& main, EmaState& state) {
  const double m = state.m;
  if (!(m >= 0.0 && m <= 1.0)) throw ParameterError("momentum m must be in [0, 1], got " + std::to_string(m));
  auto src = main.named();
  auto dst = state.momentum.named();
  for (std::size_t k = 0; k < src.size(); ++k) {
    const ad::Tensor& s = src[k].second;
    ad::Tensor d = dst[k].second;
    if (s.shape() != d.shape()) {
      throw DimensionError("ema_update: '" + src[k].first + "' shape " + ad::to_string(s.shape()) +
                           " vs momentum " + ad::to_string(d.shape()));
    }
    auto dv = d.mutable_values();
    auto sv = s.values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = m * dv[i] + (1.0 - m) * sv[i];
  }
}

}  // namespace lahn
