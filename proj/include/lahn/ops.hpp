#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "lahn/error.hpp"
#include "lahn/rng.hpp"
#include "lahn/tensor.hpp"

// Differentiable operations over ad::Tensor. Every op takes the Tape first;
// results are recorded only when an input requires a gradient.

namespace lahn::ad {

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

inline void accumulate(const Tensor& t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto buf = t.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace detail

/// c = a·b for a [m×n], b [n×p].
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = av[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = &bv[k * p];
      double* orow = &out[i * p];
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return tape.record("matmul", {a, b}, {m, p}, std::move(out),
                     [a, b, m, n, p](const Tensor& c) {
                       auto gc = c.grad();
                       if (a.requires_grad()) {
                         auto ga = a.grad_buffer();
                         auto bv = b.values();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t k = 0; k < n; ++k) {
                             double s = 0.0;
                             for (std::size_t j = 0; j < p; ++j) s += gc[i * p + j] * bv[k * p + j];
                             ga[i * n + k] += s;
                           }
                       }
                       if (b.requires_grad()) {
                         auto gb = b.grad_buffer();
                         auto av = a.values();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t k = 0; k < n; ++k) {
                             const double aik = av[i * n + k];
                             if (aik == 0.0) continue;
                             for (std::size_t j = 0; j < p; ++j) gb[k * p + j] += aik * gc[i * p + j];
                           }
                       }
                     });
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return tape.record("add", {a, b}, a.shape(), std::move(out),
                     [a, b](const Tensor& c) {
                       detail::accumulate(a, c.grad());
                       detail::accumulate(b, c.grad());
                     });
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return tape.record("mul", {a, b}, a.shape(), std::move(out),
                     [a, b](const Tensor& c) {
                       auto gc = c.grad();
                       if (a.requires_grad()) {
                         auto ga = a.grad_buffer();
                         for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += gc[i] * b[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = b.grad_buffer();
                         for (std::size_t i = 0; i < gc.size(); ++i) gb[i] += gc[i] * a[i];
                       }
                     });
}

inline Tensor scale(Tape& tape, const Tensor& a, double alpha) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * a[i];
  return tape.record("scale", {a}, a.shape(), std::move(out),
                     [a, alpha](const Tensor& c) {
                       auto gc = c.grad();
                       auto ga = a.grad_buffer();
                       for (std::size_t i = 0; i < gc.size(); ++i) ga[i] += alpha * gc[i];
                     });
}

/// Adds the vector bias [n] to every row of x [m×n].
inline Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  detail::require_rank(x, 2, "add_bias");
  detail::require_rank(bias, 1, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not fit rows of " +
                         to_string(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + bias[j];
  return tape.record("add_bias", {x, bias}, x.shape(), std::move(out),
                     [x, bias, m, n](const Tensor& c) {
                       auto gc = c.grad();
                       detail::accumulate(x, gc);
                       if (bias.requires_grad()) {
                         auto gb = bias.grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += gc[i * n + j];
                       }
                     });
}

inline Tensor relu(Tape& tape, const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return tape.record("relu", {x}, x.shape(), std::move(out), [x](const Tensor& c) {
    auto gc = c.grad();
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gc.size(); ++i)
      if (x[i] > 0.0) gx[i] += gc[i];
  });
}

/// tanh approximation of GELU.
inline Tensor gelu(Tape& tape, const Tensor& x) {
  using detail::kGeluA;
  using detail::kGeluC;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return tape.record("gelu", {x}, x.shape(), std::move(out), [x](const Tensor& c) {
    auto gc = c.grad();
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gc.size(); ++i) {
      const double v = x[i];
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx[i] += gc[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
  });
}

/// Inverted dropout: survivors are scaled by 1/(1-p); identity in eval mode.
inline Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out[i] = x[i] * mask[i];
  }
  return tape.record("dropout", {x}, x.shape(), std::move(out),
                     [x, mask = std::move(mask)](const Tensor& c) {
                       auto gc = c.grad();
                       auto gx = x.grad_buffer();
                       for (std::size_t i = 0; i < gc.size(); ++i) gx[i] += gc[i] * mask[i];
                     });
}

/// Gathers rows of table [V×d]; backward scatter-adds into the table.
inline Tensor embedding_lookup(Tape& tape, const Tensor& table, std::span<const int> ids) {
  detail::require_rank(table, 2, "embedding_lookup");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError("embedding_lookup: empty id sequence");
  std::vector<double> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[r]) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
    std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return tape.record("embedding_lookup", {table}, {ids.size(), d}, std::move(out),
                     [table, id_copy = std::vector<int>(ids.begin(), ids.end()),
                      d](const Tensor& c) {
                       auto gc = c.grad();
                       auto gt = table.grad_buffer();
                       for (std::size_t r = 0; r < id_copy.size(); ++r)
                         for (std::size_t j = 0; j < d; ++j)
                           gt[static_cast<std::size_t>(id_copy[r]) * d + j] += gc[r * d + j];
                     });
}

/// Mean of the unmasked rows inside each consecutive group of `group` rows:
/// x [(B·group)×d] -> [B×d]. Masked rows get zero gradient.
inline Tensor mean_pool_groups(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask,
                               std::size_t group) {
  detail::require_rank(x, 2, "mean_pool");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  if (mask.size() != rows) {
    throw DimensionError("mean_pool: mask length " + std::to_string(mask.size()) +
                         " != rows " + std::to_string(rows));
  }
  if (group == 0 || rows % group != 0) {
    throw DimensionError("mean_pool: " + std::to_string(rows) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t batch = rows / group;
  std::vector<double> inv_count(batch);
  std::vector<double> out(batch * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < group; ++t) {
      if (!mask[b * group + t]) continue;
      ++count;
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += x[(b * group + t) * d + j];
    }
    if (count == 0) throw ValidationError("mean_pool: sequence " + std::to_string(b) + " is empty");
    inv_count[b] = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] *= inv_count[b];
  }
  return tape.record("mean_pool", {x}, {batch, d}, std::move(out),
                     [x, m = std::vector<std::uint8_t>(mask.begin(), mask.end()), inv_count,
                      group, d](const Tensor& c) {
                       auto gc = c.grad();
                       auto gx = x.grad_buffer();
                       for (std::size_t r = 0; r < m.size(); ++r) {
                         if (!m[r]) continue;
                         const std::size_t b = r / group;
                         for (std::size_t j = 0; j < d; ++j)
                           gx[r * d + j] += gc[b * d + j] * inv_count[b];
                       }
                     });
}

/// Mean of unmasked rows of x [T×d] -> [d].
inline Tensor mean_pool(Tape& tape, const Tensor& x, std::span<const std::uint8_t> mask) {
  detail::require_rank(x, 2, "mean_pool");
  Tensor pooled = mean_pool_groups(tape, x, mask, x.dim(0));
  const std::size_t d = x.dim(1);
  return tape.record("reshape", {pooled}, {d}, pooled.data(), [pooled](const Tensor& c) {
    detail::accumulate(pooled, c.grad());
  });
}

inline Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  return tape.record("reshape", {x}, std::move(shape), x.data(),
                     [x](const Tensor& c) { detail::accumulate(x, c.grad()); });
}

/// Row i of x [m×n] as a vector [n].
inline Tensor row(Tape& tape, const Tensor& x, std::size_t i) {
  detail::require_rank(x, 2, "row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (i >= m) throw IndexError("row: index " + std::to_string(i) + " outside " + std::to_string(m));
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(i * n),
                          x.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return tape.record("row", {x}, {n}, std::move(out), [x, i, n](const Tensor& c) {
    auto gc = c.grad();
    auto gx = x.grad_buffer();
    for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gc[j];
  });
}

/// Concatenates scalars and vectors into one vector.
inline Tensor concat(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rank() > 1) throw DimensionError("concat: rank > 1 input " + to_string(p.shape()));
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t n = out.size();
  return tape.record("concat", parts, {n}, std::move(out),
                     [parts, offsets](const Tensor& c) {
                       auto gc = c.grad();
                       for (std::size_t k = 0; k < parts.size(); ++k)
                         detail::accumulate(parts[k], gc.subspan(offsets[k], parts[k].size()));
                     });
}

inline Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return tape.record("sum", {x}, {}, {s}, [x](const Tensor& c) {
    const double g = c.grad()[0];
    auto gx = x.grad_buffer();
    for (double& v : gx) v += g;
  });
}

inline Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

/// a·b / (max(|a|, eps)·max(|b|, eps)) for vectors of equal length.
inline Tensor cosine_similarity(Tape& tape, const Tensor& a, const Tensor& b, double eps = 1e-8) {
  if (a.size() != b.size() || a.size() == 0) {
    throw DimensionError("cosine_similarity: length mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double da = std::max(na, eps), db = std::max(nb, eps);
  const double cos = dot / (da * db);
  return tape.record("cosine_similarity", {a, b}, {}, {cos},
                     [a, b, na, nb, da, db, cos, eps](const Tensor& c) {
                       const double g = c.grad()[0];
                       // Norm terms only contribute when the eps clamp is inactive.
                       if (a.requires_grad()) {
                         auto ga = a.grad_buffer();
                         const double corr = na > eps ? cos / (na * na) : 0.0;
                         for (std::size_t i = 0; i < ga.size(); ++i)
                           ga[i] += g * (b[i] / (da * db) - corr * a[i]);
                       }
                       if (b.requires_grad()) {
                         auto gb = b.grad_buffer();
                         const double corr = nb > eps ? cos / (nb * nb) : 0.0;
                         for (std::size_t i = 0; i < gb.size(); ++i)
                           gb[i] += g * (a[i] / (da * db) - corr * b[i]);
                       }
                     });
}

/// Batch mean of -log softmax(logits)[target] for logits [B×C].
inline Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  detail::require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != batch) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(batch) + " rows");
  }
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= classes) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
    const double* row = &logits.values()[i * classes];
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] = std::exp(row[j] - log_z);
    loss += log_z - row[static_cast<std::size_t>(targets[i])];
  }
  loss /= static_cast<double>(batch);
  return tape.record(
      "softmax_cross_entropy", {logits}, {}, {loss},
      [logits, probs = std::move(probs), t = std::vector<int>(targets.begin(), targets.end()),
       batch, classes](const Tensor& c) {
        const double g = c.grad()[0] / static_cast<double>(batch);
        auto gl = logits.grad_buffer();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < classes; ++j) {
            const double onehot = static_cast<std::size_t>(t[i]) == j ? 1.0 : 0.0;
            gl[i * classes + j] += g * (probs[i * classes + j] - onehot);
          }
      });
}

}  // namespace lahn::ad
