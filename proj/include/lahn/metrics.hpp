#pragma once

#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/io.hpp"
#include "lahn/text.hpp"

namespace lahn {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }

  /// 2PR/(P+R), defined as 0 when P + R == 0.
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

struct MetricsReport {
  double accuracy = 0.0;
  double f1[2] = {0.0, 0.0};
  double macro_f1 = 0.0;
  std::size_t n = 0;
  ConfusionCounts per_class[2];
};

/// Class c treated as the positive class.
inline ConfusionCounts confusion_for_class(std::span<const int> y_true, std::span<const int> y_pred, int c) {
  ConfusionCounts cc;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool t = y_true[i] == c, p = y_pred[i] == c;
    if (t && p) ++cc.tp;
    else if (!t && p) ++cc.fp;
    else if (t && !p) ++cc.fn;
    else ++cc.tn;
  }
  return cc;
}

inline MetricsReport metrics_from_predictions(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.empty()) throw ValidationError("metrics: empty split");
  if (y_true.size() != y_pred.size()) {
    throw DimensionError("metrics: " + std::to_string(y_pred.size()) + " predictions for " +
                         std::to_string(y_true.size()) + " labels");
  }
  MetricsReport r;
  r.n = y_true.size();
  for (int c : {0, 1}) {
    r.per_class[c] = confusion_for_class(y_true, y_pred, c);
    r.f1[c] = r.per_class[c].f1();
  }
  r.accuracy = static_cast<double>(r.per_class[0].tp + r.per_class[1].tp) / static_cast<double>(r.n);
  r.macro_f1 = 0.5 * (r.f1[0] + r.f1[1]);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"n", r.n}, {"accuracy", r.accuracy}, {"f1_0", r.f1[0]}, {"f1_1", r.f1[1]}, {"macro_f1", r.macro_f1}};
}

/// Argmax over the two logits; equal logits predict class 0.
inline int predict_label(double logit0, double logit1) { return logit1 > logit0 ? 1 : 0; }

/// Eval-mode predictions for encoded examples.
inline std::vector<int> predict(const EncoderParams& params, const std::vector<Example>& split,
                                std::size_t batch_size = 16) {
  std::vector<int> out;
  out.reserve(split.size());
  for (const auto& batch : sequential_batches(split, batch_size)) {
    const EncoderOutput o = forward_eval(params, batch);
    for (std::size_t i = 0; i < batch.size; ++i) out.push_back(predict_label(o.logits.at(i, 0), o.logits.at(i, 1)));
  }
  return out;
}

inline MetricsReport evaluate(const EncoderParams& params, const std::vector<Example>& split,
                              std::size_t batch_size = 16) {
  if (split.empty()) throw ValidationError("evaluate: empty split");
  std::vector<int> y_true;
  for (const auto& ex : split) y_true.push_back(ex.label);
  const std::vector<int> y_pred = predict(params, split, batch_size);
  return metrics_from_predictions(y_true, y_pred);
}

inline std::string escape_tsv_field(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

/// One row per example: d_feat features (%.9g), label, escaped text. No header.
inline std::string embeddings_tsv(const EncoderParams& params, const std::vector<Example>& split,
                                  std::size_t batch_size = 16) {
  std::string out;
  char buf[32];
  for (const auto& batch : sequential_batches(split, batch_size)) {
    const EncoderOutput o = forward_eval(params, batch);
    const std::size_t d = o.feature.dim(1);
    for (std::size_t i = 0; i < batch.size; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof buf, "%.9g", o.feature.at(i, j));
        out += buf;
        out += '\t';
      }
      const Example& ex = split[batch.example_indices[i]];
      out += std::to_string(ex.label);
      out += '\t';
      out += escape_tsv_field(ex.text);
      out += '\n';
    }
  }
  return out;
}

inline void export_embeddings(const EncoderParams& params, const std::vector<Example>& split,
                              const std::string& path) {
  write_file_atomic(path, embeddings_tsv(params, split));
}

struct ConfoundReport {
  MetricsReport overall;
  std::size_t identity_negatives = 0;  // non-hate examples containing an identity term
  std::size_t identity_false_positives = 0;
  double identity_fpr = 0.0;
};

inline nlohmann::json to_json(const ConfoundReport& r) {
  return {{"overall", to_json(r.overall)},
          {"identity_negatives", r.identity_negatives},
          {"identity_false_positives", r.identity_false_positives},
          {"identity_fpr", r.identity_fpr}};
}

/// Macro-F1 plus the false-positive rate on non-hate examples that carry an
/// identity term. Every example must have an identity annotation.
inline ConfoundReport confound_probe(const std::vector<Example>& split, std::span<const int> y_pred) {
  if (split.size() != y_pred.size()) throw DimensionError("confound_probe: prediction count mismatch");
  ConfoundReport r;
  std::vector<int> y_true;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Example& ex = split[i];
    if (!ex.identity) {
      throw ValidationError("confound_probe: example " + std::to_string(i) + " lacks an identity annotation");
    }
    y_true.push_back(ex.label);
    if (ex.label == 0 && *ex.identity) {
      ++r.identity_negatives;
      if (y_pred[i] == 1) ++r.identity_false_positives;
    }
  }
  r.overall = metrics_from_predictions(y_true, y_pred);
  r.identity_fpr = r.identity_negatives == 0
                       ? 0.0
                       : static_cast<double>(r.identity_false_positives) / static_cast<double>(r.identity_negatives);
  return r;
}

inline ConfoundReport confound_probe(const EncoderParams& params, const std::vector<Example>& split) {
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (!split[i].identity) {
      throw ValidationError("confound_probe: example " + std::to_string(i) + " lacks an identity annotation");
    }
  }
  const auto preds = predict(params, split);
  return confound_probe(split, preds);
}

}  // namespace lahn
