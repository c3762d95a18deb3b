#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lahn/config.hpp"
#include "lahn/metrics.hpp"
#include "lahn/trainer.hpp"

namespace lahn {

struct GridAxes {
  std::vector<Objective> objectives;
  std::vector<SamplingStrategy> strategies;
  std::vector<std::size_t> qs;
  std::vector<std::size_t> ks;
  std::vector<double> taus;
};

struct GridCell {
  std::string name;
  TrainConfig config;
};

/// Row name used in reports: CE, SCL, MoCo (whole queue), HN-Samp (label
/// filter + similarity) or LAHN (label filter + weighted similarity).
inline std::string component_name(const TrainConfig& c) {
  switch (c.objective) {
    case Objective::CE: return "CE";
    case Objective::SCL_CE: return "SCL";
    case Objective::LAHN:
      switch (c.strategy) {
        case SamplingStrategy::AllQueue: return "MoCo";
        case SamplingStrategy::SimOnly: return "HN-Samp";
        case SamplingStrategy::LabelSimWeight: return "LAHN";
      }
  }
  return "?";
}

inline std::string cell_name(const TrainConfig& c) {
  std::string n = component_name(c);
  if (c.objective == Objective::LAHN) {
    n += " q=" + std::to_string(c.q) + " k=" + std::to_string(c.k);
  }
  if (c.objective != Objective::CE) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " tau=%g", c.tau);
    n += buf;
  }
  return n;
}

/// Cartesian product of the axes over `base`; an empty axis keeps the base
/// value. Axes that do not affect an objective (strategy, q, k for CE and
/// SCL; tau for CE) are collapsed so no duplicate cells appear.
inline std::vector<GridCell> expand_grid(const TrainConfig& base, const GridAxes& axes) {
  auto or_base = [](auto values, auto fallback) {
    if (values.empty()) values.push_back(fallback);
    return values;
  };
  const auto objectives = or_base(axes.objectives, base.objective);
  const auto strategies = or_base(axes.strategies, base.strategy);
  const auto qs = or_base(axes.qs, base.q);
  const auto ks = or_base(axes.ks, base.k);
  const auto taus = or_base(axes.taus, base.tau);
  std::vector<GridCell> cells;
  auto seen = [&cells](const TrainConfig& c) {
    return std::any_of(cells.begin(), cells.end(), [&](const GridCell& g) { return g.config == c; });
  };
  for (Objective o : objectives)
    for (SamplingStrategy s : strategies)
      for (std::size_t q : qs)
        for (std::size_t k : ks)
          for (double tau : taus) {
            TrainConfig c = base;
            c.objective = o;
            if (o == Objective::LAHN) {
              c.strategy = s;
              c.q = q;
              c.k = k;
            }
            if (o != Objective::CE) c.tau = tau;
            if (seen(c)) continue;
            cells.push_back(GridCell{cell_name(c), c});
          }
  return cells;
}

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double best_val_macro_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::optional<double> test_macro_f1;
  std::optional<double> test_accuracy;
  std::optional<double> test_identity_fpr;
};

struct CellResult {
  GridCell cell;
  std::vector<SeedResult> seeds;
  bool failed = false;  // every seed failed
  std::optional<double> median_val_macro_f1;
  std::optional<double> median_test_macro_f1;
  std::optional<double> median_test_identity_fpr;
};

struct AblationReport {
  std::vector<CellResult> cells;
};

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Trains one (config, seed) pair and scores its best checkpoint.
inline SeedResult run_seed(TrainConfig cfg, std::uint64_t seed, const std::vector<Example>& train,
                           const std::vector<Example>& val, const std::vector<Example>* test,
                           std::size_t vocab_size) {
  SeedResult r;
  r.seed = seed;
  cfg.seed = seed;
  try {
    const TrainingResult tr = run_training(cfg, train, val, vocab_size);
    r.best_val_macro_f1 = tr.best.val_macro_f1;
    r.best_epoch = tr.best.epoch;
    if (test && !test->empty()) {
      const auto preds = predict(tr.best.main, *test, cfg.batch_size);
      std::vector<int> y_true;
      for (const auto& ex : *test) y_true.push_back(ex.label);
      const MetricsReport m = metrics_from_predictions(y_true, preds);
      r.test_macro_f1 = m.macro_f1;
      r.test_accuracy = m.accuracy;
      const bool annotated =
          std::all_of(test->begin(), test->end(), [](const Example& e) { return e.identity.has_value(); });
      if (annotated) r.test_identity_fpr = confound_probe(*test, preds).identity_fpr;
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

/// Runs every cell for every seed. Cells are independent and may run on up to
/// `jobs` threads; a failing seed is recorded and the grid continues.
inline AblationReport run_ablation_grid(const std::vector<GridCell>& cells, const std::vector<std::uint64_t>& seeds,
                                        const std::vector<Example>& train, const std::vector<Example>& val,
                                        const std::vector<Example>* test, std::size_t vocab_size,
                                        std::size_t jobs = 1) {
  if (cells.empty()) throw ParameterError("ablation grid has no cells");
  if (seeds.empty()) throw ParameterError("ablation grid needs at least one seed");
  AblationReport report;
  report.cells.resize(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    report.cells[c].cell = cells[c];
    report.cells[c].seeds.resize(seeds.size());
  }
  const std::size_t total = cells.size() * seeds.size();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t c = i / seeds.size(), s = i % seeds.size();
      report.cells[c].seeds[s] = run_seed(cells[c].config, seeds[s], train, val, test, vocab_size);
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, total));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& cell : report.cells) {
    std::vector<double> val_f1, test_f1, fpr;
    for (const auto& s : cell.seeds) {
      if (s.failed) continue;
      val_f1.push_back(s.best_val_macro_f1);
      if (s.test_macro_f1) test_f1.push_back(*s.test_macro_f1);
      if (s.test_identity_fpr) fpr.push_back(*s.test_identity_fpr);
    }
    cell.failed = val_f1.empty();
    cell.median_val_macro_f1 = median(val_f1);
    cell.median_test_macro_f1 = median(test_f1);
    cell.median_test_identity_fpr = median(fpr);
  }
  return report;
}

inline nlohmann::json to_json(const AblationReport& report) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : cell.seeds) {
      nlohmann::json js{{"seed", s.seed},
                        {"failed", s.failed},
                        {"best_val_macro_f1", s.best_val_macro_f1},
                        {"best_epoch", s.best_epoch},
                        {"test_macro_f1", opt(s.test_macro_f1)},
                        {"test_accuracy", opt(s.test_accuracy)},
                        {"test_identity_fpr", opt(s.test_identity_fpr)}};
      if (s.failed) js["error"] = s.error;
      seeds.push_back(std::move(js));
    }
    const TrainConfig& c = cell.cell.config;
    rows.push_back({{"name", cell.cell.name},
                    {"component", component_name(c)},
                    {"objective", to_string(c.objective)},
                    {"strategy", to_string(c.strategy)},
                    {"q", c.q},
                    {"k", c.k},
                    {"tau", c.tau},
                    {"failed", cell.failed},
                    {"median_val_macro_f1", opt(cell.median_val_macro_f1)},
                    {"median_test_macro_f1", opt(cell.median_test_macro_f1)},
                    {"median_test_identity_fpr", opt(cell.median_test_identity_fpr)},
                    {"seeds", std::move(seeds)}});
  }
  return nlohmann::json{{"cells", std::move(rows)}};
}

}  // namespace lahn
