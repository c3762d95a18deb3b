// lahn: command-line front end for data generation, training, evaluation,
// embedding export, hard-negative inspection and ablation grids.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lahn.hpp"

#ifndef LAHN_VERSION
#define LAHN_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void configure_logging() {
  auto logger = spdlog::stderr_color_st("lahn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("LAHN_LOG_LEVEL");
  const std::string l = level ? level : "info";
  if (l == "error") spdlog::set_level(spdlog::level::err);
  else if (l == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
}

// Flags shared by every command that builds a TrainConfig.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> objective;
  std::optional<std::string> strategy;
  std::optional<std::size_t> q;
  std::optional<std::size_t> k;
  std::optional<double> tau;
  std::optional<double> lambda;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (keys mirror TrainConfig)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Root seed for every random stream");
    cmd->add_option("--objective", objective, "Training objective")
        ->check(CLI::IsMember({"ce", "scl", "lahn"}));
    cmd->add_option("--strategy", strategy, "Hard-negative strategy")
        ->check(CLI::IsMember({"all", "sim", "simweight"}));
    cmd->add_option("--q", q, "Momentum queue capacity (entries)");
    cmd->add_option("--k", k, "Hard negatives per anchor");
    cmd->add_option("--tau", tau, "Temperature");
    cmd->add_option("--lambda", lambda, "Weight of the cross-entropy term");
    cmd->add_option("--epochs", epochs, "Number of epochs");
    cmd->add_option("--lr", lr, "Adam learning rate");
  }

  // Flags override the file, which overrides `base`.
  lahn::TrainConfig resolve(lahn::TrainConfig base = {}) const {
    lahn::TrainConfig c = config_path.empty() ? base : lahn::config_from_json(load_json(config_path), base);
    if (seed) c.seed = *seed;
    if (objective) c.objective = lahn::parse_objective(*objective);
    if (strategy) c.strategy = lahn::parse_strategy(*strategy);
    if (q) c.q = *q;
    if (k) c.k = *k;
    if (tau) c.tau = *tau;
    if (lambda) c.lambda = *lambda;
    if (epochs) c.epochs = *epochs;
    if (lr) c.learning_rate = *lr;
    c.validate();
    return c;
  }

  static nlohmann::json load_json(const std::string& path) {
    try {
      return nlohmann::json::parse(lahn::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw lahn::ParseError(path + ": " + e.what());
    }
  }
};

std::vector<lahn::Example> load_encoded(const std::string& path, const lahn::Vocabulary& vocab, std::size_t max_len) {
  auto examples = lahn::load_jsonl(path);
  if (examples.empty()) throw lahn::ValidationError(path + ": no records");
  vocab.encode_all(examples, max_len);
  return examples;
}

std::string default_vocab_path(const std::string& checkpoint_path) {
  return (fs::path(checkpoint_path).parent_path() / "vocab.txt").string();
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    lahn::write_file_atomic(out_path, text);
  }
}

// ---------------------------------------------------------------------------

struct GenData {
  std::size_t n = 1000;
  double confound = 1.0;
  std::uint64_t seed = 0;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--n", n, "Training examples per class (val/test get n/4 per class)")->capture_default_str();
    cmd->add_option("--confound", confound, "Identity-term confound rate in train and val")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();
    cmd->add_option("--out", out, "Output directory")->required();
  }

  int run() const {
    const auto corpus = lahn::synthetic::generate_confound_corpus(n, confound, seed);
    lahn::save_jsonl((fs::path(out) / "train.jsonl").string(), corpus.train);
    lahn::save_jsonl((fs::path(out) / "val.jsonl").string(), corpus.val);
    lahn::save_jsonl((fs::path(out) / "test.jsonl").string(), corpus.test);
    spdlog::info("wrote {} train / {} val / {} test examples to {}", corpus.train.size(), corpus.val.size(),
                 corpus.test.size(), out);
    return kExitOk;
  }
};

struct Train {
  ConfigFlags flags;
  std::string train_path, val_path, out;

  void attach(CLI::App* cmd) {
    flags.attach(cmd);
    cmd->add_option("--train", train_path, "Training JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", val_path, "Validation JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory")->required();
  }

  int run() const {
    const lahn::TrainConfig cfg = flags.resolve();
    auto train = lahn::load_jsonl(train_path);
    if (train.empty()) throw lahn::ValidationError(train_path + ": no records");
    const auto vocab = lahn::Vocabulary::build(train, cfg.max_vocab, cfg.min_freq);
    vocab.encode_all(train, cfg.max_len);
    const auto val = load_encoded(val_path, vocab, cfg.max_len);

    const fs::path dir(out);
    vocab.save((dir / "vocab.txt").string());
    lahn::write_file_atomic((dir / "config.json").string(), lahn::to_json(cfg).dump(2) + "\n");
    spdlog::info("objective {} strategy {} q {} k {} tau {} lambda {}; vocab {} tokens, {} train examples",
                 lahn::to_string(cfg.objective), lahn::to_string(cfg.strategy), cfg.q, cfg.k, cfg.tau, cfg.lambda,
                 vocab.size(), train.size());

    lahn::MetricsLog partial;
    lahn::TrainHooks hooks;
    hooks.on_step = [](const lahn::StepRecord& r) {
      spdlog::debug("step {} l_cl {:.6f} l_ce {:.6f} total {:.6f} fill {:.3f}", r.step, r.l_cl, r.l_ce, r.total,
                    r.queue_fill);
    };
    hooks.on_epoch = [](const lahn::EpochRecord& r) {
      spdlog::info("epoch {} val accuracy {:.4f} macro-F1 {:.4f}", r.epoch, r.val_accuracy, r.val_macro_f1);
    };
    hooks.on_checkpoint = [&dir](const lahn::Checkpoint& last, const lahn::Checkpoint& best) {
      lahn::save_checkpoint((dir / "last.json").string(), last);
      lahn::save_checkpoint((dir / "checkpoint.json").string(), best);
    };
    const auto result = lahn::run_training(cfg, train, val, vocab.size(), hooks);
    lahn::write_file_atomic((dir / "metrics.jsonl").string(), result.log.to_jsonl());
    spdlog::info("best epoch {} val macro-F1 {:.4f}; checkpoint at {}", result.best.epoch, result.best.val_macro_f1,
                 (dir / "checkpoint.json").string());
    return kExitOk;
  }
};

struct Eval {
  std::string checkpoint, test_path, vocab_path, out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test_path, "JSONL split to evaluate")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Also write the JSON report to this file");
  }

  int run() const {
    const auto ckpt = lahn::load_checkpoint(checkpoint);
    const auto vocab = lahn::Vocabulary::load(vocab_path.empty() ? default_vocab_path(checkpoint) : vocab_path);
    const auto split = load_encoded(test_path, vocab, ckpt.config.max_len);
    const auto preds = lahn::predict(ckpt.main, split, ckpt.config.batch_size);
    std::vector<int> y_true;
    for (const auto& ex : split) y_true.push_back(ex.label);
    nlohmann::json report = lahn::to_json(lahn::metrics_from_predictions(y_true, preds));
    const bool annotated =
        std::all_of(split.begin(), split.end(), [](const lahn::Example& e) { return e.identity.has_value(); });
    if (annotated) {
      const auto probe = lahn::confound_probe(split, preds);
      report["identity_negatives"] = probe.identity_negatives;
      report["identity_false_positives"] = probe.identity_false_positives;
      report["identity_fpr"] = probe.identity_fpr;
    }
    const std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!out.empty()) lahn::write_file_atomic(out, text);
    return kExitOk;
  }
};

struct ExportEmbeddings {
  std::string checkpoint, test_path, vocab_path, out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test_path, "JSONL split to embed")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output TSV path")->required();
  }

  int run() const {
    const auto ckpt = lahn::load_checkpoint(checkpoint);
    const auto vocab = lahn::Vocabulary::load(vocab_path.empty() ? default_vocab_path(checkpoint) : vocab_path);
    const auto split = load_encoded(test_path, vocab, ckpt.config.max_len);
    lahn::export_embeddings(ckpt.main, split, out);
    spdlog::info("wrote {} embeddings to {}", split.size(), out);
    return kExitOk;
  }
};

struct InspectNegatives {
  ConfigFlags flags;
  std::string checkpoint, corpus_path, vocab_path, out;
  std::size_t anchor = 0;

  void attach(CLI::App* cmd) {
    flags.attach(cmd);
    cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (main and momentum encoders)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--train", corpus_path, "Corpus used for the warm queue pass")->required()->check(CLI::ExistingFile);
    cmd->add_option("--anchor", anchor, "Corpus index of the anchor")->required();
    cmd->add_option("--vocab", vocab_path, "Vocabulary file (default: vocab.txt beside the checkpoint)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Write JSONL here instead of stdout");
  }

  int run() const {
    const auto ckpt = lahn::load_checkpoint(checkpoint);
    const lahn::TrainConfig cfg = flags.resolve(ckpt.config);
    const auto vocab = lahn::Vocabulary::load(vocab_path.empty() ? default_vocab_path(checkpoint) : vocab_path);
    const auto corpus = load_encoded(corpus_path, vocab, ckpt.config.max_len);
    if (anchor >= corpus.size()) {
      throw lahn::IndexError("anchor index " + std::to_string(anchor) + " outside corpus of " +
                             std::to_string(corpus.size()));
    }
    const lahn::EncoderParams momentum = ckpt.momentum ? *ckpt.momentum : lahn::clone_params(ckpt.main);

    // Warm pass: queue entry ids equal corpus indices.
    lahn::MomentumQueue queue(cfg.q, ckpt.main.dims.d_feat);
    for (const auto& batch : lahn::sequential_batches(corpus, cfg.batch_size)) {
      queue.enqueue_batch(lahn::forward_eval(momentum, batch).feature, batch.labels);
    }
    const auto snap = queue.snapshot();

    const std::size_t one[1] = {anchor};
    const lahn::Batch anchor_batch = lahn::make_batch(corpus, one);
    const auto anchor_feat = lahn::forward_eval(ckpt.main, anchor_batch).feature;
    const std::optional<std::uint64_t> self[1] = {static_cast<std::uint64_t>(anchor)};
    const auto sets = lahn::sample_for_batch(anchor_feat, anchor_batch.labels, snap, momentum,
                                             lahn::SamplerConfig{cfg.strategy, cfg.k}, self);
    const auto& set = sets.front();
    std::string text;
    for (std::size_t r = 0; r < set.size(); ++r) {
      const std::size_t pos = set.positions[r];
      const auto corpus_index = static_cast<std::size_t>(snap.entry_ids[pos]);
      nlohmann::json j{{"anchor", anchor},
                       {"anchor_label", corpus[anchor].label},
                       {"rank", r},
                       {"queue_index", pos},
                       {"corpus_index", corpus_index},
                       {"text", corpus[corpus_index].text},
                       {"label", snap.labels[pos]},
                       {"similarity", set.similarities[r]},
                       {"probability", set.probabilities[r]},
                       {"product", set.similarities[r] * set.probabilities[r]},
                       {"score", set.scores[r]},
                       {"strategy", lahn::to_string(cfg.strategy)}};
      text += j.dump() + "\n";
    }
    emit(text, out);
    return kExitOk;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& csv, T (*parse)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

struct Ablate {
  ConfigFlags flags;
  std::string train_path, val_path, test_path, out;
  std::string objectives, strategies, qs, ks, taus;
  std::string seeds = "1,2,3";
  std::size_t jobs = 1;

  void attach(CLI::App* cmd) {
    flags.attach(cmd);
    cmd->add_option("--train", train_path, "Training JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--val", val_path, "Validation JSONL")->required()->check(CLI::ExistingFile);
    cmd->add_option("--test", test_path, "Optional test JSONL scored with each best checkpoint")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory for ablation.json")->required();
    cmd->add_option("--objectives", objectives, "Comma list over ce,scl,lahn");
    cmd->add_option("--strategies", strategies, "Comma list over all,sim,simweight");
    cmd->add_option("--qs", qs, "Comma list of queue sizes");
    cmd->add_option("--ks", ks, "Comma list of sample sizes");
    cmd->add_option("--taus", taus, "Comma list of temperatures");
    cmd->add_option("--seeds", seeds, "Comma list of seeds")->capture_default_str();
    cmd->add_option("--jobs", jobs, "Parallel cells")->capture_default_str();
  }

  int run() const {
    const lahn::TrainConfig base = flags.resolve();
    auto to_size = [](const std::string& s) -> std::size_t { return std::stoul(s); };
    auto to_double = [](const std::string& s) -> double { return std::stod(s); };
    auto to_u64 = [](const std::string& s) -> std::uint64_t { return std::stoull(s); };
    lahn::GridAxes axes;
    axes.objectives = parse_list<lahn::Objective>(objectives, lahn::parse_objective);
    axes.strategies = parse_list<lahn::SamplingStrategy>(strategies, lahn::parse_strategy);
    axes.qs = parse_list<std::size_t>(qs, +to_size);
    axes.ks = parse_list<std::size_t>(ks, +to_size);
    axes.taus = parse_list<double>(taus, +to_double);
    const auto seed_list = parse_list<std::uint64_t>(seeds, +to_u64);
    const auto cells = lahn::expand_grid(base, axes);
    for (const auto& c : cells) c.config.validate();

    auto train = lahn::load_jsonl(train_path);
    if (train.empty()) throw lahn::ValidationError(train_path + ": no records");
    const auto vocab = lahn::Vocabulary::build(train, base.max_vocab, base.min_freq);
    vocab.encode_all(train, base.max_len);
    const auto val = load_encoded(val_path, vocab, base.max_len);
    std::optional<std::vector<lahn::Example>> test;
    if (!test_path.empty()) test = load_encoded(test_path, vocab, base.max_len);

    spdlog::info("ablation: {} cells x {} seeds", cells.size(), seed_list.size());
    const auto report =
        lahn::run_ablation_grid(cells, seed_list, train, val, test ? &*test : nullptr, vocab.size(), jobs);
    const std::string json = lahn::to_json(report).dump(2) + "\n";
    lahn::write_file_atomic((fs::path(out) / "ablation.json").string(), json);
    for (const auto& cell : report.cells) {
      if (cell.failed) {
        spdlog::error("{}: all seeds failed", cell.cell.name);
        continue;
      }
      spdlog::info("{}: median val macro-F1 {:.4f}{}", cell.cell.name, *cell.median_val_macro_f1,
                   cell.median_test_macro_f1 ? fmt::format(", test {:.4f}", *cell.median_test_macro_f1) : "");
    }
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"LAHN: momentum contrastive training with label-aware hard negatives"};
  app.set_version_flag("--version", std::string("lahn ") + LAHN_VERSION);
  app.require_subcommand(1);

  GenData gen;
  Train train;
  Eval eval;
  ExportEmbeddings exporter;
  InspectNegatives inspect;
  Ablate ablate;

  gen.attach(app.add_subcommand("gen-data", "Generate the synthetic identity-confound corpus"));
  train.attach(app.add_subcommand("train", "Train an encoder; writes checkpoint.json, last.json, metrics.jsonl"));
  eval.attach(app.add_subcommand("eval", "Evaluate a checkpoint; prints a JSON report"));
  exporter.attach(app.add_subcommand("export-embeddings", "Write per-example features as TSV"));
  inspect.attach(app.add_subcommand(
      "inspect-negatives",
      "Dump the hard negatives chosen for one anchor as JSONL. The queue is not stored in checkpoints; it is "
      "rebuilt by one warm pass of the momentum encoder over --train"));
  ablate.attach(app.add_subcommand("ablate", "Run an objective/strategy/q/k/tau grid over several seeds"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("gen-data")) return gen.run();
    if (app.got_subcommand("train")) return train.run();
    if (app.got_subcommand("eval")) return eval.run();
    if (app.got_subcommand("export-embeddings")) return exporter.run();
    if (app.got_subcommand("inspect-negatives")) return inspect.run();
    if (app.got_subcommand("ablate")) return ablate.run();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
