// One PASS/FAIL line per acceptance criterion; exit status is nonzero if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fifo_property.hpp"
#include "grad_suite.hpp"
#include "sampler_oracle.hpp"
#include "test_util.hpp"

using namespace lahn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. Finite-difference gradient suite over 20 seeds.
Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_op = 0, worst_e2e = 0;
  for (const auto& c : test::gradient_cases()) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = c.run(seed);
      const bool e2e = c.name.rfind("end_to_end", 0) == 0;
      (e2e ? worst_e2e : worst_op) = std::max(e2e ? worst_e2e : worst_op, r.max_rel_error);
      if (!r.finite || r.max_rel_error >= c.tol) {
        o.fail(c.name + " seed " + std::to_string(seed) + " rel err " + fmt("%.3g", r.max_rel_error));
      }
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 60) o.fail("runtime " + fmt("%.1f", secs) + " s");
  if (o.pass) {
    o.detail = std::to_string(test::gradient_cases().size()) + " cases x 20 seeds; worst op rel err " +
               fmt("%.2g", worst_op) + " (tol 1e-4), worst end-to-end " + fmt("%.2g", worst_e2e) +
               " (tol 1e-3); " + fmt("%.2f", secs) + " s";
  }
  return o;
}

// 2. Sampler equals brute force on 1000 random instances.
Outcome sampler_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t with_ties = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto in = test::make_sampler_instance(seed);
    for (auto s : {SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight}) {
      const auto r = test::check_sampler_instance(in, s);
      if (!r.ok) o.fail("instance " + std::to_string(seed) + " " + to_string(s) + ": " + r.message);
    }
    const auto sel = test::brute_force_select(in, 0, SamplingStrategy::SimOnly).scores;
    for (std::size_t i = 1; i < sel.size(); ++i)
      if (sel[i] == sel[i - 1]) {
        ++with_ties;
        break;
      }
  }
  const double secs = seconds_since(t0);
  if (secs >= 30) o.fail("runtime " + fmt("%.1f", secs) + " s");
  if (o.pass) {
    o.detail = "1000 instances x {sim, simweight}; " + std::to_string(with_ties) +
               " instances with tied selected scores; " + fmt("%.2f", secs) + " s";
  }
  return o;
}

// 3. Loss hand cases.
Outcome loss_hand_cases() {
  Outcome o;
  auto near = [&](const std::string& what, double got, double want, double tol) {
    if (!(std::abs(got - want) <= tol)) o.fail(what + " " + fmt("%.9g", got) + " vs " + fmt("%.9g", want));
  };
  ad::Tape tape(ad::Tape::Mode::NoGrad);
  near("contrastive pos=1 negs=[]", contrastive_loss(1.0, {}, 0.07), 0.0, 1e-6);
  near("contrastive ln3", contrastive_loss(0.5, {0.5, 0.5}, 1.0), 1.098612, 1e-6);
  near("contrastive saturated", contrastive_loss(1.0, {-1.0}, 0.05), 4.25e-18, 1e-6);
  const std::vector<int> y0{0}, y2{2}, y01{0, 1}, yscl{0, 0, 1, 1}, ysame{1, 1};
  near("softmax ln2", ad::softmax_cross_entropy(tape, ad::Tensor::matrix(1, 2, {0, 0}), y0).item(), 0.693147, 1e-6);
  near("softmax [100,0]", ad::softmax_cross_entropy(tape, ad::Tensor::matrix(1, 2, {100, 0}), y0).item(), 0, 1e-8);
  near("softmax [1,2,3]", ad::softmax_cross_entropy(tape, ad::Tensor::matrix(1, 3, {1, 2, 3}), y2).item(), 0.407606,
       1e-6);
  near("classification uniform",
       classification_loss(tape, ad::Tensor::matrix(2, 2, {0.2, 0.2, 5, 5}), y01).item(), 0.693147, 1e-6);
  near("anchor prob", anchor_class_prob(ad::Tensor::matrix(1, 2, {1, 0}), 1)[0], 0.268941, 1e-6);
  near("scl identical", scl_loss(tape, ad::Tensor::matrix(2, 2, {1, 2, 1, 2}), ysame, 0.05).item(), 0.0, 1e-6);
  near("scl orthogonal",
       scl_loss(tape, ad::Tensor::matrix(4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}), yscl, 1.0).item(),
       1.098612, 1e-6);
  near("combined lambda=0.1", combined_loss(1.0, 2.0, 0.1), 1.1, 1e-12);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform() * 5, b = rng.uniform() * 5;
    near("combined random", combined_loss(a, b, 0.1), 0.9 * a + 0.1 * b, 1e-12);
  }
  if (o.pass) o.detail = "contrastive, classification, scl within 1e-6; combined within 1e-12 at lambda 0.1";
  return o;
}

// 4. EMA exactness, FIFO eviction, warmup gate.
Outcome mechanism_invariants() {
  Outcome o;
  // EMA
  {
    EncoderDims d;
    d.vocab_size = 20;
    d.d_emb = 4;
    d.hidden = 5;
    d.d_feat = 3;
    EncoderParams main = init_params(1, d);
    EmaState ema = make_ema_state(main, 0.999);
    std::vector<std::vector<double>> ref;
    for (const auto& [n, t] : ema.momentum.named()) ref.emplace_back(t.values().begin(), t.values().end());
    Rng rng(2);
    for (int step = 0; step < 100; ++step) {
      for (auto [n, t] : main.named())
        for (double& x : t.mutable_values()) x += rng.normal(0, 0.05);
      ema_update(main, ema);
      const auto src = main.named();
      for (std::size_t k = 0; k < ref.size(); ++k)
        for (std::size_t i = 0; i < ref[k].size(); ++i) ref[k][i] = 0.999 * ref[k][i] + (1 - 0.999) * src[k].second[i];
    }
    const auto got = ema.momentum.named();
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (!std::equal(ref[k].begin(), ref[k].end(), got[k].second.values().begin())) o.fail("EMA mismatch");
  }
  // FIFO
  for (std::size_t q : {64, 512, 1024})
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto r = test::check_fifo_property(q, seed);
      if (!r.ok) o.fail("FIFO q=" + std::to_string(q) + ": " + r.message);
    }
  // Warmup gate on a real run
  std::size_t gated = 0, open = 0;
  {
    const auto c = test::encoded_corpus(200, 0.0, 1);
    TrainConfig cfg = test::small_config();
    cfg.q = 512;
    cfg.epochs = 3;
    const auto r = run_training(cfg, c.train, c.val, c.vocab.size());
    for (const auto& s : r.log.steps()) {
      if (s.queue_fill < kSamplingFillThreshold) {
        ++gated;
        if (s.l_cl != 0.0) o.fail("l_cl nonzero at step " + std::to_string(s.step));
        if (s.total != s.l_ce) o.fail("total != l_ce at step " + std::to_string(s.step));
      } else {
        ++open;
      }
    }
    if (gated == 0 || open == 0) o.fail("run did not cover both sides of the gate");
  }
  if (o.pass) {
    o.detail = "EMA bitwise over 100 steps at m=0.999; FIFO q in {64,512,1024}; " + std::to_string(gated) +
               " warmup steps with l_cl == 0, " + std::to_string(open) + " sampled steps";
  }
  return o;
}

// 5. Convergence on the separable corpus.
Outcome convergence() {
  Outcome o;
  const auto c = test::encoded_corpus(1000, 0.0, 2024);  // 2000 train
  // Held-out splits are n/4 per class, so a 1000-per-class generation of a
  // different seed supplies the 500 validation examples.
  std::vector<Example> val500 = synthetic::generate_confound_corpus(1000, 0.0, 2025).val;
  c.vocab.encode_all(val500, 64);
  std::string detail;
  for (Objective obj : {Objective::CE, Objective::LAHN}) {
    TrainConfig cfg;
    cfg.objective = obj;
    cfg.epochs = 10;
    cfg.q = 256;
    cfg.k = 16;
    const auto t0 = Clock::now();
    double best_acc = 0;
    std::size_t reached = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& e) {
      if (e.val_accuracy >= 0.95 && reached == 0) reached = e.epoch;
      best_acc = std::max(best_acc, e.val_accuracy);
    };
    run_training(cfg, c.train, val500, c.vocab.size(), hooks);
    const double secs = seconds_since(t0);
    const std::string name = to_string(obj);
    if (best_acc < 0.95) o.fail(name + " best val accuracy " + fmt("%.4f", best_acc));
    if (secs >= 120) o.fail(name + " runtime " + fmt("%.1f", secs) + " s");
    detail += (detail.empty() ? "" : "; ") + name + " reached " + fmt("%.4f", best_acc) + " (>=0.95 at epoch " +
              std::to_string(reached) + ") in " + fmt("%.1f", secs) + " s";
  }
  if (o.pass) o.detail = "2000 train / " + std::to_string(val500.size()) + " val: " + detail;
  return o;
}

// 6. Behavioral proxy on the confound corpus, 7 seeds.
Outcome confound_proxy() {
  Outcome o;
  const auto c = test::encoded_corpus(1000, 1.0, 77);
  TrainConfig base;
  base.epochs = 10;
  base.q = 256;
  base.k = 16;
  base.tau = 0.05;
  base.strategy = SamplingStrategy::LabelSimWeight;
  GridAxes axes;
  axes.objectives = {Objective::CE, Objective::LAHN};
  const auto cells = expand_grid(base, axes);
  const auto report =
      run_ablation_grid(cells, {1, 2, 3, 4, 5, 6, 7}, c.train, c.val, &c.test, c.vocab.size());
  const auto& ce = report.cells[0];
  const auto& lahn = report.cells[1];
  if (ce.failed || lahn.failed) {
    o.fail("a cell failed to train");
    return o;
  }
  const double f1_ce = *ce.median_test_macro_f1, f1_lahn = *lahn.median_test_macro_f1;
  const double fpr_ce = *ce.median_test_identity_fpr, fpr_lahn = *lahn.median_test_identity_fpr;
  const std::string summary = "median test macro-F1 LAHN " + fmt("%.4f", f1_lahn) + " vs CE " + fmt("%.4f", f1_ce) +
                              "; median identity FPR LAHN " + fmt("%.4f", fpr_lahn) + " vs CE " + fmt("%.4f", fpr_ce);
  if (f1_lahn < f1_ce) o.fail("macro-F1 direction failed");
  if (fpr_lahn > fpr_ce) o.fail("identity FPR direction failed");
  o.detail = o.pass ? summary : o.detail + " (" + summary + ")";
  return o;
}

// 7. Ablation distinguishability on crafted queues.
Outcome ablation_distinguishability() {
  Outcome o;
  EncoderDims d;
  d.vocab_size = 4;
  d.d_emb = 2;
  d.hidden = 2;
  d.d_feat = 2;
  EncoderParams head = clone_params(init_params(0, d));
  for (double& w : head.w_head.mutable_values()) w = 0.0;
  QueueSnapshot snap;
  snap.dim = 2;
  snap.features = {1, 0.05, 0.6, 0.8, 0.2, 0.98, -1, 0.1};
  snap.labels = {1, 0, 0, 0};
  snap.entry_ids = {0, 1, 2, 3};
  const std::vector<int> labels{1};
  const auto anchor = ad::Tensor::matrix(1, 2, {1, 0});
  auto pick = [&](SamplingStrategy s) { return sample_for_batch(anchor, labels, snap, head, {s, 2})[0].positions; };
  const auto all = pick(SamplingStrategy::AllQueue);
  if (std::find(all.begin(), all.end(), 0u) == all.end()) o.fail("AllQueue missed the same-label neighbour");
  for (auto s : {SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight}) {
    const auto p = pick(s);
    if (std::find(p.begin(), p.end(), 0u) != p.end()) o.fail(to_string(s) + " selected a same-label entry");
  }
  // sims [0.9, 0.5], probs [0.1, 0.9]
  const std::vector<double> a{1, 0}, feats{0.9, std::sqrt(1 - 0.81), 0.5, std::sqrt(0.75)}, probs{0.1, 0.9};
  const std::vector<std::size_t> idx{0, 1};
  const auto by_sim = select_hard_negatives(score_candidates(a, feats, probs, SamplingStrategy::SimOnly), idx, 2);
  const auto by_w = select_hard_negatives(score_candidates(a, feats, probs, SamplingStrategy::LabelSimWeight), idx, 2);
  if (by_sim.positions.front() != 0) o.fail("SimOnly did not pick index 0 first");
  if (by_w.positions.front() != 1) o.fail("LabelSimWeight did not pick index 1 first");
  if (std::abs(by_w.scores[0] - 0.45) > 1e-12 || std::abs(by_w.scores[1] - 0.09) > 1e-12) o.fail("weighted scores");
  if (o.pass) o.detail = "same-label neighbour only under AllQueue; weighting reorders [0,1] -> [1,0] (0.45 > 0.09)";
  return o;
}

// 8. Two CLI train runs are bitwise identical.
Outcome cli_determinism() {
  Outcome o;
  const fs::path root = test::scratch_dir("determinism");
  auto run = [&](const std::string& args) {
    const auto r = test::run_cli(args);
    if (r.exit_code != 0) o.fail("'" + args + "' exited " + std::to_string(r.exit_code) + ": " + r.output);
  };
  const std::string data = "'" + (root / "data").string() + "'";
  run("gen-data --n 200 --confound 1.0 --seed 11 --out " + data);
  const std::string flags = "train --train " + data + "/train.jsonl --val " + data +
                            "/val.jsonl --epochs 3 --q 128 --k 16 --seed 9 --out ";
  run(flags + "'" + (root / "a").string() + "'");
  run(flags + "'" + (root / "b").string() + "'");
  if (!o.pass) return o;
  for (const char* f : {"checkpoint.json", "last.json", "metrics.jsonl", "vocab.txt"}) {
    if (read_file((root / "a" / f).string()) != read_file((root / "b" / f).string())) {
      o.fail(std::string(f) + " differs");
    }
  }
  if (o.pass) o.detail = "checkpoint.json, last.json, metrics.jsonl, vocab.txt byte-identical across two runs";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient suite", gradient_suite},
      {"2 sampler oracle equivalence", sampler_oracle},
      {"3 loss hand cases", loss_hand_cases},
      {"4 mechanism invariants", mechanism_invariants},
      {"5 convergence sanity", convergence},
      {"6 hard-negative behavioral proxy", confound_proxy},
      {"7 ablation distinguishability", ablation_distinguishability},
      {"8 determinism", cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
