#include <gtest/gtest.h>

#include <cmath>

#include "sampler_oracle.hpp"

using namespace lahn;

using Idx = std::vector<std::size_t>;

TEST(Filter, KeepsOppositeLabelInQueueOrder) {
  const std::vector<int> a{1, 0, 1, 0}, b{1, 1};
  EXPECT_EQ(filter_true_negatives(1, a), (Idx{1, 3}));
  EXPECT_EQ(filter_true_negatives(0, b), (Idx{0, 1}));
  EXPECT_EQ(filter_true_negatives(1, b), Idx{});
}

TEST(Filter, PropertyNoSameLabelSurvives) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> labels(rng.below(50));
    for (auto& y : labels) y = static_cast<int>(rng.below(2));
    const int anchor = static_cast<int>(rng.below(2));
    const auto kept = filter_true_negatives(anchor, labels);
    std::size_t opposite = 0;
    for (int y : labels) opposite += y != anchor;
    EXPECT_EQ(kept.size(), opposite);
    for (std::size_t i : kept) EXPECT_NE(labels[i], anchor);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
  }
}

TEST(ClassProb, HandValues) {
  EXPECT_EQ(anchor_class_prob(ad::Tensor::matrix(1, 2, {0, 0}), 1)[0], 0.5);
  EXPECT_NEAR(anchor_class_prob(ad::Tensor::matrix(1, 2, {0, 100}), 1)[0], 1.0, 1e-12);
  const double p = anchor_class_prob(ad::Tensor::matrix(1, 2, {1, 0}), 1)[0];
  EXPECT_NEAR(p, std::exp(0.0) / (std::exp(1.0) + std::exp(0.0)), 1e-15);
  EXPECT_NEAR(p, 0.268941, 1e-6);
  const auto extreme = anchor_class_prob(ad::Tensor::matrix(2, 2, {1000, -1000, -1000, 1000}), 0);
  EXPECT_EQ(extreme[0], 1.0);
  EXPECT_GE(extreme[1], 0.0);
  EXPECT_LT(extreme[1], 1e-300);
  EXPECT_THROW(anchor_class_prob(ad::Tensor::matrix(1, 3, {0, 0, 0}), 0), DimensionError);
}

namespace {

// Unit anchor [1, 0] against candidates at the given cosine similarities.
std::vector<double> candidates_at(const std::vector<double>& sims) {
  std::vector<double> f;
  for (double s : sims) f.insert(f.end(), {s, std::sqrt(1 - s * s)});
  return f;
}

}  // namespace

TEST(Score, ElementwiseProduct) {
  const std::vector<double> anchor{1, 0}, probs{0.5, 1.0, 1.0};
  const auto feats = candidates_at({0.9, 0.5, 0.1});
  const auto w = score_candidates(anchor, feats, probs, SamplingStrategy::LabelSimWeight);
  EXPECT_NEAR(w[0], 0.45, 1e-12);
  EXPECT_NEAR(w[1], 0.5, 1e-12);
  EXPECT_NEAR(w[2], 0.1, 1e-12);
  const std::vector<double> ones(3, 1.0);
  EXPECT_EQ(score_candidates(anchor, feats, ones, SamplingStrategy::LabelSimWeight),
            score_candidates(anchor, feats, ones, SamplingStrategy::SimOnly));
}

TEST(Score, MatchesNaiveRecomputation) {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const std::size_t dim = 8;
    const auto anchor = test::random_vector(dim, rng);
    const auto feats = test::random_vector(32 * dim, rng);
    std::vector<double> logits = test::random_vector(64, rng);
    const auto probs = anchor_class_prob(ad::Tensor::matrix(32, 2, logits), 1);
    const auto got = score_candidates(anchor, feats, probs, SamplingStrategy::LabelSimWeight);
    for (std::size_t i = 0; i < 32; ++i) {
      const double sim = test::naive_cosine(anchor, std::span<const double>(feats).subspan(i * dim, dim));
      const double p = std::exp(logits[2 * i + 1]) / (std::exp(logits[2 * i]) + std::exp(logits[2 * i + 1]));
      EXPECT_NEAR(got[i], sim * p, 1e-12);
    }
  }
}

TEST(Select, OrdersAndClamps) {
  const std::vector<double> s{0.45, 0.5, 0.1};
  const Idx idx{0, 1, 2};
  EXPECT_EQ(select_hard_negatives(s, idx, 2).positions, (Idx{1, 0}));
  EXPECT_EQ(select_hard_negatives(s, idx, 16).positions, (Idx{1, 0, 2}));
  EXPECT_THROW(select_hard_negatives(s, idx, 0), ParameterError);
}

TEST(Select, TiesGoToLowerQueueIndex) {
  const std::vector<double> s{0.3, 0.7, 0.7, 0.3};
  const Idx idx{9, 5, 2, 1};
  EXPECT_EQ(select_hard_negatives(s, idx, 3).positions, (Idx{2, 5, 1}));
}

TEST(Select, RandomCasesEqualFullSort) {
  Rng rng(99);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = rng.below(80);
    std::vector<double> scores(n);
    for (auto& x : scores) x = static_cast<double>(rng.below(7)) / 7.0;  // heavy ties
    Idx idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = 3 * i + rng.below(3);
    const std::size_t k = 1 + rng.below(32);
    Idx order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores[a] != scores[b] ? scores[a] > scores[b] : idx[a] < idx[b];
    });
    Idx want;
    for (std::size_t r = 0; r < std::min(k, n); ++r) want.push_back(idx[order[r]]);
    const auto got = select_hard_negatives(scores, idx, k);
    ASSERT_EQ(got.positions, want) << "case " << t;
    EXPECT_TRUE(std::is_sorted(got.scores.rbegin(), got.scores.rend()));
  }
}

namespace {

QueueSnapshot snapshot_of(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
  QueueSnapshot s;
  s.dim = rows.front().size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.features.insert(s.features.end(), rows[i].begin(), rows[i].end());
    s.labels.push_back(labels[i]);
    s.entry_ids.push_back(i);
  }
  return s;
}

// Momentum head with w = 0 and bias (b0, b1): every entry gets the same
// class probabilities.
EncoderParams constant_head(std::size_t dim, double b0, double b1) {
  EncoderDims d;
  d.vocab_size = 4;
  d.d_emb = 2;
  d.hidden = 2;
  d.d_feat = dim;
  EncoderParams p = clone_params(init_params(0, d));
  for (double& w : p.w_head.mutable_values()) w = 0.0;
  p.b_head.mutable_values()[0] = b0;
  p.b_head.mutable_values()[1] = b1;
  return p;
}

}  // namespace

TEST(SampleForBatch, EmptyAndSameLabelQueues) {
  const auto head = constant_head(2, 0, 0);
  const auto anchors = ad::Tensor::matrix(2, 2, {1, 0, 0, 1});
  const std::vector<int> labels{1, 1};
  for (auto strat : {SamplingStrategy::AllQueue, SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight}) {
    for (const auto& s : sample_for_batch(anchors, labels, QueueSnapshot{2, {}, {}, {}}, head, {strat, 4}))
      EXPECT_TRUE(s.empty());
  }
  const auto same = snapshot_of({{1, 1}, {2, 0}, {0, 3}}, {1, 1, 1});
  for (const auto& s : sample_for_batch(anchors, labels, same, head, {SamplingStrategy::SimOnly, 4}))
    EXPECT_TRUE(s.empty());
  for (const auto& s : sample_for_batch(anchors, labels, same, head, {SamplingStrategy::LabelSimWeight, 4}))
    EXPECT_TRUE(s.empty());
  for (const auto& s : sample_for_batch(anchors, labels, same, head, {SamplingStrategy::AllQueue, 1}))
    EXPECT_EQ(s.positions, (Idx{0, 1, 2}));
}

TEST(SampleForBatch, ExcludesTheAnchorsOwnEntry) {
  const auto head = constant_head(2, 0, 0);
  const auto snap = snapshot_of({{1, 0}, {1, 0.1}, {0, 1}}, {0, 1, 1});
  const std::vector<int> labels{0};
  const std::optional<std::uint64_t> self[1] = {1};
  const auto s = sample_for_batch(ad::Tensor::matrix(1, 2, {1, 0}), labels, snap, head,
                                  {SamplingStrategy::AllQueue, 4}, self);
  EXPECT_EQ(s[0].positions, (Idx{0, 2}));
}

TEST(SampleForBatch, RandomBatchMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto in = test::make_sampler_instance(seed, 4);
    for (auto strat : {SamplingStrategy::AllQueue, SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight}) {
      const auto r = test::check_sampler_instance(in, strat);
      EXPECT_TRUE(r.ok) << "seed " << seed << " " << to_string(strat) << ": " << r.message;
    }
  }
}

TEST(SampleForBatch, ThousandRandomInstancesMatchBruteForce) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto in = test::make_sampler_instance(10000 + seed);
    for (auto strat : {SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight}) {
      const auto r = test::check_sampler_instance(in, strat);
      ASSERT_TRUE(r.ok) << "seed " << seed << " " << to_string(strat) << ": " << r.message;
    }
  }
}

TEST(Ablation, SameLabelNeighbourOnlyReachesAllQueue) {
  // Entry 0 has the anchor's label and is the most similar; 1..3 are true
  // negatives at lower similarity.
  const auto snap = snapshot_of({{1, 0.05}, {0.6, 0.8}, {0.2, 0.98}, {-1, 0.1}}, {1, 0, 0, 0});
  const auto head = constant_head(2, 0.3, -0.3);
  const std::vector<int> labels{1};
  const auto anchor = ad::Tensor::matrix(1, 2, {1, 0});
  const auto all = sample_for_batch(anchor, labels, snap, head, {SamplingStrategy::AllQueue, 2});
  const auto sim = sample_for_batch(anchor, labels, snap, head, {SamplingStrategy::SimOnly, 2});
  const auto wt = sample_for_batch(anchor, labels, snap, head, {SamplingStrategy::LabelSimWeight, 2});
  EXPECT_NE(std::find(all[0].positions.begin(), all[0].positions.end(), 0u), all[0].positions.end());
  for (std::size_t p : sim[0].positions) EXPECT_NE(p, 0u);
  for (std::size_t p : wt[0].positions) EXPECT_NE(p, 0u);
}

TEST(Ablation, ProbabilityWeightingReordersTopK) {
  // sims [0.9, 0.5], probs [0.1, 0.9]: products 0.09 and 0.45.
  const std::vector<double> anchor{1, 0}, probs{0.1, 0.9};
  const auto feats = candidates_at({0.9, 0.5});
  const Idx idx{0, 1};
  const auto by_sim = select_hard_negatives(score_candidates(anchor, feats, probs, SamplingStrategy::SimOnly), idx, 2);
  const auto by_wt =
      select_hard_negatives(score_candidates(anchor, feats, probs, SamplingStrategy::LabelSimWeight), idx, 2);
  EXPECT_EQ(by_sim.positions.front(), 0u);
  EXPECT_EQ(by_wt.positions.front(), 1u);
  EXPECT_NEAR(by_wt.scores[0], 0.45, 1e-12);
  EXPECT_NEAR(by_wt.scores[1], 0.09, 1e-12);
}

TEST(Strategy, ParseAndPrint) {
  for (auto s : {SamplingStrategy::AllQueue, SamplingStrategy::SimOnly, SamplingStrategy::LabelSimWeight})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("random"), ParameterError);
}
