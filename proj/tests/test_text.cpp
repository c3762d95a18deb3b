#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace lahn;

using Tokens = std::vector<std::string>;

TEST(Tokenize, Rules) {
  EXPECT_EQ(tokenize("Hello, world!"), (Tokens{"hello", ",", "world", "!"}));
  EXPECT_EQ(tokenize("A  B"), (Tokens{"a", "b"}));
  EXPECT_EQ(tokenize(""), Tokens{});
  EXPECT_EQ(tokenize(" \t\n"), Tokens{});
  EXPECT_EQ(tokenize("let's"), (Tokens{"let", "'", "s"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 OK"), (Tokens{"caf\xc3\xa9", "ok"}));
}

namespace {

std::vector<Example> texts(std::initializer_list<const char*> ts) {
  std::vector<Example> out;
  for (const char* t : ts) out.push_back(Example{t, 0, std::nullopt, {}});
  return out;
}

}  // namespace

TEST(Vocabulary, FrequencyRankedWithLexicographicTies) {
  const auto v = Vocabulary::build(texts({"b a c", "a b d", "a"}), 100, 1);
  ASSERT_EQ(v.size(), 6u);
  EXPECT_EQ(v.token(0), "<pad>");
  EXPECT_EQ(v.token(1), "<unk>");
  EXPECT_EQ(v.token(2), "a");  // 3
  EXPECT_EQ(v.token(3), "b");  // 2
  EXPECT_EQ(v.token(4), "c");  // 1, c < d
  EXPECT_EQ(v.token(5), "d");
}

TEST(Vocabulary, MinFreqAndMaxSize) {
  const auto v = Vocabulary::build(texts({"b a c", "a b d", "a"}), 3, 2);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), kUnkId);
  EXPECT_EQ(v.id("never"), kUnkId);
}

TEST(Vocabulary, EncodeTruncatesPadsAndHandlesEmpty) {
  const auto v = Vocabulary::build(texts({"x y", "x y"}), 100, 1);
  EXPECT_EQ(v.encode("x zz y", 5), (std::vector<int>{2, 1, 3, 0, 0}));
  EXPECT_EQ(v.encode("x y x y", 2), (std::vector<int>{2, 3}));
  EXPECT_EQ(v.encode("", 3), (std::vector<int>{kUnkId, kPadId, kPadId}));
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  const auto dir = test::scratch_dir("vocab");
  const auto v = Vocabulary::build(texts({"q w e r", "q w"}), 100, 1);
  v.save((dir / "v.txt").string());
  EXPECT_EQ(Vocabulary::load((dir / "v.txt").string()), v);
  std::ofstream((dir / "bad.txt").string()) << "x\ny\n";
  EXPECT_THROW(Vocabulary::load((dir / "bad.txt").string()), ParseError);
  EXPECT_THROW(Vocabulary::load((dir / "missing.txt").string()), IoError);
}

TEST(Jsonl, ParsesInFileOrder) {
  const auto ex = parse_jsonl("{\"text\":\"x\",\"label\":1}\n\n{\"text\":\"y\",\"label\":0}\n{\"text\":\"z\",\"label\":1,\"identity\":true}\n");
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].text, "x");
  EXPECT_EQ(ex[0].label, 1);
  EXPECT_EQ(ex[1].text, "y");
  EXPECT_FALSE(ex[1].identity.has_value());
  EXPECT_EQ(ex[2].identity, std::optional<bool>(true));
}

TEST(Jsonl, BadLabelNamesItsLine) {
  try {
    parse_jsonl("{\"text\":\"x\",\"label\":1}\n{\"text\":\"y\",\"label\":2}\n", "d.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("d.jsonl:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_jsonl("{not json}\n"), ParseError);
  EXPECT_THROW(parse_jsonl("{\"label\":1}\n"), ParseError);
}

TEST(Jsonl, RoundTrip) {
  const auto corpus = synthetic::generate_confound_corpus(10, 1.0, 3);
  const auto back = parse_jsonl(to_jsonl(corpus.train));
  ASSERT_EQ(back.size(), corpus.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].text, corpus.train[i].text);
    EXPECT_EQ(back[i].label, corpus.train[i].label);
    EXPECT_EQ(back[i].identity, corpus.train[i].identity);
  }
}

namespace {

std::vector<Example> numbered(std::size_t n) {
  std::vector<Example> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].text = "t" + std::to_string(i);
    out[i].label = static_cast<int>(i % 2);
    out[i].token_ids = {2, static_cast<int>(i % 3 + 2), 0};
  }
  return out;
}

std::vector<std::size_t> sizes(const std::vector<Batch>& bs) {
  std::vector<std::size_t> s;
  for (const auto& b : bs) s.push_back(b.size);
  return s;
}

}  // namespace

TEST(Batches, SizesAndTailRule) {
  EXPECT_EQ(sizes(make_batches(numbered(35), 16, std::nullopt)), (std::vector<std::size_t>{16, 16, 3}));
  EXPECT_EQ(sizes(make_batches(numbered(17), 16, std::nullopt)), (std::vector<std::size_t>{16}));
  EXPECT_EQ(sizes(sequential_batches(numbered(17), 16)), (std::vector<std::size_t>{16, 1}));
  EXPECT_THROW(make_batches({}, 16, std::nullopt), ValidationError);
  EXPECT_THROW(make_batches(numbered(4), 1, std::nullopt), ParameterError);
}

TEST(Batches, SameSeedSameOrderAndEveryExampleOnce) {
  const auto ex = numbered(50);
  const auto a = make_batches(ex, 8, 99), b = make_batches(ex, 8, 99), c = make_batches(ex, 8, 100);
  std::vector<std::size_t> ia, ib, ic;
  for (const auto& x : a) ia.insert(ia.end(), x.example_indices.begin(), x.example_indices.end());
  for (const auto& x : b) ib.insert(ib.end(), x.example_indices.begin(), x.example_indices.end());
  for (const auto& x : c) ic.insert(ic.end(), x.example_indices.begin(), x.example_indices.end());
  EXPECT_EQ(ia, ib);
  EXPECT_NE(ia, ic);
  std::sort(ia.begin(), ia.end());
  for (std::size_t i = 0; i < ia.size(); ++i) EXPECT_EQ(ia[i], i);
}

TEST(Batches, MaskMarksNonPadPositions) {
  const auto ex = numbered(3);
  const std::size_t idx[] = {2, 0};
  const Batch b = make_batch(ex, idx);
  EXPECT_EQ(b.seq_len, 3u);
  EXPECT_EQ(b.labels, (std::vector<int>{0, 0}));
  EXPECT_EQ(b.mask, (std::vector<std::uint8_t>{1, 1, 0, 1, 1, 0}));
}

TEST(Synthetic, DeterministicForSeed) {
  const auto a = synthetic::generate_confound_corpus(50, 1.0, 7);
  const auto b = synthetic::generate_confound_corpus(50, 1.0, 7);
  const auto c = synthetic::generate_confound_corpus(50, 1.0, 8);
  EXPECT_EQ(to_jsonl(a.train) + to_jsonl(a.val) + to_jsonl(a.test),
            to_jsonl(b.train) + to_jsonl(b.val) + to_jsonl(b.test));
  EXPECT_NE(to_jsonl(a.train), to_jsonl(c.train));
}

TEST(Synthetic, SplitSizesAndBalance) {
  const auto c = synthetic::generate_confound_corpus(40, 0.5, 1);
  EXPECT_EQ(c.train.size(), 80u);
  EXPECT_EQ(c.val.size(), 20u);
  EXPECT_EQ(c.test.size(), 20u);
  for (const auto* split : {&c.train, &c.val, &c.test}) {
    std::size_t hate = 0;
    for (const auto& e : *split) hate += e.label;
    EXPECT_EQ(2 * hate, split->size());
  }
}

TEST(Synthetic, LabelsFollowTheContextRule) {
  const synthetic::Lexicon lex;
  const auto c = synthetic::generate_confound_corpus(200, 1.0, 11);
  for (const auto* split : {&c.train, &c.val, &c.test})
    for (const auto& e : *split) {
      EXPECT_EQ(lex.oracle_label(e.text), e.label) << e.text;
      EXPECT_EQ(lex.contains_identity(e.text), *e.identity) << e.text;
    }
}

namespace {

double identity_rate(const std::vector<Example>& split, int label) {
  std::size_t n = 0, with = 0;
  for (const auto& e : split) {
    if (e.label != label) continue;
    ++n;
    with += *e.identity;
  }
  return static_cast<double>(with) / static_cast<double>(n);
}

}  // namespace

TEST(Synthetic, ConfoundRates) {
  const auto c = synthetic::generate_confound_corpus(500, 1.0, 5);
  EXPECT_EQ(identity_rate(c.train, 1), 1.0);
  EXPECT_EQ(identity_rate(c.train, 0), 0.0);
  EXPECT_NEAR(identity_rate(c.test, 1), 0.5, 0.02);
  EXPECT_NEAR(identity_rate(c.test, 0), 0.5, 0.02);
  EXPECT_NEAR(identity_rate(c.test, 1), identity_rate(c.test, 0), 0.02);

  const auto half = synthetic::generate_confound_corpus(500, 0.5, 5);
  EXPECT_NEAR(identity_rate(half.train, 1), 0.5, 0.02);
  EXPECT_NEAR(identity_rate(half.train, 0), 0.5, 0.02);
  EXPECT_THROW(synthetic::generate_confound_corpus(10, 1.5, 0), ParameterError);
}

TEST(Synthetic, HardNegativesShareFramesWithHate) {
  // Benign and hateful sentences come from the same frames, so stripping the
  // marker leaves overlapping templates across classes.
  const synthetic::Lexicon lex;
  const auto keys = lex.hate_key_tokens();
  EXPECT_FALSE(keys.empty());
  for (const auto& t : tokenize("northfolk are kind , glad they are here")) EXPECT_EQ(keys.count(t), 0u) << t;
}
