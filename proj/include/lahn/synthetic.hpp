#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lahn/error.hpp"
#include "lahn/rng.hpp"
#include "lahn/text.hpp"

// Templated corpus with an identity-term confound. The label is decided only
// by the marker phrase (and optional coda); identity terms fill the subject
// slot and are correlated with the label in train but balanced in test.

namespace lahn::synthetic {

struct Lexicon {
  std::vector<std::string> identity_terms{"northfolk", "islanders", "valemen",
                                          "dunefolk",  "hillfolk",  "riverfolk"};
  std::vector<std::string> generic_subjects{"people", "they", "folks", "everyone", "many", "others"};
  // Frames contain exactly one {S} and one {M}.
  std::vector<std::string> frames{
      "{S} are {M}",
      "honestly {S} are {M} in this town",
      "i think {S} are {M} and everyone knows it",
      "{S} in our street are {M}",
      "you know {S} are {M} , right ?",
      "my neighbor says {S} are {M}",
      "{S} always act like {M}",
      "let 's be real , {S} are {M}",
      "at work {S} seem {M} to me",
      "{S} from the old district are {M}",
  };
  std::vector<std::string> hate_markers{
      "vermin",     "parasites",  "invaders",    "leeches", "filth",     "rats",
      "savages",    "thugs",      "a plague",    "a disease", "cockroaches", "scum",
      "animals",    "a cancer",   "subhuman",    "worthless",
  };
  std::vector<std::string> benign_markers{
      "neighbors", "friends",  "hardworking", "welcome", "generous",  "kind",
      "talented",  "helpful",  "our family",  "good people", "honest", "brave",
      "creative",  "wonderful", "patient",    "respectful",
  };
  std::vector<std::string> hate_codas{"we should get rid of them", "send them all back",
                                      "keep them out"};
  std::vector<std::string> benign_codas{"we should welcome them", "glad they are here",
                                        "invite them over"};
  double coda_rate = 0.3;

  /// Tokens that occur only in hateful context phrases.
  std::set<std::string> hate_key_tokens() const {
    std::set<std::string> hate, other;
    for (const auto& p : hate_markers)
      for (auto& t : tokenize(p)) hate.insert(t);
    for (const auto& p : hate_codas)
      for (auto& t : tokenize(p)) hate.insert(t);
    auto add_other = [&other](const std::vector<std::string>& phrases) {
      for (const auto& p : phrases)
        for (auto& t : tokenize(p)) other.insert(t);
    };
    add_other(benign_markers);
    add_other(benign_codas);
    add_other(frames);
    add_other(identity_terms);
    add_other(generic_subjects);
    std::set<std::string> keys;
    for (const auto& t : hate)
      if (!other.count(t)) keys.insert(t);
    return keys;
  }

  /// Labels a generated sentence by its context rule alone.
  int oracle_label(std::string_view text) const {
    const auto keys = hate_key_tokens();
    for (auto& t : tokenize(text))
      if (keys.count(t)) return 1;
    return 0;
  }

  bool contains_identity(std::string_view text) const {
    for (auto& t : tokenize(text))
      if (std::find(identity_terms.begin(), identity_terms.end(), t) != identity_terms.end()) return true;
    return false;
  }
};

struct Corpus {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

namespace detail {

inline std::string fill_frame(const std::string& frame, const std::string& subject,
                              const std::string& marker) {
  std::string out = frame;
  out.replace(out.find("{S}"), 3, subject);
  out.replace(out.find("{M}"), 3, marker);
  return out;
}

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(rng.below(items.size()))];
}

// n_per_class examples of each label; exactly round(rate * n) examples of a
// class receive an identity subject.
inline std::vector<Example> generate_split(const Lexicon& lex, std::size_t n_per_class,
                                           double identity_rate_hate, double identity_rate_benign,
                                           Rng& rng) {
  std::vector<Example> out;
  for (int label : {1, 0}) {
    const double rate = label == 1 ? identity_rate_hate : identity_rate_benign;
    const auto with_identity =
        static_cast<std::size_t>(std::llround(rate * static_cast<double>(n_per_class)));
    std::vector<char> flags(n_per_class, 0);
    std::fill_n(flags.begin(), std::min(with_identity, n_per_class), 1);
    rng.shuffle(flags);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const bool identity = flags[i] != 0;
      const std::string& subject = identity ? pick(lex.identity_terms, rng) : pick(lex.generic_subjects, rng);
      const std::string& marker = label == 1 ? pick(lex.hate_markers, rng) : pick(lex.benign_markers, rng);
      std::string text = fill_frame(pick(lex.frames, rng), subject, marker);
      if (rng.bernoulli(lex.coda_rate)) {
        text += " , ";
        text += label == 1 ? pick(lex.hate_codas, rng) : pick(lex.benign_codas, rng);
      }
      Example ex;
      ex.text = std::move(text);
      ex.label = label;
      ex.identity = identity;
      out.push_back(std::move(ex));
    }
  }
  rng.shuffle(out);
  return out;
}

}  // namespace detail

/// Train holds n_per_class examples per label; val and test hold
/// max(1, n_per_class / 4) per label. In train and val an identity subject
/// appears in a fraction `confound_rate` of hate examples and 1 - confound_rate
/// of non-hate examples; in test both fractions are 0.5.
inline Corpus generate_confound_corpus(std::size_t n_per_class, double confound_rate, std::uint64_t seed,
                                       const Lexicon& lex = {}) {
  if (!(confound_rate >= 0.0 && confound_rate <= 1.0)) {
    throw ParameterError("confound rate must be in [0, 1], got " + std::to_string(confound_rate));
  }
  if (n_per_class == 0) throw ParameterError("n_per_class must be >= 1");
  const std::size_t held_out = std::max<std::size_t>(1, n_per_class / 4);
  Corpus c;
  Rng train_rng = Rng::derive(seed, "data-train");
  Rng val_rng = Rng::derive(seed, "data-val");
  Rng test_rng = Rng::derive(seed, "data-test");
  c.train = detail::generate_split(lex, n_per_class, confound_rate, 1.0 - confound_rate, train_rng);
  c.val = detail::generate_split(lex, held_out, confound_rate, 1.0 - confound_rate, val_rng);
  c.test = detail::generate_split(lex, held_out, 0.5, 0.5, test_rng);
  return c;
}

}  // namespace lahn::synthetic
