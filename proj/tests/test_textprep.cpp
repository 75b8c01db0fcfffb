#include <gtest/gtest.h>

#include <string>

#include "senti/textprep.hpp"
#include "support/synthetic_corpus.hpp"

using namespace senti;
using namespace senti::textprep;
using TS = TokenSequence;

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize("Loved IT!!<br />So GOOD"), "loved it!! so good");
  EXPECT_EQ(normalize(""), "");
  EXPECT_EQ(normalize("A  B\tC"), "a b c");
}

TEST(Normalize, NestedAndUnclosedTags) {
  EXPECT_EQ(normalize("a<<b>>c"), "a c");
  EXPECT_EQ(normalize("x < y and y > z"), "x z");
  EXPECT_EQ(normalize("a < b"), "a < b");
  EXPECT_EQ(normalize("  <p>Hi</p>  "), "hi");
  EXPECT_EQ(normalize("a\x01\x02" "b"), "a b");
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("great movie"), (TS{"great", "movie"}));
  EXPECT_EQ(tokenize("don't stop!"), (TS{"don't", "stop"}));
  EXPECT_EQ(tokenize("!!!"), TS{});
}

TEST(Tokenize, QuotesAndUtf8) {
  EXPECT_EQ(tokenize("'quoted' words''"), (TS{"quoted", "words"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (TS{"caf\xc3\xa9", "ok"}));
  EXPECT_EQ(tokenize("a-b_c"), (TS{"a", "b", "c"}));
}

TEST(Stem, Examples) {
  EXPECT_EQ(stem(TS{"loved"}), TS{"love"});
  EXPECT_EQ(stem(TS{"caresses"}), TS{"caress"});
  EXPECT_EQ(stem(TS{}), TS{});
  EXPECT_EQ(stem(TS{"NEG_loved"}), TS{"NEG_love"});
}

TEST(Negation, Examples) {
  const PrepConfig cfg;
  EXPECT_EQ(mark_negation(TS{"not", "good"}, cfg), (TS{"not", "NEG_good"}));
  EXPECT_EQ(mark_negation(TS{"never", "boring", "but", "fun"}, cfg), (TS{"never", "NEG_boring", "NEG_but", "NEG_fun"}));
  EXPECT_EQ(mark_negation(TS{"good"}, cfg), TS{"good"});
}

TEST(Negation, ScopeAndContractions) {
  PrepConfig cfg;
  cfg.negation_scope = 1;
  EXPECT_EQ(mark_negation(TS{"didn't", "like", "it"}, cfg), (TS{"didn't", "NEG_like", "it"}));
  EXPECT_EQ(mark_negation(TS{"no", "no", "fun", "here"}, cfg), (TS{"no", "no", "NEG_fun", "here"}));
  cfg.negation_scope = 0;
  EXPECT_THROW(mark_negation(TS{"not", "x"}, cfg), Error);
  cfg.mark_negation = false;
  EXPECT_EQ(mark_negation(TS{"not", "x"}, cfg), (TS{"not", "x"}));
}

TEST(Negation, StopsAtPunctuationInPreprocess) {
  PrepConfig cfg;
  cfg.stem = false;
  EXPECT_EQ(preprocess("Not good, great fun", cfg), (TS{"not", "NEG_good", "great", "fun"}));
  EXPECT_EQ(preprocess("It isn't bad. Loved it", cfg), (TS{"it", "isn't", "NEG_bad", "loved", "it"}));
}

TEST(Sentences, Examples) {
  EXPECT_EQ(split_sentences("Good. Bad."), (std::vector<std::string>{"Good.", "Bad."}));
  EXPECT_EQ(split_sentences("no delimiters here"), (std::vector<std::string>{"no delimiters here"}));
  EXPECT_EQ(split_sentences("A! B? C.").size(), 3u);
}

TEST(Sentences, DecimalsAndEllipsesAndPunctuationOnly) {
  EXPECT_EQ(split_sentences("Rated 3.5 stars... Wow!"), (std::vector<std::string>{"Rated 3.5 stars...", "Wow!"}));
  EXPECT_EQ(split_sentences("Fine. ?! ."), (std::vector<std::string>{"Fine."}));
  EXPECT_TRUE(split_sentences("").empty());
}

TEST(Preprocess, FullPipeline) {
  EXPECT_EQ(preprocess("The movies were NOT entertaining<br />at all!", PrepConfig{}),
            (TS{"the", "movi", "were", "not", "NEG_entertain", "NEG_at", "NEG_all"}));
}

// Random texts built from an alphabet rich in separators, tags and cues.
namespace {
std::string random_text(Rng& rng) {
  static const std::vector<std::string> parts{"not", "good", "Bad", " ", "  ", "\t", "<br />", ".", "!", "?", ",",
                                              "don't", "'", "NEVER", "x", "\n", "<b>", "</b>", "caf\xc3\xa9", "no"};
  std::string s;
  const auto len = uniform_below(rng, 30);
  for (std::uint64_t i = 0; i < len; ++i) s += parts[uniform_below(rng, parts.size())];
  return s;
}
}  // namespace

TEST(TextprepProperty, NormalizeIsIdempotent) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto t = random_text(rng);
    const auto once = normalize(t);
    EXPECT_EQ(normalize(once), once) << t;
  }
}

TEST(TextprepProperty, TokensAreWellFormed) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto toks = preprocess(random_text(rng), PrepConfig{});
    for (const auto& t : toks) {
      ASSERT_FALSE(t.empty());
      EXPECT_EQ(t.find_first_of(" \t\n\r"), std::string::npos);
      const std::string_view body = t.starts_with("NEG_") ? std::string_view(t).substr(4) : std::string_view(t);
      EXPECT_FALSE(body.starts_with("NEG_")) << t;
      for (char c : body) EXPECT_FALSE(c >= 'A' && c <= 'Z') << t;
    }
  }
}

TEST(TextprepProperty, NegationKeepsCountAndNeverDoublePrefixes) {
  Rng rng(13);
  PrepConfig cfg;
  for (int i = 0; i < 2000; ++i) {
    cfg.negation_scope = 1 + uniform_below(rng, 5);
    const auto toks = tokenize(normalize(random_text(rng)));
    auto marked = mark_negation(toks, cfg);
    EXPECT_EQ(marked.size(), toks.size());
    const auto twice = mark_negation(marked, cfg);
    EXPECT_EQ(twice.size(), toks.size());
    for (const auto& t : twice) EXPECT_EQ(t.find("NEG_NEG_"), std::string::npos);
  }
}

TEST(TextprepProperty, Deterministic) {
  Rng rng(14);
  for (int i = 0; i < 500; ++i) {
    const auto t = random_text(rng);
    EXPECT_EQ(preprocess(t, PrepConfig{}), preprocess(t, PrepConfig{}));
  }
}

TEST(TextprepProperty, SentencesCoverAllTokens) {
  Rng rng(15);
  for (int i = 0; i < 2000; ++i) {
    const auto t = random_text(rng);
    TS joined;
    for (const auto& s : split_sentences(t)) {
      for (auto& tok : tokenize(s)) joined.push_back(tok);
    }
    EXPECT_EQ(joined, tokenize(t)) << t;
  }
}
