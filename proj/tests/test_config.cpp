#include <gtest/gtest.h>

#include <cstdlib>

#include "senti/config.hpp"

using namespace senti;
using namespace senti::config;

TEST(ConfigParse, KeyValuesCommentsAndBlankLines) {
  const auto kv = parse(
      "# run settings\n"
      "\n"
      "split.test_ratio = 0.25   # trailing\n"
      "  ensemble.models=[naive_bayes, svm]\r\n"
      "output.dir = out dir\n");
  EXPECT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv.at("split.test_ratio"), "0.25");
  EXPECT_EQ(kv.at("ensemble.models"), "[naive_bayes, svm]");
  EXPECT_EQ(kv.at("output.dir"), "out dir");
}

TEST(ConfigParse, MalformedLinesNameTheLine) {
  try {
    parse("a = 1\nno equals here\n", "run.conf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
    EXPECT_NE(std::string(e.what()).find("run.conf:2"), std::string::npos);
  }
  EXPECT_THROW(parse(" = 3\n"), Error);
  EXPECT_THROW(load("/nonexistent/senti.conf"), Error);
}

TEST(ConfigEnv, NamesAndOverride) {
  EXPECT_EQ(env_name("vectorizer.max_features"), "SENTI_VECTORIZER__MAX_FEATURES");
  KeyValues kv{{"train.seed", "1"}, {"train.epochs", "5"}};
  ::setenv("SENTI_TRAIN__SEED", "99", 1);
  apply_env_overrides(kv, {"train.seed", "train.epochs", "split.seed"});
  ::unsetenv("SENTI_TRAIN__SEED");
  EXPECT_EQ(kv.at("train.seed"), "99");
  EXPECT_EQ(kv.at("train.epochs"), "5");
  EXPECT_FALSE(kv.contains("split.seed"));
}

TEST(ConfigValues, Lists) {
  EXPECT_EQ(parse_list("[a, b ,c]"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(parse_list("a,b"), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(parse_list("[]").empty());
  EXPECT_EQ(format_list({"x", "y"}), "[x, y]");
  EXPECT_EQ(parse_list(format_list({"x", "y"})), (std::vector<std::string>{"x", "y"}));
}

TEST(ConfigValues, Scalars) {
  EXPECT_TRUE(parse_bool("k", "Yes"));
  EXPECT_FALSE(parse_bool("k", "off"));
  EXPECT_THROW(parse_bool("k", "maybe"), Error);
  EXPECT_DOUBLE_EQ(parse_double("k", "4e-5"), 4e-5);
  EXPECT_THROW(parse_double("k", "1.5x"), Error);
  EXPECT_EQ(parse_unsigned("k", "10000"), 10000u);
  EXPECT_THROW(parse_unsigned("k", "-1"), Error);
  try {
    parse_unsigned("vectorizer.max_features", "ten");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("vectorizer.max_features"), std::string::npos);
  }
}
