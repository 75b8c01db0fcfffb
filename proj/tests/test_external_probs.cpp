#include <gtest/gtest.h>

#include <sstream>

#include "senti/external_probs.hpp"
#include "support/synthetic_corpus.hpp"

using namespace senti;
using namespace senti::external;

namespace {

PredictionTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_probability_lines(in, "t.jsonl");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ProbabilityFile, ThreeValidLines) {
  const auto t = parse(
      "{\"id\": 0, \"model\": \"roberta\", \"probs\": [0.1, 0.9]}\n"
      "{\"id\": 5, \"model\": \"roberta\", \"probs\": [0.7, 0.3]}\n"
      "\n"
      "{\"id\": 2, \"model\": \"roberta\", \"probs\": [0.5, 0.5]}\r\n");
  EXPECT_EQ(t.model, "roberta");
  EXPECT_EQ(t.size(), 3u);
  EXPECT_DOUBLE_EQ(t.by_id.at(5).negative(), 0.7);
}

TEST(ProbabilityFile, SumOutsideToleranceNamesLine) {
  const auto msg = error_of(
      "{\"id\": 0, \"model\": \"m\", \"probs\": [0.5, 0.5]}\n"
      "{\"id\": 1, \"model\": \"m\", \"probs\": [0.6, 0.6]}\n");
  EXPECT_NE(msg.find("probabilities sum to 1.2 at line 2"), std::string::npos) << msg;
}

TEST(ProbabilityFile, NearOneIsRenormalized) {
  const auto t = parse("{\"id\": 0, \"model\": \"m\", \"probs\": [0.49999, 0.50002]}\n");
  const auto& d = t.by_id.at(0);
  EXPECT_NEAR(d.negative() + d.positive(), 1.0, 1e-15);
  EXPECT_NEAR(d.positive(), 0.50002 / 1.00001, 1e-15);
}

TEST(ProbabilityFile, Rejections) {
  EXPECT_NE(error_of("{\"id\": 0, \"model\": \"a\", \"probs\": [0.5, 0.5]}\n"
                     "{\"id\": 1, \"model\": \"b\", \"probs\": [0.5, 0.5]}\n")
                .find("mixed model ids"),
            std::string::npos);
  EXPECT_NE(error_of("{\"id\": 0, \"model\": \"a\", \"probs\": [0.5, 0.5]}\n"
                     "{\"id\": 0, \"model\": \"a\", \"probs\": [0.5, 0.5]}\n")
                .find("duplicate id 0 at line 2"),
            std::string::npos);
  EXPECT_NE(error_of("{\"id\": 0, \"model\": \"a\", \"probs\": [0.5, 0.5]}\nnot json\n").find("line 2"),
            std::string::npos);
  EXPECT_NE(error_of("{\"id\": -1, \"model\": \"a\", \"probs\": [0.5, 0.5]}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("{\"id\": 0, \"model\": \"a\", \"probs\": [0.5]}\n").find("line 1"), std::string::npos);
  EXPECT_NE(error_of("{\"id\": 0, \"model\": \"a\", \"probs\": [1.5, -0.5]}\n").find("outside"), std::string::npos);
  EXPECT_NE(error_of("{\"id\": 0, \"probs\": [0.5, 0.5]}\n").find("model"), std::string::npos);
  EXPECT_NE(error_of("").find("no probability records"), std::string::npos);
}

TEST(ProbabilityFile, RoundTrip) {
  Rng rng(3);
  PredictionTable t{"lstm", {}};
  for (DocId i = 0; i < 200; ++i) t.by_id[i * 7] = senti::testing::random_distribution(rng);
  senti::testing::TempDir dir;
  write_probability_file(dir / "p.jsonl", t);
  const auto back = load_probability_file(dir / "p.jsonl");
  EXPECT_EQ(back.model, "lstm");
  ASSERT_EQ(back.size(), t.size());
  for (const auto& [id, d] : t.by_id) {
    EXPECT_NEAR(back.by_id.at(id).negative(), d.negative(), 1e-12);
    EXPECT_NEAR(back.by_id.at(id).positive(), d.positive(), 1e-12);
  }
}

TEST(Align, OrderFollowsIdsAndTables) {
  const PredictionTable a{"a", {{1, ProbabilityDistribution::from_positive(0.1)}, {2, ProbabilityDistribution::from_positive(0.2)}}};
  const PredictionTable b{"b", {{1, ProbabilityDistribution::from_positive(0.3)}, {2, ProbabilityDistribution::from_positive(0.4)}}};
  const auto m = align({a, b}, {2, 1});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m[0][0].positive(), 0.2);
  EXPECT_DOUBLE_EQ(m[0][1].positive(), 0.4);
  EXPECT_DOUBLE_EQ(m[1][0].positive(), 0.1);
  EXPECT_DOUBLE_EQ(m[1][1].positive(), 0.3);
  EXPECT_TRUE(align({a, b}, {}).empty());
}

TEST(Align, MissingIdNamesModelAndId) {
  const PredictionTable a{"distilbert", {{1, {}}}};
  try {
    align({a}, {1, 7});
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("distilbert"), std::string::npos);
    EXPECT_NE(msg.find(" 7"), std::string::npos);
  }
}

TEST(Align, ListsAtMostTenIds) {
  const PredictionTable a{"m", {}};
  std::vector<DocId> ids;
  for (DocId i = 100; i < 130; ++i) ids.push_back(i);
  try {
    align({a}, ids);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("30 id(s)"), std::string::npos);
    EXPECT_NE(msg.find("109"), std::string::npos);
    EXPECT_EQ(msg.find("110"), std::string::npos);
  }
}

TEST(AlignProperty, PureReordering) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    PredictionTable t{"m", {}};
    std::vector<DocId> ids;
    for (DocId i = 0; i < 20; ++i) {
      t.by_id[i] = senti::testing::random_distribution(rng);
      ids.push_back(i);
    }
    shuffle(std::span<DocId>(ids), rng);
    const auto m = align({t}, ids);
    std::vector<double> got, want;
    for (const auto& row : m) got.push_back(row[0].positive());
    for (const auto& [id, d] : t.by_id) want.push_back(d.positive());
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(got, want);
  }
}
