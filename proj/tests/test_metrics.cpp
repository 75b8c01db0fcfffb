#include <gtest/gtest.h>

#include "senti/metrics.hpp"
#include "support/synthetic_corpus.hpp"

using namespace senti;
using namespace senti::metrics;

namespace {
constexpr Label P = Label::positive, N = Label::negative;
}

TEST(Confusion, HandCase) {
  const auto cm = confusion({P, P, N, N, P}, {P, N, N, P, P});
  EXPECT_EQ(cm, (ConfusionMatrix{2, 1, 1, 1}));
  const auto m = scalar_metrics(cm);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
}

TEST(Confusion, ReferenceExamples) {
  EXPECT_EQ(confusion({P, P, N, N}, {P, N, N, P}), (ConfusionMatrix{1, 1, 1, 1}));
  EXPECT_EQ(confusion({P, N, P}, {P, N, P}).fp, 0u);
  EXPECT_EQ(confusion({P, P}, {N, N}), (ConfusionMatrix{0, 2, 0, 0}));
  const auto m = scalar_metrics(ConfusionMatrix{2, 1, 0, 1});
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
  const auto perfect = scalar_metrics(ConfusionMatrix{3, 0, 4, 0});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.3, 0.2}, {P, P, N, N}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.3, 0.2}, {P, N, P, N}), 0.75);
}

TEST(Confusion, Errors) {
  EXPECT_THROW(confusion({}, {}), Error);
  EXPECT_THROW(confusion({P}, {P, N}), Error);
}

TEST(Scalars, DegenerateDenominators) {
  const auto m = scalar_metrics(ConfusionMatrix{0, 0, 3, 2});
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_FALSE(m.recall_undefined);
  EXPECT_TRUE(m.f1_undefined);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
}

TEST(RocAuc, HandCases) {
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.4, 0.35, 0.8}, {N, N, P, P}), 0.75);
  EXPECT_DOUBLE_EQ(roc_auc({0.5, 0.5, 0.5, 0.5}, {N, P, N, P}), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.1}, {P, N}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.9}, {P, N}), 0.0);
}

TEST(RocAuc, SingleClassIsAnError) {
  try {
    roc_auc({0.2, 0.7}, {P, P});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
    EXPECT_NE(std::string(e.what()).find("only one class"), std::string::npos);
  }
}

TEST(Evaluate, ThresholdAndReport) {
  const auto r = evaluate("m", {ProbabilityDistribution::from_positive(0.9), ProbabilityDistribution::from_positive(0.5),
                                ProbabilityDistribution::from_positive(0.2)},
                          {P, P, N});
  EXPECT_EQ(r.n, 3u);
  EXPECT_EQ(r.confusion, (ConfusionMatrix{1, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(r.roc_auc, 1.0);
  EXPECT_THROW(evaluate("m", {}, {}), Error);
}

TEST(Report, JsonRoundTrip) {
  const auto r = evaluate("nb", {ProbabilityDistribution::from_positive(0.1), ProbabilityDistribution::from_positive(0.3)},
                          {P, N});
  const auto back = report_from_json(to_json(r));
  EXPECT_EQ(back.model, "nb");
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.scalars.f1_undefined, r.scalars.f1_undefined);
  EXPECT_EQ(back.roc_auc, r.roc_auc);
  EXPECT_EQ(to_json(back), to_json(r));
}

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<Label>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != P || y[j] != N) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

bool random_instance(Rng& rng, std::vector<double>& s, std::vector<Label>& y) {
  s.clear();
  y.clear();
  const auto n = 2 + uniform_below(rng, 49);
  for (std::uint64_t i = 0; i < n; ++i) {
    // Coarse grid so ties are common.
    s.push_back(static_cast<double>(uniform_below(rng, 8)) / 8.0);
    y.push_back(uniform_unit(rng) < 0.5 ? P : N);
  }
  return std::count(y.begin(), y.end(), P) > 0 && std::count(y.begin(), y.end(), N) > 0;
}

}  // namespace

TEST(MetricsProperty, AucMatchesPairCounting) {
  Rng rng(31);
  std::vector<double> s;
  std::vector<Label> y;
  for (int trial = 0; trial < 2000; ++trial) {
    if (!random_instance(rng, s, y)) continue;
    EXPECT_NEAR(roc_auc(s, y), pair_count_auc(s, y), 1e-12);
  }
}

TEST(MetricsProperty, AucInvariantUnderMonotoneMapAndComplementary) {
  Rng rng(32);
  std::vector<double> s;
  std::vector<Label> y;
  for (int trial = 0; trial < 1000; ++trial) {
    if (!random_instance(rng, s, y)) continue;
    const double auc = roc_auc(s, y);
    auto mapped = s;
    for (auto& v : mapped) v = std::exp(3.0 * v) - 7.0;
    EXPECT_NEAR(roc_auc(mapped, y), auc, 1e-12);
    auto flipped = y;
    for (auto& l : flipped) l = l == P ? N : P;
    EXPECT_NEAR(roc_auc(s, flipped), 1.0 - auc, 1e-12);
    EXPECT_GE(auc, 0.0);
    EXPECT_LE(auc, 1.0);
  }
}

TEST(MetricsProperty, ScalarsInRangeAndConsistent) {
  Rng rng(33);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<Label> p, t;
    for (std::uint64_t i = 0, n = 1 + uniform_below(rng, 40); i < n; ++i) {
      p.push_back(uniform_unit(rng) < 0.5 ? P : N);
      t.push_back(uniform_unit(rng) < 0.5 ? P : N);
    }
    const auto cm = confusion(p, t);
    EXPECT_EQ(cm.total(), p.size());
    const auto m = scalar_metrics(cm);
    for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
    EXPECT_GE(m.f1, std::min(m.precision, m.recall) - 1e-15);
  }
}
