#include <gtest/gtest.h>

#include <cmath>

#include "senti/features.hpp"
#include "senti/linear_models.hpp"
#include "support/synthetic_corpus.hpp"

using namespace senti;
using namespace senti::models;

namespace {

std::vector<Example> two_points() {
  return {{SparseVector{{{0, 1.0}}}, Label::positive}, {SparseVector{{{0, -1.0}}}, Label::negative}};
}

SparseVector vec(std::initializer_list<std::pair<FeatureIndex, double>> entries) {
  SparseVector v;
  for (auto [i, w] : entries) v.entries.push_back({i, w});
  return v;
}

std::vector<Example> random_sparse(Rng& rng, std::size_t n, std::size_t dim, bool non_negative = false) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> dense(dim, 0.0);
    for (auto& d : dense) {
      if (uniform_unit(rng) < 0.5) d = non_negative ? uniform_unit(rng) : 2.0 * uniform_unit(rng) - 1.0;
    }
    out.push_back({SparseVector::from_dense(dense), i % 2 ? Label::positive : Label::negative});
  }
  return out;
}

std::vector<Example> corpus_examples(std::size_t n, std::uint64_t seed, features::Vocabulary* vocab_out = nullptr) {
  const auto docs = senti::testing::synthetic_reviews(n, seed, 0.05);
  std::vector<textprep::TokenSequence> toks;
  for (const auto& d : docs) toks.push_back(textprep::preprocess(d.text, {}));
  auto vocab = features::fit(toks, {});
  std::vector<Example> out;
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back({features::transform(toks[i], vocab), docs[i].label});
  if (vocab_out) *vocab_out = vocab;
  return out;
}

// Posterior by enumerating every term occurrence with plain products, from
// raw (unnormalized) counts.
double nb_enumeration(const std::vector<Example>& train, double alpha, std::size_t dim, const SparseVector& x) {
  double score[2];
  for (int c = 0; c < 2; ++c) {
    double docs = 0, total = 0;
    std::vector<double> mass(dim, 0.0);
    for (const auto& ex : train) {
      if (static_cast<int>(slot(ex.y)) != c) continue;
      docs += 1;
      for (const auto& e : ex.x) {
        mass[e.index] += e.weight;
        total += e.weight;
      }
    }
    double p = docs / static_cast<double>(train.size());
    for (const auto& e : x) p *= std::pow((mass[e.index] + alpha) / (total + alpha * static_cast<double>(dim)), e.weight);
    score[c] = p;
  }
  return score[1] / (score[0] + score[1]);
}

}  // namespace

TEST(NaiveBayes, HandComputedToy) {
  // V = 2: index 0 = "bad", 1 = "good".
  const std::vector<Example> train{{vec({{1, 2.0}}), Label::positive}, {vec({{0, 1.0}}), Label::negative}};
  const auto m = train_nb(train, {}, 2);
  const auto p = m.predict_proba(vec({{1, 1.0}}));
  const double expected = (0.5 * 3.0 / 4.0) / (0.5 * 3.0 / 4.0 + 0.5 * 1.0 / 3.0);
  EXPECT_NEAR(p.positive(), expected, 1e-12);
  EXPECT_NEAR(p.positive(), 0.6923, 1e-4);
  EXPECT_NEAR(p.negative(), 0.3077, 1e-4);
}

TEST(NaiveBayes, BalancedPriorsAndEmptyInput) {
  const std::vector<Example> train{{vec({{1, 2.0}}), Label::positive}, {vec({{0, 1.0}}), Label::negative}};
  const auto m = train_nb(train, {}, 2);
  EXPECT_EQ(m.log_prior[0], m.log_prior[1]);
  const auto p = m.predict_proba({});
  EXPECT_NEAR(p.positive(), 0.5, 1e-15);
}

TEST(NaiveBayes, Errors) {
  EXPECT_THROW(train_nb({{vec({{0, 1.0}}), Label::positive}}, {}, 1), Error);
  EXPECT_THROW(train_nb({{vec({{0, -1.0}}), Label::positive}, {vec({{0, 1.0}}), Label::negative}}, {}, 1), Error);
  const auto m = train_nb({{vec({{0, 1.0}}), Label::positive}, {vec({{0, 1.0}}), Label::negative}}, {}, 1);
  EXPECT_THROW(m.predict_proba(vec({{3, 1.0}})), Error);
}

TEST(NaiveBayesProperty, MatchesEnumeration) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto dim = 1 + uniform_below(rng, 4);
    const auto n = 2 + uniform_below(rng, 5);
    auto train = random_sparse(rng, n, dim, true);
    TrainConfig cfg;
    cfg.nb_alpha = 0.1 + uniform_unit(rng);
    const auto m = train_nb(train, cfg, dim);
    const auto x = random_sparse(rng, 1, dim, true)[0].x;
    EXPECT_NEAR(m.predict_proba(x).positive(), nb_enumeration(train, cfg.nb_alpha, dim, x), 1e-9);
  }
}

TEST(Logistic, SigmoidMidpoint) {
  const LinearModel m{LinearKind::logistic, {0.0, 0.0}, 0.0};
  const auto p = m.predict_proba(vec({{0, 1.0}}));
  EXPECT_EQ(p.positive(), 0.5);
  EXPECT_EQ(p.negative(), 0.5);
}

TEST(Logistic, SeparableTwoPoints) {
  const auto m = train_logistic(two_points(), {}, 1);
  EXPECT_GT(m.predict_proba(vec({{0, 1.0}})).positive(), 0.9);
  EXPECT_LT(m.predict_proba(vec({{0, -1.0}})).positive(), 0.1);
}

TEST(Logistic, ZeroIterationsRejected) {
  TrainConfig cfg;
  cfg.lr_iterations = 0;
  EXPECT_THROW(train_logistic(two_points(), cfg, 1), Error);
  cfg = {};
  cfg.svm_iterations = 0;
  EXPECT_THROW(train_svm(two_points(), cfg, 1), Error);
}

TEST(Logistic, BiasGradientVanishesAtOriginOnBalancedData) {
  const auto g = logistic_gradient(two_points(), {0.0}, 0.0, 0.0);
  EXPECT_EQ(g.bias, 0.0);
}

TEST(Logistic, DivergenceNamesTheLearningRate) {
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.l2 = 0.0;
  const std::vector<Example> data{{vec({{0, 1e10}}), Label::positive}, {vec({{0, 1e10}}), Label::negative},
                                  {vec({{0, -1e10}}), Label::negative}};
  try {
    train_logistic(data, cfg, 1);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos) << e.what();
  }
}

TEST(Logistic, SingleClassRejected) {
  EXPECT_THROW(train_logistic({{vec({{0, 1.0}}), Label::positive}}, {}, 1), Error);
}

TEST(LogisticProperty, GradientMatchesFiniteDifferences) {
  Rng rng(41);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const auto dim = 1 + uniform_below(rng, 6);
    const auto data = random_sparse(rng, 2 + uniform_below(rng, 8), dim);
    std::vector<double> w(dim);
    for (auto& x : w) x = 2.0 * uniform_unit(rng) - 1.0;
    const double b = uniform_unit(rng) - 0.5, l2 = 0.1 * uniform_unit(rng);
    const auto g = logistic_gradient(data, w, b, l2);
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1e-6, std::abs(a) + std::abs(n)); };
    for (std::size_t j = 0; j < dim; ++j) {
      auto wp = w, wm = w;
      wp[j] += h;
      wm[j] -= h;
      const double num = (logistic_objective(data, wp, b, l2) - logistic_objective(data, wm, b, l2)) / (2 * h);
      EXPECT_LT(rel(g.weights[j], num), 1e-4);
    }
    const double num_b = (logistic_objective(data, w, b + h, l2) - logistic_objective(data, w, b - h, l2)) / (2 * h);
    EXPECT_LT(rel(g.bias, num_b), 1e-4);
  }
}

TEST(LogisticProperty, ObjectiveNeverIncreases) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = random_sparse(rng, 40, 8);
    TrainConfig cfg;
    cfg.lr_iterations = 200;
    cfg.learning_rate = 0.5 + 4.0 * uniform_unit(rng);
    cfg.l2 = 0.01;
    cfg.seed = trial;
    TrainTrace trace;
    train_logistic(data, cfg, 8, &trace);
    ASSERT_GE(trace.objective.size(), 2u);
    for (std::size_t i = 1; i < trace.objective.size(); ++i) EXPECT_LE(trace.objective[i], trace.objective[i - 1]);
    EXPECT_LT(trace.objective.back(), trace.objective.front());
  }
}

TEST(LogisticProperty, DeterministicGivenSeed) {
  const auto data = corpus_examples(120, 3);
  const auto dim = data.front().x.entries.back().index + 1000;
  const auto a = train_logistic(data, {}, dim), b = train_logistic(data, {}, dim);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(Svm, SeparableTwoPoints) {
  const auto m = train_svm(two_points(), {}, 1);
  EXPECT_GT(m.margin(vec({{0, 1.0}})), 0.0);
  EXPECT_LT(m.margin(vec({{0, -1.0}})), 0.0);
}

TEST(Svm, CalibratedMidpointNearHalf) {
  features::Vocabulary vocab;
  const auto data = corpus_examples(200, 6, &vocab);
  const auto m = train_svm(data, {}, vocab.size());
  const double p0 = m.calibrator(0.0);
  EXPECT_GT(p0, 0.25);
  EXPECT_LT(p0, 0.75);
  EXPECT_GT(m.calibrator(1e6), 0.0);
  EXPECT_LT(m.calibrator(1e6), 1.0);
  EXPECT_GT(m.calibrator(-1e6), 0.0);
}

TEST(Svm, FlippedLabelsNegateMargins) {
  features::Vocabulary vocab;
  auto data = corpus_examples(80, 7, &vocab);
  const auto m = train_svm_margins(data, {}, vocab.size());
  for (auto& ex : data) ex.y = ex.y == Label::positive ? Label::negative : Label::positive;
  const auto f = train_svm_margins(data, {}, vocab.size());
  for (const auto& ex : data) EXPECT_NEAR(f.margin(ex.x), -m.margin(ex.x), 1e-9);
}

TEST(Svm, ObjectiveNeverIncreases) {
  features::Vocabulary vocab;
  const auto data = corpus_examples(100, 8, &vocab);
  TrainTrace trace;
  train_svm_margins(data, {}, vocab.size(), &trace);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) EXPECT_LE(trace.objective[i], trace.objective[i - 1]);
}

TEST(Platt, RecoversKnownSigmoid) {
  Rng rng(5);
  std::vector<double> margins;
  std::vector<Label> labels;
  for (int i = 0; i < 20000; ++i) {
    const double m = 6.0 * uniform_unit(rng) - 3.0;
    margins.push_back(m);
    labels.push_back(uniform_unit(rng) < sigmoid(2.0 * m - 0.5) ? Label::positive : Label::negative);
  }
  const auto c = fit_platt(margins, labels);
  EXPECT_NEAR(c.a, 2.0, 0.15);
  EXPECT_NEAR(c.b, -0.5, 0.1);
}

TEST(Models, PredictionsAreDistributions) {
  features::Vocabulary vocab;
  const auto data = corpus_examples(150, 9, &vocab);
  const std::vector<AnyModel> models{train_nb(data, {}, vocab.size()), train_logistic(data, {}, vocab.size()),
                                     train_svm(data, {}, vocab.size())};
  for (const auto& m : models) {
    for (const auto& ex : data) EXPECT_TRUE(is_valid(predict_proba(m, ex.x), 1e-9));
  }
}

TEST(Models, ArgmaxInvariantUnderPositiveScaling) {
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const double s0 = uniform_unit(rng), s1 = uniform_unit(rng), k = 1e-3 + 100 * uniform_unit(rng);
    const auto a = ProbabilityDistribution{{s0, s1}}.argmax();
    const auto b = ProbabilityDistribution{{k * s0, k * s1}}.argmax();
    EXPECT_EQ(a, b);
  }
}

TEST(Models, ArtifactRoundTripAndVocabularyCheck) {
  features::Vocabulary vocab;
  const auto data = corpus_examples(100, 11, &vocab);
  const std::vector<AnyModel> models{train_nb(data, {}, vocab.size()), train_logistic(data, {}, vocab.size()),
                                     train_svm(data, {}, vocab.size())};
  for (const auto& m : models) {
    const auto j = to_json(m, "abc");
    const auto back = from_json(nlohmann::json::parse(j.dump()), "abc");
    EXPECT_EQ(model_id(back), model_id(m));
    for (const auto& ex : data) EXPECT_EQ(predict_proba(back, ex.x), predict_proba(m, ex.x));
    EXPECT_THROW(from_json(j, "other"), Error);
  }
  EXPECT_EQ(model_id(models[0]), "naive_bayes");
  EXPECT_EQ(model_id(models[1]), "logistic_regression");
  EXPECT_EQ(model_id(models[2]), "svm");
}

TEST(Models, ConceptCoversAllNativeModels) {
  static_assert(ProbabilisticClassifier<NaiveBayesModel>);
  static_assert(ProbabilisticClassifier<LinearModel>);
  static_assert(ProbabilisticClassifier<CalibratedSvm>);
  SUCCEED();
}
