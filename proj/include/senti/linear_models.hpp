#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/random.hpp"
#include "senti/types.hpp"

namespace senti::models {

struct TrainConfig {
  std::size_t lr_iterations = 1000;   // epoch cap for logistic regression
  std::size_t svm_iterations = 2000;  // epoch cap for the linear SVM
  double learning_rate = 0.5;
  double l2 = 4e-5;
  double nb_alpha = 1.0;
  std::uint64_t seed = 42;
  // Stop once an accepted epoch improves the objective by less than
  // tolerance * max(1, objective).
  double tolerance = 1e-7;
  std::size_t calibration_folds = 3;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.lr_iterations < 1) throw usage_error("train.lr_iterations must be >= 1");
  if (cfg.svm_iterations < 1) throw usage_error("train.svm_iterations must be >= 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw usage_error("train.learning_rate must be a positive finite number");
  }
  if (!(cfg.l2 >= 0.0) || !std::isfinite(cfg.l2)) throw usage_error("train.l2 must be non-negative");
  if (!(cfg.nb_alpha > 0.0)) throw usage_error("train.nb_alpha must be > 0");
  if (!(cfg.tolerance >= 0.0)) throw usage_error("train.tolerance must be >= 0");
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(-z)) without overflow.
inline double log1p_exp_neg(double z) {
  if (z >= 0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

inline double label_sign(Label y) { return y == Label::positive ? 1.0 : -1.0; }

inline void check_bounds(const SparseVector& x, std::size_t dimension) {
  if (!x.empty() && x.entries.back().index >= dimension) {
    throw data_error("feature index " + std::to_string(x.entries.back().index) + " out of bounds for dimension " +
                     std::to_string(dimension));
  }
}

inline void require_both_classes(const std::vector<Example>& train) {
  std::array<std::size_t, kClassCount> counts{};
  for (const auto& ex : train) ++counts[slot(ex.y)];
  for (std::size_t c = 0; c < kClassCount; ++c) {
    if (counts[c] == 0) {
      throw data_error(std::string("training data has no ") + to_string(static_cast<Label>(c)) + " examples");
    }
  }
}

template <typename M>
concept ProbabilisticClassifier = requires(const M& m, const SparseVector& x) {
  { m.predict_proba(x) } -> std::same_as<ProbabilityDistribution>;
  { m.model_id() } -> std::convertible_to<std::string>;
};

template <ProbabilisticClassifier M>
ProbabilityDistribution predict_proba(const M& model, const SparseVector& x) {
  return model.predict_proba(x);
}

// ---------------------------------------------------------------------------
// Multinomial naive Bayes

struct NaiveBayesModel {
  std::array<double, kClassCount> log_prior{};
  std::array<std::vector<double>, kClassCount> log_likelihood;
  double alpha = 1.0;

  std::size_t dimension() const noexcept { return log_likelihood[0].size(); }
  std::string model_id() const { return "naive_bayes"; }

  std::array<double, kClassCount> joint_log_likelihood(const SparseVector& x) const {
    check_bounds(x, dimension());
    std::array<double, kClassCount> score = log_prior;
    for (std::size_t c = 0; c < kClassCount; ++c) {
      for (const auto& e : x) score[c] += e.weight * log_likelihood[c][e.index];
    }
    return score;
  }

  ProbabilityDistribution predict_proba(const SparseVector& x) const {
    const auto score = joint_log_likelihood(x);
    const double mx = std::max(score[0], score[1]);
    const double lse = mx + std::log(std::exp(score[0] - mx) + std::exp(score[1] - mx));
    ProbabilityDistribution d;
    d[0] = std::exp(score[0] - lse);
    d[1] = std::exp(score[1] - lse);
    const double s = d[0] + d[1];
    d[0] /= s;
    d[1] /= s;
    return d;
  }
};

/// Fractional feature weights count as fractional term occurrences.
inline NaiveBayesModel train_nb(const std::vector<Example>& train, const TrainConfig& cfg, std::size_t dimension) {
  validate(cfg);
  require_both_classes(train);
  std::array<std::vector<double>, kClassCount> mass{std::vector<double>(dimension, 0.0),
                                                    std::vector<double>(dimension, 0.0)};
  std::array<double, kClassCount> total{};
  std::array<std::size_t, kClassCount> docs{};
  for (const auto& ex : train) {
    check_bounds(ex.x, dimension);
    const auto c = slot(ex.y);
    ++docs[c];
    for (const auto& e : ex.x) {
      if (e.weight < 0.0) throw data_error("naive Bayes needs non-negative feature weights");
      mass[c][e.index] += e.weight;
      total[c] += e.weight;
    }
  }
  NaiveBayesModel m;
  m.alpha = cfg.nb_alpha;
  const double n = static_cast<double>(train.size());
  for (std::size_t c = 0; c < kClassCount; ++c) {
    m.log_prior[c] = std::log(static_cast<double>(docs[c]) / n);
    const double denom = std::log(total[c] + cfg.nb_alpha * static_cast<double>(dimension));
    m.log_likelihood[c].resize(dimension);
    for (std::size_t j = 0; j < dimension; ++j) {
      m.log_likelihood[c][j] = std::log(mass[c][j] + cfg.nb_alpha) - denom;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Linear models (logistic regression, linear SVM)

enum class LinearKind { logistic, svm };

inline const char* to_string(LinearKind k) { return k == LinearKind::logistic ? "logistic" : "svm"; }

struct LinearModel {
  LinearKind kind = LinearKind::logistic;
  std::vector<double> weights;
  double bias = 0.0;

  std::size_t dimension() const noexcept { return weights.size(); }

  double margin(const SparseVector& x) const {
    check_bounds(x, dimension());
    double z = bias;
    for (const auto& e : x) z += weights[e.index] * e.weight;
    return z;
  }

  std::string model_id() const { return kind == LinearKind::logistic ? "logistic_regression" : "svm_uncalibrated"; }

  ProbabilityDistribution predict_proba(const SparseVector& x) const {
    if (kind != LinearKind::logistic) throw usage_error("an SVM needs its calibrator to produce probabilities");
    return ProbabilityDistribution::from_positive(sigmoid(margin(x)));
  }
};

/// Sigmoid map from decision margin to P(positive): sigmoid(a * margin + b).
struct Calibrator {
  double a = 1.0;
  double b = 0.0;

  double operator()(double margin) const {
    // Clamp keeps outputs strictly inside (0,1) even for huge margins.
    constexpr double eps = 1e-15;
    return std::clamp(sigmoid(a * margin + b), eps, 1.0 - eps);
  }
};

struct CalibratedSvm {
  LinearModel linear;
  Calibrator calibrator;

  std::string model_id() const { return "svm"; }
  double margin(const SparseVector& x) const { return linear.margin(x); }
  ProbabilityDistribution predict_proba(const SparseVector& x) const {
    return ProbabilityDistribution::from_positive(calibrator(linear.margin(x)));
  }
};

struct LogisticLoss {
  static double value(double y_margin) { return log1p_exp_neg(y_margin); }
  // d loss / d (y * margin)
  static double slope(double y_margin) { return -sigmoid(-y_margin); }
};

struct HingeLoss {
  static double value(double y_margin) { return std::max(0.0, 1.0 - y_margin); }
  static double slope(double y_margin) { return y_margin < 1.0 ? -1.0 : 0.0; }
};

/// Regularized empirical risk: mean loss + (l2 / 2) * |w|^2. Bias is not
/// regularized.
template <typename Loss>
double objective(const std::vector<Example>& data, const std::vector<double>& w, double bias, double l2) {
  double loss = 0.0;
  for (const auto& ex : data) {
    double z = bias;
    for (const auto& e : ex.x) z += w[e.index] * e.weight;
    loss += Loss::value(label_sign(ex.y) * z);
  }
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return loss / static_cast<double>(data.size()) + 0.5 * l2 * sq;
}

inline double logistic_objective(const std::vector<Example>& data, const std::vector<double>& w, double bias,
                                 double l2) {
  return objective<LogisticLoss>(data, w, bias, l2);
}

struct Gradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Analytic gradient of `logistic_objective`.
inline Gradient logistic_gradient(const std::vector<Example>& data, const std::vector<double>& w, double bias,
                                  double l2) {
  Gradient g{std::vector<double>(w.size(), 0.0), 0.0};
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    double z = bias;
    for (const auto& e : ex.x) z += w[e.index] * e.weight;
    const double y = label_sign(ex.y);
    const double coef = LogisticLoss::slope(y * z) * y * inv_n;
    for (const auto& e : ex.x) g.weights[e.index] += coef * e.weight;
    g.bias += coef;
  }
  for (std::size_t j = 0; j < w.size(); ++j) g.weights[j] += l2 * w[j];
  return g;
}

struct TrainTrace {
  std::vector<double> objective;  // initial value, then one entry per epoch
  std::size_t epochs = 0;
  std::size_t rejected_epochs = 0;
};

namespace detail {

/// Seeded SGD over shuffled epochs. The weight vector is stored as
/// scale * v so the L2 shrink costs O(1) per step. Each epoch's step size is
/// base / sqrt(1 + epoch); an epoch that raises the full objective is rolled
/// back and halves the base step, so the accepted objective never increases.
template <typename Loss>
LinearModel sgd_train(const std::vector<Example>& data, std::size_t dimension, std::size_t max_epochs,
                      const TrainConfig& cfg, LinearKind kind, TrainTrace* trace) {
  validate(cfg);
  require_both_classes(data);
  for (const auto& ex : data) check_bounds(ex.x, dimension);

  std::vector<double> w(dimension, 0.0);
  double bias = 0.0;
  double current = objective<Loss>(data, w, bias, cfg.l2);
  if (trace) trace->objective.push_back(current);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  double base_step = cfg.learning_rate;
  std::vector<double> v(dimension);

  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    const double step = base_step / std::sqrt(1.0 + static_cast<double>(epoch));
    const double shrink = 1.0 - step * cfg.l2;
    if (!(shrink > 0.0)) {
      throw usage_error("train.learning_rate * train.l2 must be < 1 (learning_rate " +
                        std::to_string(cfg.learning_rate) + ")");
    }
    v = w;
    double scale = 1.0;
    double b = bias;
    for (const auto i : order) {
      const auto& ex = data[i];
      double dot = 0.0;
      for (const auto& e : ex.x) dot += v[e.index] * e.weight;
      const double y = label_sign(ex.y);
      const double slope = Loss::slope(y * (scale * dot + b));
      scale *= shrink;
      if (slope != 0.0) {
        const double g = step * slope * y;
        const double inv_scale = 1.0 / scale;
        for (const auto& e : ex.x) v[e.index] -= g * e.weight * inv_scale;
        b -= g;
      }
      if (scale < 1e-9) {
        for (auto& x : v) x *= scale;
        scale = 1.0;
      }
    }
    for (auto& x : v) x *= scale;

    const double next = objective<Loss>(data, v, b, cfg.l2);
    if (!std::isfinite(next)) {
      throw data_error("training diverged (non-finite objective at epoch " + std::to_string(epoch + 1) +
                       "); lower train.learning_rate (currently " + std::to_string(cfg.learning_rate) + ")");
    }
    if (trace) ++trace->epochs;
    if (next > current) {
      base_step *= 0.5;
      if (trace) {
        ++trace->rejected_epochs;
        trace->objective.push_back(current);
      }
      if (base_step < cfg.learning_rate * 1e-12) break;
      continue;
    }
    const double improvement = current - next;
    w.swap(v);
    bias = b;
    current = next;
    if (trace) trace->objective.push_back(current);
    if (improvement < cfg.tolerance * std::max(1.0, current)) break;
  }
  return LinearModel{kind, std::move(w), bias};
}

}  // namespace detail

/// L2-regularized logistic regression by seeded stochastic gradient epochs.
inline LinearModel train_logistic(const std::vector<Example>& train, const TrainConfig& cfg, std::size_t dimension,
                                  TrainTrace* trace = nullptr) {
  return detail::sgd_train<LogisticLoss>(train, dimension, cfg.lr_iterations, cfg, LinearKind::logistic, trace);
}

/// Linear SVM (hinge loss) without calibration.
inline LinearModel train_svm_margins(const std::vector<Example>& train, const TrainConfig& cfg, std::size_t dimension,
                                     TrainTrace* trace = nullptr) {
  return detail::sgd_train<HingeLoss>(train, dimension, cfg.svm_iterations, cfg, LinearKind::svm, trace);
}

/// Platt sigmoid fit by Newton's method with backtracking, using the
/// smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).
inline Calibrator fit_platt(const std::vector<double>& margins, const std::vector<Label>& labels) {
  if (margins.size() != labels.size() || margins.empty()) throw data_error("calibration needs aligned margins");
  double n_pos = 0, n_neg = 0;
  for (auto y : labels) (y == Label::positive ? n_pos : n_neg) += 1;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i] == Label::positive ? hi : lo;

  // Parametrized as P = 1 / (1 + exp(A f + B)); the Calibrator stores a = -A, b = -B.
  double A = 0.0, B = std::log((n_neg + 1.0) / (n_pos + 1.0));
  auto fval = [&](double a, double b) {
    double f = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double fa = margins[i] * a + b;
      if (fa >= 0) {
        f += t[i] * fa + std::log1p(std::exp(-fa));
      } else {
        f += (t[i] - 1.0) * fa + std::log1p(std::exp(fa));
      }
    }
    return f;
  };
  constexpr double sigma = 1e-12, min_step = 1e-10, eps = 1e-5;
  double f = fval(A, B);
  for (int it = 0; it < 100; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
      const double fa = margins[i] * A + B;
      double p, q;
      if (fa >= 0) {
        p = std::exp(-fa) / (1.0 + std::exp(-fa));
        q = 1.0 / (1.0 + std::exp(-fa));
      } else {
        p = 1.0 / (1.0 + std::exp(fa));
        q = std::exp(fa) / (1.0 + std::exp(fa));
      }
      const double d2 = p * q;
      h11 += margins[i] * margins[i] * d2;
      h22 += d2;
      h21 += margins[i] * d2;
      const double d1 = t[i] - p;
      g1 += margins[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < eps && std::abs(g2) < eps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det;
    const double dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1.0;
    while (step >= min_step) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = fval(nA, nB);
      if (nf < f + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        f = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < min_step) break;
  }
  return Calibrator{-A, -B};
}

/// Linear SVM plus a Platt calibrator fitted on out-of-fold margins. Falls
/// back to in-sample margins when a class has fewer examples than folds.
inline CalibratedSvm train_svm(const std::vector<Example>& train, const TrainConfig& cfg, std::size_t dimension,
                               TrainTrace* trace = nullptr) {
  validate(cfg);
  require_both_classes(train);
  std::array<std::vector<std::size_t>, kClassCount> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[slot(train[i].y)].push_back(i);
  const std::size_t folds = cfg.calibration_folds;
  const bool cross = folds >= 2 && by_class[0].size() >= folds && by_class[1].size() >= folds;

  std::vector<double> margins(train.size());
  std::vector<Label> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) labels[i] = train[i].y;

  auto final_model = train_svm_margins(train, cfg, dimension, trace);
  if (cross) {
    std::vector<std::size_t> fold_of(train.size());
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& members : by_class) {
      shuffle(std::span<std::size_t>(members), rng);
      for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = k % folds;
    }
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<Example> fit_part;
      std::vector<std::size_t> held;
      for (std::size_t i = 0; i < train.size(); ++i) {
        if (fold_of[i] == f) {
          held.push_back(i);
        } else {
          fit_part.push_back(train[i]);
        }
      }
      const auto fold_model = train_svm_margins(fit_part, cfg, dimension);
      for (auto i : held) margins[i] = fold_model.margin(train[i].x);
    }
  } else {
    for (std::size_t i = 0; i < train.size(); ++i) margins[i] = final_model.margin(train[i].x);
  }
  return CalibratedSvm{std::move(final_model), fit_platt(margins, labels)};
}

// ---------------------------------------------------------------------------
// Artifacts

using AnyModel = std::variant<NaiveBayesModel, LinearModel, CalibratedSvm>;

inline std::string model_id(const AnyModel& m) {
  return std::visit([](const auto& x) { return x.model_id(); }, m);
}

inline ProbabilityDistribution predict_proba(const AnyModel& m, const SparseVector& x) {
  return std::visit([&](const auto& model) { return model.predict_proba(x); }, m);
}

inline nlohmann::json to_json(const AnyModel& model, const std::string& vocab_hash) {
  nlohmann::json j;
  j["format"] = "senti.model";
  j["version"] = 1;
  j["model_id"] = model_id(model);
  j["vocab_hash"] = vocab_hash;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, NaiveBayesModel>) {
          j["kind"] = "naive_bayes";
          j["alpha"] = m.alpha;
          j["log_prior"] = m.log_prior;
          j["log_likelihood"] = {m.log_likelihood[0], m.log_likelihood[1]};
        } else if constexpr (std::is_same_v<T, LinearModel>) {
          j["kind"] = to_string(m.kind);
          j["weights"] = m.weights;
          j["bias"] = m.bias;
        } else {
          j["kind"] = "svm";
          j["weights"] = m.linear.weights;
          j["bias"] = m.linear.bias;
          j["calibrator"] = {{"a", m.calibrator.a}, {"b", m.calibrator.b}};
        }
      },
      model);
  return j;
}

/// Parses a model artifact and refuses it when it was trained against a
/// different vocabulary.
inline AnyModel from_json(const nlohmann::json& j, const std::string& expected_vocab_hash) {
  if (j.value("format", "") != "senti.model" || j.value("version", 0) != 1) {
    throw data_error("not a senti.model v1 artifact");
  }
  const auto hash = j.at("vocab_hash").get<std::string>();
  if (hash != expected_vocab_hash) {
    throw data_error("model " + j.value("model_id", "?") + " was trained against vocabulary " + hash +
                     " but the loaded vocabulary is " + expected_vocab_hash);
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "naive_bayes") {
    NaiveBayesModel m;
    m.alpha = j.at("alpha").get<double>();
    m.log_prior = j.at("log_prior").get<std::array<double, kClassCount>>();
    const auto ll = j.at("log_likelihood").get<std::vector<std::vector<double>>>();
    if (ll.size() != kClassCount || ll[0].size() != ll[1].size()) throw data_error("malformed naive Bayes artifact");
    m.log_likelihood = {ll[0], ll[1]};
    return m;
  }
  LinearModel lin{kind == "svm" ? LinearKind::svm : LinearKind::logistic, j.at("weights").get<std::vector<double>>(),
                  j.at("bias").get<double>()};
  if (kind == "logistic") return lin;
  if (kind == "svm") {
    const auto& c = j.at("calibrator");
    return CalibratedSvm{std::move(lin), Calibrator{c.at("a").get<double>(), c.at("b").get<double>()}};
  }
  throw data_error("unknown model kind: " + kind);
}

}  // namespace senti::models
