#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/types.hpp"

namespace senti::metrics {

/// Positive class is label 1.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ScalarMetrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  // Set when the metric's denominator was zero and 0 was substituted.
  bool precision_undefined = false, recall_undefined = false, f1_undefined = false;
};

struct EvaluationReport {
  std::string model;
  std::size_t n = 0;
  ScalarMetrics scalars;
  double roc_auc = 0.0;
  ConfusionMatrix confusion;
};

inline ConfusionMatrix confusion(const std::vector<Label>& preds, const std::vector<Label>& truth) {
  if (preds.size() != truth.size()) {
    throw data_error("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  if (preds.empty()) throw data_error("confusion: empty prediction set");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == Label::positive, t = truth[i] == Label::positive;
    if (p && t) ++cm.tp;
    else if (p) ++cm.fp;
    else if (t) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

inline ScalarMetrics scalar_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw data_error("scalar_metrics: empty confusion matrix");
  ScalarMetrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.tp + cm.fp > 0) {
    m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  } else {
    m.precision_undefined = true;
  }
  if (cm.tp + cm.fn > 0) {
    m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  } else {
    m.recall_undefined = true;
  }
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_undefined = true;
  }
  return m;
}

/// Mann-Whitney AUC from average ranks: the chance a random positive scores
/// above a random negative, ties counting one half.
inline double roc_auc(const std::vector<double>& scores, const std::vector<Label>& truth) {
  if (scores.size() != truth.size()) throw data_error("roc_auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == Label::positive) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw data_error("roc_auc is undefined when only one class is present");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// Hard labels come from each distribution's argmax; AUC ranks P(positive).
inline EvaluationReport evaluate(const std::string& model, const std::vector<ProbabilityDistribution>& predictions,
                                 const std::vector<Label>& truth) {
  if (predictions.empty()) throw data_error("evaluate: empty prediction set for " + model);
  std::vector<Label> preds;
  std::vector<double> scores;
  preds.reserve(predictions.size());
  scores.reserve(predictions.size());
  for (const auto& d : predictions) {
    preds.push_back(d.argmax());
    scores.push_back(d.positive());
  }
  EvaluationReport r;
  r.model = model;
  r.n = predictions.size();
  r.confusion = confusion(preds, truth);
  r.scalars = scalar_metrics(r.confusion);
  r.roc_auc = roc_auc(scores, truth);
  return r;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json j{{"model", r.model},
                   {"n", r.n},
                   {"accuracy", r.scalars.accuracy},
                   {"precision", r.scalars.precision},
                   {"recall", r.scalars.recall},
                   {"f1", r.scalars.f1},
                   {"roc_auc", r.roc_auc},
                   {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn},
                                  {"fn", r.confusion.fn}}}};
  nlohmann::json flags = nlohmann::json::array();
  if (r.scalars.precision_undefined) flags.push_back("precision");
  if (r.scalars.recall_undefined) flags.push_back("recall");
  if (r.scalars.f1_undefined) flags.push_back("f1");
  j["degenerate"] = flags;
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  r.model = j.at("model").get<std::string>();
  r.n = j.at("n").get<std::size_t>();
  r.scalars.accuracy = j.at("accuracy").get<double>();
  r.scalars.precision = j.at("precision").get<double>();
  r.scalars.recall = j.at("recall").get<double>();
  r.scalars.f1 = j.at("f1").get<double>();
  r.roc_auc = j.at("roc_auc").get<double>();
  const auto& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("tn").get<std::size_t>(),
                 c.at("fn").get<std::size_t>()};
  if (j.contains("degenerate")) {
    for (const auto& f : j["degenerate"]) {
      if (f == "precision") r.scalars.precision_undefined = true;
      if (f == "recall") r.scalars.recall_undefined = true;
      if (f == "f1") r.scalars.f1_undefined = true;
    }
  }
  return r;
}

}  // namespace senti::metrics
