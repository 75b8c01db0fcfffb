#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/external_probs.hpp"
#include "senti/types.hpp"

namespace senti::ensemble {

/// Ordered model ids with non-negative weights summing to one.
///
/// combined(c) = sum_i w_i * P_i(c), so `combined` is itself a distribution.
/// Equal weights give the plain mean of the members.
class EnsembleConfig {
 public:
  EnsembleConfig() = default;

  /// Empty `weights` means equal weighting. Weights are normalized to sum to
  /// one; any negative weight or a zero total is rejected.
  EnsembleConfig(std::vector<std::string> model_ids, std::vector<double> weights = {})
      : model_ids_(std::move(model_ids)), weights_(std::move(weights)) {
    if (model_ids_.empty()) throw usage_error("ensemble needs at least one model");
    if (weights_.empty()) weights_.assign(model_ids_.size(), 1.0);
    if (weights_.size() != model_ids_.size()) {
      throw usage_error("ensemble has " + std::to_string(model_ids_.size()) + " models but " +
                        std::to_string(weights_.size()) + " weights");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 0.0) throw usage_error("ensemble weights must be finite and non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw usage_error("ensemble weights must not all be zero");
    for (double& w : weights_) w /= total;
  }

  static EnsembleConfig equal(std::vector<std::string> model_ids) { return EnsembleConfig(std::move(model_ids)); }

  std::size_t size() const noexcept { return model_ids_.size(); }
  const std::vector<std::string>& model_ids() const noexcept { return model_ids_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

 private:
  std::vector<std::string> model_ids_;
  std::vector<double> weights_;
};

struct Verdict {
  Label label = Label::negative;
  ProbabilityDistribution combined;
  std::vector<ProbabilityDistribution> per_model;
};

/// Weighted soft vote; the label is the argmax of the combined distribution,
/// ties going to the negative class.
inline Verdict soft_vote(const std::vector<ProbabilityDistribution>& dists, const EnsembleConfig& cfg) {
  if (dists.size() != cfg.size()) {
    throw data_error("soft_vote got " + std::to_string(dists.size()) + " distributions for " +
                     std::to_string(cfg.size()) + " models");
  }
  Verdict v;
  v.combined.p.fill(0.0);
  for (std::size_t i = 0; i < dists.size(); ++i) {
    require_valid(dists[i], "model " + cfg.model_ids()[i]);
    for (std::size_t c = 0; c < kClassCount; ++c) v.combined[c] += cfg.weights()[i] * dists[i][c];
  }
  v.label = v.combined.argmax();
  v.per_model = dists;
  return v;
}

enum class Aggregation { mean, max_confidence };

/// Collapses per-sentence distributions into one review-level distribution.
inline ProbabilityDistribution aggregate_sentences(const std::vector<ProbabilityDistribution>& sentence_dists,
                                                   Aggregation strategy) {
  if (sentence_dists.empty()) throw data_error("cannot aggregate an empty list of sentence distributions");
  if (strategy == Aggregation::max_confidence) {
    auto confidence = [](const ProbabilityDistribution& d) { return *std::max_element(d.p.begin(), d.p.end()); };
    const ProbabilityDistribution* best = &sentence_dists.front();
    for (const auto& d : sentence_dists) {
      if (confidence(d) > confidence(*best)) best = &d;
    }
    return *best;
  }
  ProbabilityDistribution out;
  out.p.fill(0.0);
  for (const auto& d : sentence_dists) {
    for (std::size_t c = 0; c < kClassCount; ++c) out[c] += d[c];
  }
  double total = 0.0;
  for (double v : out.p) total += v;
  for (double& v : out.p) v /= total;
  return out;
}

/// Row-wise soft vote over an aligned matrix; output order follows rows.
inline std::vector<Verdict> batch_vote(const external::ProbabilityMatrix& matrix, const EnsembleConfig& cfg) {
  std::vector<Verdict> out;
  out.reserve(matrix.size());
  for (const auto& row : matrix) out.push_back(soft_vote(row, cfg));
  return out;
}

inline nlohmann::json to_json(const Verdict& v, DocId id, const EnsembleConfig& cfg) {
  nlohmann::json per_model = nlohmann::json::object();
  for (std::size_t i = 0; i < v.per_model.size(); ++i) per_model[cfg.model_ids()[i]] = v.per_model[i].p;
  return {{"id", id}, {"label", to_string(v.label)}, {"combined", v.combined.p}, {"per_model", per_model}};
}

}  // namespace senti::ensemble
