#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/features.hpp"
#include "senti/linear_models.hpp"
#include "senti/random.hpp"
#include "senti/textprep.hpp"
#include "senti/types.hpp"

namespace senti::explain {

struct AttributionItem {
  std::string name;
  double value = 0.0;
  friend bool operator==(const AttributionItem&, const AttributionItem&) = default;
};

/// base_value + sum(items) == output_value.
struct Attribution {
  std::vector<AttributionItem> items;
  double base_value = 0.0;
  double output_value = 0.0;

  double total() const {
    double s = 0.0;
    for (const auto& i : items) s += i.value;
    return s;
  }

  friend bool operator==(const Attribution&, const Attribution&) = default;
};

struct MaskingConfig {
  std::string mask_token = "[MASK]";
  std::size_t max_evaluations = 1024;
  std::uint64_t seed = 42;
};

/// Exact Shapley values of the margin w.x + b against a background point mu,
/// assuming independent features: contribution_j = w_j (x_j - mu_j). Items
/// cover every feature stored in x or mu, in index order.
inline Attribution explain_linear(const models::LinearModel& model, const SparseVector& x,
                                  const SparseVector& background_mean = {},
                                  const features::Vocabulary* vocab = nullptr) {
  if (vocab && vocab->size() != model.dimension()) {
    throw data_error("vocabulary has " + std::to_string(vocab->size()) + " terms but the model has " +
                     std::to_string(model.dimension()) + " weights");
  }
  models::check_bounds(x, model.dimension());
  models::check_bounds(background_mean, model.dimension());

  Attribution a;
  a.base_value = model.margin(background_mean);
  a.output_value = model.margin(x);
  auto name = [&](FeatureIndex j) { return vocab ? vocab->term(j) : "f" + std::to_string(j); };
  auto xi = x.begin();
  auto mi = background_mean.begin();
  while (xi != x.end() || mi != background_mean.end()) {
    FeatureIndex j;
    double xv = 0.0, mv = 0.0;
    if (mi == background_mean.end() || (xi != x.end() && xi->index < mi->index)) {
      j = xi->index;
      xv = (xi++)->weight;
    } else if (xi == x.end() || mi->index < xi->index) {
      j = mi->index;
      mv = (mi++)->weight;
    } else {
      j = xi->index;
      xv = (xi++)->weight;
      mv = (mi++)->weight;
    }
    a.items.push_back({name(j), model.weights[j] * (xv - mv)});
  }
  return a;
}

/// Column means of a set of vectors (training background for explain_linear).
inline SparseVector mean_vector(const std::vector<SparseVector>& rows, std::size_t dimension) {
  std::vector<double> dense(dimension, 0.0);
  for (const auto& r : rows) {
    models::check_bounds(r, dimension);
    for (const auto& e : r) dense[e.index] += e.weight;
  }
  if (!rows.empty()) {
    for (auto& v : dense) v /= static_cast<double>(rows.size());
  }
  return SparseVector::from_dense(dense);
}

using ProbabilityFunction = std::function<double(const textprep::TokenSequence&)>;

namespace detail {

class CoalitionOracle {
 public:
  CoalitionOracle(const ProbabilityFunction& predict, const textprep::TokenSequence& tokens, std::string mask)
      : predict_(predict), tokens_(tokens), mask_(std::move(mask)) {}

  /// P(positive) with every token outside `kept` replaced by the mask token.
  double value(const std::vector<bool>& kept) {
    std::string key(kept.size(), '0');
    for (std::size_t i = 0; i < kept.size(); ++i) key[i] = kept[i] ? '1' : '0';
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    textprep::TokenSequence masked = tokens_;
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!kept[i]) masked[i] = mask_;
    }
    double v;
    try {
      v = predict_(masked);
    } catch (const std::exception& e) {
      std::string ctx;
      for (const auto& t : masked) ctx += (ctx.empty() ? "" : " ") + t;
      throw data_error("prediction failed on masked input \"" + ctx + "\": " + e.what());
    }
    cache_.emplace(std::move(key), v);
    return v;
  }

  std::size_t evaluations() const noexcept { return cache_.size(); }

 private:
  const ProbabilityFunction& predict_;
  const textprep::TokenSequence& tokens_;
  std::string mask_;
  std::unordered_map<std::string, double> cache_;
};

// s! (n - s - 1)! / n!
inline double shapley_weight(std::size_t s, std::size_t n) {
  return std::exp(std::lgamma(static_cast<double>(s) + 1.0) + std::lgamma(static_cast<double>(n - s)) -
                  std::lgamma(static_cast<double>(n) + 1.0));
}

}  // namespace detail

/// Token attribution on the P(positive) scale by masking.
///
/// With a budget of at least 2^n coalitions the Shapley values are computed
/// exactly. Otherwise leave-one-out differences P(full) - P(token masked)
/// form the baseline, and when the budget covers at least one more full
/// permutation they are replaced by a seeded permutation-sampling Shapley
/// estimate. Any remaining gap between the sum of contributions and
/// P(full) - P(all masked) is spread over tokens in proportion to their
/// absolute contribution (equally when all are zero).
inline Attribution explain_by_masking(const ProbabilityFunction& predict, const textprep::TokenSequence& tokens,
                                      const MaskingConfig& cfg, std::size_t* evaluations = nullptr) {
  const std::size_t n = tokens.size();
  if (n == 0) throw usage_error("explain_by_masking needs at least one token");
  if (cfg.max_evaluations < n) {
    throw usage_error("explain.max_evaluations (" + std::to_string(cfg.max_evaluations) +
                      ") must be at least the token count (" + std::to_string(n) + ")");
  }
  detail::CoalitionOracle oracle(predict, tokens, cfg.mask_token);
  Attribution a;
  const std::vector<bool> all(n, true), none(n, false);
  a.output_value = oracle.value(all);
  a.base_value = oracle.value(none);
  std::vector<double> phi(n, 0.0);

  const bool exhaustive = n < 63 && (std::uint64_t{1} << n) <= cfg.max_evaluations;
  if (exhaustive) {
    const std::uint64_t count = std::uint64_t{1} << n;
    std::vector<double> v(count);
    std::vector<bool> kept(n);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      for (std::size_t i = 0; i < n; ++i) kept[i] = (mask >> i) & 1u;
      v[mask] = oracle.value(kept);
    }
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      if (s == n) continue;
      const double w = detail::shapley_weight(s, n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!((mask >> i) & 1u)) phi[i] += w * (v[mask | (std::uint64_t{1} << i)] - v[mask]);
      }
    }
  } else {
    std::vector<bool> kept(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      kept[i] = false;
      phi[i] = a.output_value - oracle.value(kept);
      kept[i] = true;
    }
    const std::size_t used = oracle.evaluations();
    const std::size_t per_permutation = std::max<std::size_t>(1, n - 1);
    const std::size_t permutations =
        cfg.max_evaluations > used ? (cfg.max_evaluations - used) / per_permutation : 0;
    if (permutations > 0) {
      std::fill(phi.begin(), phi.end(), 0.0);
      Rng rng(cfg.seed);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t p = 0; p < permutations; ++p) {
        shuffle(std::span<std::size_t>(order), rng);
        std::vector<bool> prefix(n, false);
        double prev = a.base_value;
        for (auto i : order) {
          prefix[i] = true;
          const double cur = oracle.value(prefix);
          phi[i] += cur - prev;
          prev = cur;
        }
      }
      for (auto& x : phi) x /= static_cast<double>(permutations);
    }
  }

  const double residual = (a.output_value - a.base_value) - std::accumulate(phi.begin(), phi.end(), 0.0);
  if (residual != 0.0) {
    double mass = 0.0;
    for (double x : phi) mass += std::abs(x);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] += mass > 0.0 ? residual * std::abs(phi[i]) / mass : residual / static_cast<double>(n);
    }
  }
  for (std::size_t i = 0; i < n; ++i) a.items.push_back({tokens[i], phi[i]});
  if (evaluations) *evaluations = oracle.evaluations();
  return a;
}

enum class RenderFormat { text, json, svg_bar };

inline nlohmann::json to_json(const Attribution& a) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : a.items) items.push_back({{"name", i.name}, {"value", i.value}});
  return {{"base_value", a.base_value}, {"output_value", a.output_value}, {"items", items}};
}

inline Attribution attribution_from_json(const nlohmann::json& j) {
  Attribution a;
  a.base_value = j.at("base_value").get<double>();
  a.output_value = j.at("output_value").get<double>();
  for (const auto& i : j.at("items")) a.items.push_back({i.at("name").get<std::string>(), i.at("value").get<double>()});
  return a;
}

namespace detail {

inline std::vector<AttributionItem> by_magnitude(const Attribution& a) {
  auto items = a.items;
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& x, const auto& y) { return std::abs(x.value) > std::abs(y.value); });
  return items;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// text: one signed line per item, largest magnitude first. svg_bar:
/// horizontal bars in the same order, positive red and negative blue.
/// An attribution without items renders as an empty string in text and SVG.
inline std::string render_attribution(const Attribution& a, RenderFormat format) {
  if (format == RenderFormat::json) return to_json(a).dump(2);
  if (a.items.empty()) return {};
  const auto items = detail::by_magnitude(a);
  char buf[64];
  if (format == RenderFormat::text) {
    std::string out;
    for (const auto& i : items) {
      std::snprintf(buf, sizeof buf, "%+.6f  ", i.value);
      out += buf + i.name + "\n";
    }
    std::snprintf(buf, sizeof buf, "base %.6f -> output %.6f\n", a.base_value, a.output_value);
    out += buf;
    return out;
  }

  constexpr int width = 640, label_w = 200, bar_h = 18, gap = 4, pad = 10;
  const int half = (width - label_w - 2 * pad) / 2;
  const int axis = label_w + pad + half;
  const double max_abs = std::abs(items.front().value);
  const int height = pad * 2 + static_cast<int>(items.size()) * (bar_h + gap);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "  <line x1=\"" << axis << "\" y1=\"0\" x2=\"" << axis << "\" y2=\"" << height
      << "\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  int y = pad;
  for (const auto& i : items) {
    const int len = max_abs > 0 ? static_cast<int>(std::lround(std::abs(i.value) / max_abs * half)) : 0;
    const int x = i.value >= 0 ? axis : axis - len;
    const char* color = i.value >= 0 ? "#d62728" : "#1f77b4";
    std::snprintf(buf, sizeof buf, "%+.4f", i.value);
    svg << "  <text x=\"" << label_w << "\" y=\"" << y + bar_h - 5 << "\" text-anchor=\"end\" font-size=\"12\">"
        << detail::xml_escape(i.name) << "</text>\n";
    svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << len << "\" height=\"" << bar_h << "\" fill=\""
        << color << "\"><title>" << buf << "</title></rect>\n";
    y += bar_h + gap;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace senti::explain
