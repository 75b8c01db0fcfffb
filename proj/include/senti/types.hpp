#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "senti/error.hpp"

namespace senti {

/// Binary sentiment label. The numeric value doubles as the class slot in
/// every probability array: slot 0 is negative, slot 1 is positive.
enum class Label : std::uint8_t { negative = 0, positive = 1 };

inline constexpr std::size_t kClassCount = 2;

inline constexpr std::size_t slot(Label l) noexcept { return static_cast<std::size_t>(l); }

inline const char* to_string(Label l) noexcept {
  return l == Label::positive ? "positive" : "negative";
}

using DocId = std::uint64_t;
using FeatureIndex = std::uint32_t;

/// Per-class probabilities for one document from one model, ordered
/// [negative, positive].
struct ProbabilityDistribution {
  std::array<double, kClassCount> p{0.5, 0.5};

  double operator[](std::size_t c) const noexcept { return p[c]; }
  double& operator[](std::size_t c) noexcept { return p[c]; }

  double positive() const noexcept { return p[1]; }
  double negative() const noexcept { return p[0]; }

  /// Lower class index wins ties.
  Label argmax() const noexcept { return p[1] > p[0] ? Label::positive : Label::negative; }

  static ProbabilityDistribution from_positive(double pos) noexcept {
    return ProbabilityDistribution{{1.0 - pos, pos}};
  }

  friend bool operator==(const ProbabilityDistribution&, const ProbabilityDistribution&) = default;
};

inline bool is_valid(const ProbabilityDistribution& d, double tol = 1e-9) noexcept {
  double sum = 0.0;
  for (double v : d.p) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline void require_valid(const ProbabilityDistribution& d, const std::string& context) {
  if (!is_valid(d)) {
    throw data_error("invalid probability distribution (" + context + "): [" +
                     std::to_string(d.p[0]) + ", " + std::to_string(d.p[1]) + "]");
  }
}

/// Sparse feature vector: indices strictly increasing, no stored zeros.
struct SparseVector {
  struct Entry {
    FeatureIndex index;
    double weight;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::vector<Entry> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
  auto begin() const noexcept { return entries.begin(); }
  auto end() const noexcept { return entries.end(); }

  double norm() const noexcept {
    double s = 0.0;
    for (const auto& e : entries) s += e.weight * e.weight;
    return std::sqrt(s);
  }

  double at(FeatureIndex index) const noexcept {
    for (const auto& e : entries) {
      if (e.index == index) return e.weight;
      if (e.index > index) break;
    }
    return 0.0;
  }

  /// Builds a vector from a dense array, dropping zeros.
  static SparseVector from_dense(const std::vector<double>& dense) {
    SparseVector v;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] != 0.0) v.entries.push_back({static_cast<FeatureIndex>(i), dense[i]});
    }
    return v;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

struct Example {
  SparseVector x;
  Label y;
};

}  // namespace senti
