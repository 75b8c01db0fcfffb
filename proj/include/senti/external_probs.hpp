#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/hashing.hpp"
#include "senti/types.hpp"

namespace senti::external {

// Wire format, one record per line (UTF-8 JSON Lines):
//   {"id": <int>, "model": "<string>", "probs": [<P(negative)>, <P(positive)>]}
// ids are canonical corpus ids. A file carries exactly one model.

inline constexpr double kSumTolerance = 1e-3;

struct ProbabilityRecord {
  DocId id;
  std::string model;
  ProbabilityDistribution probs;
};

struct PredictionTable {
  std::string model;
  std::map<DocId, ProbabilityDistribution> by_id;

  std::size_t size() const noexcept { return by_id.size(); }
};

using ProbabilityMatrix = std::vector<std::vector<ProbabilityDistribution>>;

namespace detail {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline ProbabilityRecord parse_record(const std::string& line, std::size_t line_no) {
  const auto where = " at line " + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("malformed JSON" + where + ": " + e.what());
  }
  if (!j.is_object()) throw data_error("record is not a JSON object" + where);
  if (!j.contains("id") || !j["id"].is_number_integer() || j["id"].get<std::int64_t>() < 0) {
    throw data_error("missing or invalid non-negative integer \"id\"" + where);
  }
  if (!j.contains("model") || !j["model"].is_string() || j["model"].get<std::string>().empty()) {
    throw data_error("missing or invalid \"model\"" + where);
  }
  if (!j.contains("probs") || !j["probs"].is_array() || j["probs"].size() != kClassCount) {
    throw data_error("\"probs\" must be an array of " + std::to_string(kClassCount) + " numbers" + where);
  }
  ProbabilityRecord rec{j["id"].get<DocId>(), j["model"].get<std::string>(), {}};
  double sum = 0.0;
  for (std::size_t c = 0; c < kClassCount; ++c) {
    const auto& v = j["probs"][c];
    if (!v.is_number()) throw data_error("non-numeric probability" + where);
    const double p = v.get<double>();
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw data_error("probability " + format_number(p) + " outside [0,1]" + where);
    }
    rec.probs[c] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw data_error("probabilities sum to " + format_number(sum) + where);
  }
  for (auto& p : rec.probs.p) p /= sum;
  return rec;
}

}  // namespace detail

/// Parses a probability stream. Sums within 1e-3 of one are renormalized;
/// anything else, duplicate ids, or mixed model ids is rejected with the
/// offending line number.
inline PredictionTable parse_probability_lines(std::istream& in, const std::string& source = "<stream>") {
  PredictionTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      auto rec = detail::parse_record(line, line_no);
      if (table.model.empty()) {
        table.model = rec.model;
      } else if (rec.model != table.model) {
        throw data_error("mixed model ids (\"" + table.model + "\" and \"" + rec.model + "\") at line " +
                         std::to_string(line_no));
      }
      if (!table.by_id.emplace(rec.id, rec.probs).second) {
        throw data_error("duplicate id " + std::to_string(rec.id) + " at line " + std::to_string(line_no));
      }
    } catch (const Error& e) {
      throw data_error(source + ": " + e.what());
    }
  }
  if (table.by_id.empty()) throw data_error(source + ": no probability records");
  return table;
}

inline PredictionTable load_probability_file(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return parse_probability_lines(in, path.string());
}

inline nlohmann::json to_json(const ProbabilityRecord& r) {
  return {{"id", r.id}, {"model", r.model}, {"probs", r.probs.p}};
}

/// Writes records in ascending id order.
inline void write_probability_lines(std::ostream& out, const PredictionTable& table) {
  for (const auto& [id, d] : table.by_id) out << to_json(ProbabilityRecord{id, table.model, d}).dump() << '\n';
}

inline void write_probability_file(const std::filesystem::path& path, const PredictionTable& table) {
  std::ostringstream out;
  write_probability_lines(out, table);
  write_file(path, out.str());
}

/// Row i holds the distributions for ids[i], one column per table in the
/// given order.
inline ProbabilityMatrix align(const std::vector<PredictionTable>& tables, const std::vector<DocId>& ids) {
  for (const auto& t : tables) {
    std::vector<DocId> missing;
    std::size_t missing_count = 0;
    for (auto id : ids) {
      if (!t.by_id.contains(id)) {
        if (missing.size() < 10) missing.push_back(id);
        ++missing_count;
      }
    }
    if (missing_count > 0) {
      std::string msg = "model " + t.model + " is missing " + std::to_string(missing_count) + " id(s):";
      for (auto id : missing) msg += " " + std::to_string(id);
      if (missing_count > missing.size()) msg += " ...";
      throw data_error(msg);
    }
  }
  ProbabilityMatrix m;
  m.reserve(ids.size());
  for (auto id : ids) {
    std::vector<ProbabilityDistribution> row;
    row.reserve(tables.size());
    for (const auto& t : tables) row.push_back(t.by_id.at(id));
    m.push_back(std::move(row));
  }
  return m;
}

}  // namespace senti::external
