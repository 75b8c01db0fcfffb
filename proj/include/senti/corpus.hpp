#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/hashing.hpp"
#include "senti/random.hpp"
#include "senti/types.hpp"

namespace senti::corpus {

/// One review. `id` is the zero-based data-row index in the source file, so
/// external probability files can join on it.
struct LabeledDocument {
  DocId id;
  std::string text;
  Label label;

  friend bool operator==(const LabeledDocument&, const LabeledDocument&) = default;
};

struct DatasetSummary {
  std::size_t total = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t unique_texts = 0;
  std::size_t missing = 0;
  std::size_t mismatched = 0;
  std::optional<std::string> most_common_text;

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

struct SplitSpec {
  double train_fraction = 0.5;
  std::uint64_t seed = 42;
  bool stratified = true;
};

struct Split {
  std::vector<LabeledDocument> train;
  std::vector<LabeledDocument> test;
};

struct LoadedCorpus {
  std::vector<LabeledDocument> documents;
  DatasetSummary summary;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// RFC 4180 reader: quoted fields may hold commas, newlines and doubled quotes.
class CsvReader {
 public:
  explicit CsvReader(std::string_view data) : data_(data) {
    if (data_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
  }

  bool next(std::vector<std::string>& row) {
    row.clear();
    if (pos_ >= data_.size()) return false;
    std::string field;
    bool quoted = false;
    while (pos_ < data_.size()) {
      const char c = data_[pos_++];
      if (quoted) {
        if (c == '"') {
          if (pos_ < data_.size() && data_[pos_] == '"') {
            field += '"';
            ++pos_;
          } else {
            quoted = false;
          }
        } else {
          field += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        row.push_back(std::move(field));
        field.clear();
      } else if (c == '\n' || c == '\r') {
        if (c == '\r' && pos_ < data_.size() && data_[pos_] == '\n') ++pos_;
        break;
      } else {
        field += c;
      }
    }
    if (quoted) throw data_error("unterminated quoted CSV field");
    row.push_back(std::move(field));
    return true;
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::optional<Label> parse_sentiment(std::string_view token) {
  const auto t = lower(trim(token));
  if (t == "positive") return Label::positive;
  if (t == "negative") return Label::negative;
  return std::nullopt;
}

}  // namespace detail

/// Counts over an already-validated document list.
inline DatasetSummary summarize(const std::vector<LabeledDocument>& docs) {
  DatasetSummary s;
  s.total = docs.size();
  std::unordered_map<std::string_view, std::pair<std::size_t, std::size_t>> seen;  // count, first index
  seen.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    (docs[i].label == Label::positive ? s.positive : s.negative) += 1;
    auto [it, inserted] = seen.try_emplace(docs[i].text, 0, i);
    ++it->second.first;
  }
  s.unique_texts = seen.size();
  std::size_t best_count = 0, best_index = 0;
  for (const auto& [text, info] : seen) {
    const auto [count, first] = info;
    if (count > best_count || (count == best_count && first < best_index)) {
      best_count = count;
      best_index = first;
    }
  }
  if (!docs.empty()) s.most_common_text = docs[best_index].text;
  return s;
}

/// Parses CSV text with a header naming `review` and `sentiment` columns.
inline LoadedCorpus parse_csv(std::string_view data, const std::string& source = "<memory>") {
  detail::CsvReader reader(data);
  std::vector<std::string> row;
  if (!reader.next(row) || (row.size() == 1 && detail::trim(row[0]).empty())) {
    throw data_error("empty file: " + source);
  }
  std::optional<std::size_t> review_col, sentiment_col;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const auto name = detail::lower(detail::trim(row[i]));
    if (name == "review") review_col = i;
    if (name == "sentiment") sentiment_col = i;
  }
  if (!review_col || !sentiment_col) {
    throw data_error("CSV header must name 'review' and 'sentiment' columns: " + source);
  }

  LoadedCorpus out;
  std::size_t missing = 0, mismatched = 0;
  DocId row_index = 0;
  while (reader.next(row)) {
    // Blank lines are not data rows and do not consume an id.
    if (row.size() == 1 && detail::trim(row[0]).empty()) continue;
    const DocId id = row_index++;
    const auto max_col = std::max(*review_col, *sentiment_col);
    if (row.size() <= max_col) {
      ++missing;
      continue;
    }
    const auto& text = row[*review_col];
    const auto& sentiment = row[*sentiment_col];
    if (detail::trim(text).empty() || detail::trim(sentiment).empty()) {
      ++missing;
      continue;
    }
    const auto label = detail::parse_sentiment(sentiment);
    if (!label) {
      ++mismatched;
      continue;
    }
    out.documents.push_back({id, text, *label});
  }
  if (out.documents.empty()) throw data_error("empty dataset: " + source);
  out.summary = summarize(out.documents);
  out.summary.missing = missing;
  out.summary.mismatched = mismatched;
  return out;
}

inline LoadedCorpus load_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw data_error("corpus file not found: " + path.string());
  return parse_csv(read_file(path), path.string());
}

/// Deterministic partition. With stratification, per-class train counts are
/// allocated by largest remainder so the class ratio is preserved to within
/// one document per class. Both halves come back sorted by id.
inline Split split(const std::vector<LabeledDocument>& docs, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw usage_error("split.train_fraction must lie in (0,1), got " + std::to_string(spec.train_fraction));
  }
  if (docs.size() < 2) throw data_error("split needs at least 2 documents");

  const auto n = docs.size();
  auto total_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  total_train = std::clamp<std::size_t>(total_train, 1, n - 1);

  std::vector<std::vector<std::size_t>> groups(spec.stratified ? kClassCount : 1);
  // Group membership is taken in id order so the result depends only on ids.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return docs[a].id < docs[b].id; });
  for (auto i : order) groups[spec.stratified ? slot(docs[i].label) : 0].push_back(i);
  if (spec.stratified) {
    for (std::size_t c = 0; c < kClassCount; ++c) {
      if (groups[c].empty()) {
        throw data_error(std::string("stratified split needs both classes; no ") +
                         to_string(static_cast<Label>(c)) + " documents");
      }
    }
  }

  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double exact = static_cast<double>(total_train) * static_cast<double>(groups[g].size()) / static_cast<double>(n);
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_train && k < remainders.size(); ++k) {
    const auto g = remainders[k].second;
    if (quota[g] < groups[g].size()) {
      ++quota[g];
      ++assigned;
    }
  }

  Rng rng(spec.seed);
  Split out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    shuffle(std::span<std::size_t>(groups[g]), rng);
    for (std::size_t k = 0; k < groups[g].size(); ++k) {
      (k < quota[g] ? out.train : out.test).push_back(docs[groups[g][k]]);
    }
  }
  auto by_id = [](const LabeledDocument& a, const LabeledDocument& b) { return a.id < b.id; };
  std::sort(out.train.begin(), out.train.end(), by_id);
  std::sort(out.test.begin(), out.test.end(), by_id);
  return out;
}

inline nlohmann::json to_json(const DatasetSummary& s) {
  nlohmann::json j;
  j["total"] = s.total;
  j["positive"] = s.positive;
  j["negative"] = s.negative;
  j["unique_texts"] = s.unique_texts;
  j["missing"] = s.missing;
  j["mismatched"] = s.mismatched;
  j["most_common_text"] = s.most_common_text ? nlohmann::json(*s.most_common_text) : nlohmann::json(nullptr);
  return j;
}

}  // namespace senti::corpus
