#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "senti/error.hpp"
#include "senti/hashing.hpp"
#include "senti/textprep.hpp"
#include "senti/types.hpp"

namespace senti::features {

using textprep::TokenSequence;

struct VectorizerConfig {
  std::size_t max_features = 10000;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 3;
  bool sublinear_tf = false;

  friend bool operator==(const VectorizerConfig&, const VectorizerConfig&) = default;
};

inline void validate(const VectorizerConfig& cfg) {
  if (cfg.ngram_min < 1 || cfg.ngram_min > cfg.ngram_max) {
    throw usage_error("vectorizer n-gram range must satisfy 1 <= ngram_min <= ngram_max");
  }
  if (cfg.max_features < 1) throw usage_error("vectorizer.max_features must be >= 1");
}

/// Fitted n-gram vocabulary with smoothed idf weights. Indices follow the
/// lexicographic order of the n-gram strings. Immutable once built.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(VectorizerConfig cfg, std::vector<std::string> terms, std::vector<double> idf, std::size_t doc_count)
      : cfg_(cfg), terms_(std::move(terms)), idf_(std::move(idf)), doc_count_(doc_count) {
    if (terms_.size() != idf_.size()) throw data_error("vocabulary terms and idf arrays differ in length");
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (i > 0 && !(terms_[i - 1] < terms_[i])) throw data_error("vocabulary terms must be sorted and unique");
      index_.emplace(terms_[i], static_cast<FeatureIndex>(i));
    }
  }

  const VectorizerConfig& config() const noexcept { return cfg_; }
  std::size_t size() const noexcept { return terms_.size(); }
  std::size_t doc_count() const noexcept { return doc_count_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  const std::vector<double>& idf() const noexcept { return idf_; }
  const std::string& term(FeatureIndex i) const { return terms_.at(i); }

  std::optional<FeatureIndex> find(const std::string& ngram) const {
    const auto it = index_.find(ngram);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "senti.vocabulary";
    j["version"] = 1;
    j["config"] = {{"max_features", cfg_.max_features},
                   {"ngram_min", cfg_.ngram_min},
                   {"ngram_max", cfg_.ngram_max},
                   {"sublinear_tf", cfg_.sublinear_tf}};
    j["doc_count"] = doc_count_;
    j["terms"] = terms_;
    j["idf"] = idf_;
    return j;
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "senti.vocabulary" || j.value("version", 0) != 1) {
      throw data_error("not a senti.vocabulary v1 artifact");
    }
    VectorizerConfig cfg;
    const auto& c = j.at("config");
    cfg.max_features = c.at("max_features").get<std::size_t>();
    cfg.ngram_min = c.at("ngram_min").get<std::size_t>();
    cfg.ngram_max = c.at("ngram_max").get<std::size_t>();
    cfg.sublinear_tf = c.at("sublinear_tf").get<bool>();
    return Vocabulary(cfg, j.at("terms").get<std::vector<std::string>>(), j.at("idf").get<std::vector<double>>(),
                      j.at("doc_count").get<std::size_t>());
  }

  /// SHA-256 of the canonical JSON form; models record it to refuse
  /// predictions against a different vocabulary.
  std::string hash() const { return sha256_hex(to_json().dump()); }

 private:
  VectorizerConfig cfg_;
  std::vector<std::string> terms_;
  std::vector<double> idf_;
  std::size_t doc_count_ = 0;
  std::unordered_map<std::string, FeatureIndex> index_;
};

inline double smoothed_idf(std::size_t doc_count, std::size_t df) {
  return std::log((1.0 + static_cast<double>(doc_count)) / (1.0 + static_cast<double>(df))) + 1.0;
}

namespace detail {

inline void append_ngram(std::string& out, const TokenSequence& tokens, std::size_t start, std::size_t len) {
  out.clear();
  for (std::size_t k = 0; k < len; ++k) {
    if (k) out += ' ';
    out += tokens[start + k];
  }
}

struct Candidate {
  std::string term;
  std::size_t df;
};

/// Document frequency of every n-gram, keyed by an arbitrary Key built from
/// a window. Each document contributes its sorted, de-duplicated keys; one
/// global sort then turns runs into counts.
template <typename Key, typename MakeKey, typename KeyToString>
std::vector<Candidate> count_document_frequencies(const std::vector<std::vector<std::uint32_t>>& docs,
                                                  const VectorizerConfig& cfg, std::size_t max_features,
                                                  MakeKey make_key, KeyToString key_to_string) {
  std::vector<Key> all;
  std::vector<Key> local;
  for (const auto& doc : docs) {
    local.clear();
    for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
      if (doc.size() < n) break;
      for (std::size_t s = 0; s + n <= doc.size(); ++s) local.push_back(make_key(doc, s, n));
    }
    std::sort(local.begin(), local.end());
    local.erase(std::unique(local.begin(), local.end()), local.end());
    all.insert(all.end(), std::make_move_iterator(local.begin()), std::make_move_iterator(local.end()));
  }
  std::sort(all.begin(), all.end());

  std::vector<std::pair<Key, std::size_t>> counts;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    counts.emplace_back(std::move(all[i]), j - i);
    i = j;
  }
  all.clear();
  all.shrink_to_fit();

  std::vector<Candidate> kept;
  if (counts.size() <= max_features) {
    for (auto& [key, df] : counts) kept.push_back({key_to_string(key), df});
    return kept;
  }
  // Highest df wins; among candidates tied at the cutoff, lexicographically
  // smaller strings win.
  std::vector<std::size_t> dfs;
  dfs.reserve(counts.size());
  for (const auto& kv : counts) dfs.push_back(kv.second);
  std::nth_element(dfs.begin(), dfs.begin() + static_cast<std::ptrdiff_t>(max_features - 1), dfs.end(),
                   std::greater<>());
  const std::size_t cutoff = dfs[max_features - 1];
  std::vector<Candidate> tied;
  for (auto& [key, df] : counts) {
    if (df > cutoff) {
      kept.push_back({key_to_string(key), df});
    } else if (df == cutoff) {
      tied.push_back({key_to_string(key), df});
    }
  }
  std::sort(tied.begin(), tied.end(), [](const Candidate& a, const Candidate& b) { return a.term < b.term; });
  for (std::size_t i = 0; kept.size() < max_features && i < tied.size(); ++i) kept.push_back(std::move(tied[i]));
  return kept;
}

}  // namespace detail

/// Learns the vocabulary and idf weights from training documents only.
inline Vocabulary fit(const std::vector<TokenSequence>& train_tokens, const VectorizerConfig& cfg) {
  validate(cfg);
  const bool any = std::any_of(train_tokens.begin(), train_tokens.end(), [](const auto& t) { return !t.empty(); });
  if (!any) throw data_error("cannot fit vocabulary on an empty corpus");

  // Intern tokens so n-gram keys can be packed integers.
  std::unordered_map<std::string, std::uint32_t> ids;
  std::vector<const std::string*> names;
  std::vector<std::vector<std::uint32_t>> docs;
  docs.reserve(train_tokens.size());
  for (const auto& seq : train_tokens) {
    std::vector<std::uint32_t> doc;
    doc.reserve(seq.size());
    for (const auto& t : seq) {
      auto [it, inserted] = ids.try_emplace(t, static_cast<std::uint32_t>(names.size()));
      if (inserted) names.push_back(&it->first);
      doc.push_back(it->second);
    }
    docs.push_back(std::move(doc));
  }

  auto to_text = [&](const std::vector<std::uint32_t>& ngram_ids) {
    std::string s;
    for (std::size_t k = 0; k < ngram_ids.size(); ++k) {
      if (k) s += ' ';
      s += *names[ngram_ids[k]];
    }
    return s;
  };

  std::vector<detail::Candidate> kept;
  const auto bits = static_cast<std::size_t>(std::bit_width(names.size() + 1));
  if (bits * cfg.ngram_max <= 64) {
    const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
    auto make_key = [bits](const std::vector<std::uint32_t>& doc, std::size_t s, std::size_t n) {
      std::uint64_t key = 0;
      for (std::size_t k = 0; k < n; ++k) key = (key << bits) | (std::uint64_t{doc[s + k]} + 1);
      return key;
    };
    auto key_to_string = [&](std::uint64_t key) {
      std::vector<std::uint32_t> rev;
      while (key != 0) {
        rev.push_back(static_cast<std::uint32_t>((key & mask) - 1));
        key >>= bits;
      }
      std::reverse(rev.begin(), rev.end());
      return to_text(rev);
    };
    kept = detail::count_document_frequencies<std::uint64_t>(docs, cfg, cfg.max_features, make_key, key_to_string);
  } else {
    auto make_key = [](const std::vector<std::uint32_t>& doc, std::size_t s, std::size_t n) {
      return std::vector<std::uint32_t>(doc.begin() + static_cast<std::ptrdiff_t>(s),
                                        doc.begin() + static_cast<std::ptrdiff_t>(s + n));
    };
    kept = detail::count_document_frequencies<std::vector<std::uint32_t>>(docs, cfg, cfg.max_features, make_key,
                                                                          to_text);
  }

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
  std::vector<std::string> terms;
  std::vector<double> idf;
  terms.reserve(kept.size());
  idf.reserve(kept.size());
  for (auto& c : kept) {
    idf.push_back(smoothed_idf(train_tokens.size(), c.df));
    terms.push_back(std::move(c.term));
  }
  return Vocabulary(cfg, std::move(terms), std::move(idf), train_tokens.size());
}

/// Term counts (or 1 + ln count when sublinear) times idf, L2-normalized.
/// Out-of-vocabulary n-grams are ignored.
inline SparseVector transform(const TokenSequence& tokens, const Vocabulary& vocab) {
  const auto& cfg = vocab.config();
  std::vector<FeatureIndex> hits;
  std::string buf;
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t s = 0; s + n <= tokens.size(); ++s) {
      detail::append_ngram(buf, tokens, s, n);
      if (auto idx = vocab.find(buf)) hits.push_back(*idx);
    }
  }
  std::sort(hits.begin(), hits.end());
  SparseVector v;
  double sq = 0.0;
  for (std::size_t i = 0; i < hits.size();) {
    std::size_t j = i;
    while (j < hits.size() && hits[j] == hits[i]) ++j;
    const auto count = static_cast<double>(j - i);
    const double tf = cfg.sublinear_tf ? 1.0 + std::log(count) : count;
    const double w = tf * vocab.idf()[hits[i]];
    v.entries.push_back({hits[i], w});
    sq += w * w;
    i = j;
  }
  if (sq > 0.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (auto& e : v.entries) e.weight *= inv;
  }
  return v;
}

/// Sparse triplet export read by out-of-process trainers. First line:
/// `senti-sparse 1 <rows> <cols> <nnz>`; then one `<doc id> <col> <value>`
/// line per stored entry, values printed with 17 significant digits.
inline void write_sparse_triplets(std::ostream& out, const std::vector<std::pair<DocId, SparseVector>>& rows,
                                  std::size_t cols) {
  std::size_t nnz = 0;
  for (const auto& r : rows) nnz += r.second.size();
  out << "senti-sparse 1 " << rows.size() << ' ' << cols << ' ' << nnz << '\n';
  out << std::setprecision(17);
  for (const auto& [id, v] : rows) {
    for (const auto& e : v) out << id << ' ' << e.index << ' ' << e.weight << '\n';
  }
}

}  // namespace senti::features
