#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "senti/error.hpp"
#include "senti/porter.hpp"

namespace senti::textprep {

using TokenSequence = std::vector<std::string>;

inline constexpr std::string_view kNegationPrefix = "NEG_";

struct PrepConfig {
  bool stem = true;
  bool mark_negation = true;
  // Tokens ending in "n't" are cues in addition to this list.
  std::vector<std::string> negation_cues{"not", "no", "never", "cannot"};
  std::size_t negation_scope = 3;
};

namespace detail {

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Bytes >= 0x80 belong to UTF-8 sequences and are kept as word characters.
inline bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80 || c == '\''; }

inline bool is_clause_break(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

/// One pass of `<[^<>]*>` removal, each tag replaced by a space.
inline bool strip_tags_once(std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool changed = false;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '<') {
      std::size_t j = i + 1;
      while (j < s.size() && s[j] != '<' && s[j] != '>') ++j;
      if (j < s.size() && s[j] == '>') {
        out += ' ';
        i = j + 1;
        changed = true;
        continue;
      }
    }
    out += s[i++];
  }
  s.swap(out);
  return changed;
}

inline bool has_negation_prefix(std::string_view t) { return t.starts_with(kNegationPrefix); }

inline bool is_negation_cue(std::string_view t, const PrepConfig& cfg) {
  if (t.ends_with("n't")) return true;
  return std::find(cfg.negation_cues.begin(), cfg.negation_cues.end(), t) != cfg.negation_cues.end();
}

}  // namespace detail

/// Lowercase, strip HTML tags, turn control characters into spaces, collapse
/// whitespace runs and trim.
inline std::string normalize(std::string_view text) {
  std::string s(text);
  while (detail::strip_tags_once(s)) {
  }
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (c < 0x20 || c == 0x7f || detail::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

/// Splits on anything that is neither alphanumeric nor an apostrophe.
/// Apostrophes at the edges of a fragment are trimmed, so contractions such as
/// "don't" survive while quote marks and pure punctuation disappear.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !detail::is_word_char(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && detail::is_word_char(static_cast<unsigned char>(text[j]))) ++j;
    std::size_t b = i, e = j;
    while (b < e && text[b] == '\'') ++b;
    while (e > b && text[e - 1] == '\'') --e;
    if (e > b) tokens.emplace_back(text.substr(b, e - b));
    i = j;
  }
  return tokens;
}

/// Porter-stems every token; a negation prefix is kept and only the word after
/// it is stemmed.
inline TokenSequence stem(const TokenSequence& tokens) {
  TokenSequence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (detail::has_negation_prefix(t)) {
      out.push_back(std::string(kNegationPrefix) + porter::stem(t.substr(kNegationPrefix.size())));
    } else {
      out.push_back(porter::stem(t));
    }
  }
  return out;
}

/// Prefixes up to `negation_scope` tokens after each cue with "NEG_". A cue
/// inside an open scope restarts it. The whole sequence is treated as one
/// clause; `preprocess` applies this per punctuation-delimited clause.
inline TokenSequence mark_negation(const TokenSequence& tokens, const PrepConfig& cfg) {
  if (!cfg.mark_negation) return tokens;
  if (cfg.negation_scope < 1) throw usage_error("prep.negation_scope must be >= 1 when negation marking is on");
  TokenSequence out;
  out.reserve(tokens.size());
  std::size_t remaining = 0;
  for (const auto& t : tokens) {
    if (detail::is_negation_cue(t, cfg)) {
      out.push_back(t);
      remaining = cfg.negation_scope;
    } else if (remaining > 0) {
      out.push_back(detail::has_negation_prefix(t) ? t : std::string(kNegationPrefix) + t);
      --remaining;
    } else {
      out.push_back(t);
    }
  }
  return out;
}

/// Sentence split on '.', '!' or '?' (or runs of them) followed by whitespace
/// or the end of text. Fragments with no tokens are dropped.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && detail::is_space(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && detail::is_space(static_cast<unsigned char>(text[e - 1]))) --e;
    const auto piece = text.substr(b, e - b);
    if (!tokenize(piece).empty()) sentences.emplace_back(piece);
  };
  auto is_end = [](char c) { return c == '.' || c == '!' || c == '?'; };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_end(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_end(text[j])) ++j;
      if (j == text.size() || detail::is_space(static_cast<unsigned char>(text[j]))) {
        emit(start, j);
        start = j;
      }
      i = j;
    } else {
      ++i;
    }
  }
  if (start < text.size()) emit(start, text.size());
  return sentences;
}

/// Tokens of `text` grouped into punctuation-delimited clauses, the unit
/// negation scope never crosses. Empty clauses are dropped.
inline std::vector<TokenSequence> clauses(std::string_view text) {
  const auto norm = normalize(text);
  std::vector<TokenSequence> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= norm.size(); ++i) {
    if (i == norm.size() || detail::is_clause_break(norm[i])) {
      auto clause = tokenize(std::string_view(norm).substr(start, i - start));
      if (!clause.empty()) out.push_back(std::move(clause));
      start = i + 1;
    }
  }
  return out;
}

/// Full per-document pipeline: normalize, tokenize, mark negation within
/// clauses, then stem.
inline TokenSequence preprocess(std::string_view text, const PrepConfig& cfg) {
  TokenSequence tokens;
  for (auto& clause : clauses(text)) {
    if (cfg.mark_negation) clause = mark_negation(clause, cfg);
    for (auto& t : clause) tokens.push_back(std::move(t));
  }
  return cfg.stem ? stem(tokens) : tokens;
}

}  // namespace senti::textprep
