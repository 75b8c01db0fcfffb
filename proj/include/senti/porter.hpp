#pragma once

#include <string>
#include <string_view>
#include <utility>

namespace senti::porter {

namespace detail {

// Martin Porter's reference implementation of the 1980 algorithm, including
// the two rule changes of his published C code ("bli" -> "ble", "logi" -> "log")
// and the rule that words of one or two letters are left alone.
class Stemmer {
 public:
  explicit Stemmer(std::string word) : b_(std::move(word)) {}

  std::string run() {
    if (b_.size() <= 2) return b_;
    k_ = static_cast<int>(b_.size()) - 1;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool cons(int i) const {
    switch (b_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(i - 1);
      default:
        return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int m() const {
    int n = 0;
    int i = 0;
    while (true) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    while (true) {
      while (true) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      while (true) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i) {
      if (!cons(i)) return true;
    }
    return false;
  }

  bool double_consonant(int j) const {
    if (j < 1) return false;
    if (b_[j] != b_[j - 1]) return false;
    return cons(j);
  }

  // consonant-vowel-consonant ending at i, where the last is not w, x or y.
  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[i];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) {
    const int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (std::string_view(b_).substr(static_cast<std::size_t>(k_ - len + 1), s.size()) != s) return false;
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), static_cast<std::size_t>(k_ - j_), s);
    k_ = j_ + static_cast<int>(s.size());
  }

  void replace_if_measure(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  void step1ab() {
    if (b_[k_] == 's') {
      if (ends("sses")) {
        k_ -= 2;
      } else if (ends("ies")) {
        set_to("i");
      } else if (b_[k_ - 1] != 's') {
        --k_;
      }
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      if (ends("at")) {
        set_to("ate");
      } else if (ends("bl")) {
        set_to("ble");
      } else if (ends("iz")) {
        set_to("ize");
      } else if (double_consonant(k_)) {
        --k_;
        const char ch = b_[k_];
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else if (m() == 1 && cvc(k_)) {
        set_to("e");
      }
    }
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[k_] = 'i';
  }

  // Tries each (suffix, replacement) in order; the first matching suffix wins
  // even when the measure condition then blocks the replacement.
  template <std::size_t N>
  void first_rule(const std::pair<std::string_view, std::string_view> (&rules)[N]) {
    for (const auto& [suffix, repl] : rules) {
      if (ends(suffix)) {
        replace_if_measure(repl);
        return;
      }
    }
  }

  void step2() {
    if (k_ < 1) return;
    using R = std::pair<std::string_view, std::string_view>;
    switch (b_[k_ - 1]) {
      case 'a': { static const R r[] = {{"ational", "ate"}, {"tional", "tion"}}; first_rule(r); break; }
      case 'c': { static const R r[] = {{"enci", "ence"}, {"anci", "ance"}}; first_rule(r); break; }
      case 'e': { static const R r[] = {{"izer", "ize"}}; first_rule(r); break; }
      case 'l': {
        static const R r[] = {{"bli", "ble"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"}};
        first_rule(r);
        break;
      }
      case 'o': { static const R r[] = {{"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}}; first_rule(r); break; }
      case 's': {
        static const R r[] = {{"alism", "al"}, {"iveness", "ive"}, {"fulness", "ful"}, {"ousness", "ous"}};
        first_rule(r);
        break;
      }
      case 't': { static const R r[] = {{"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}}; first_rule(r); break; }
      case 'g': { static const R r[] = {{"logi", "log"}}; first_rule(r); break; }
      default: break;
    }
  }

  void step3() {
    using R = std::pair<std::string_view, std::string_view>;
    switch (b_[k_]) {
      case 'e': { static const R r[] = {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}}; first_rule(r); break; }
      case 'i': { static const R r[] = {{"iciti", "ic"}}; first_rule(r); break; }
      case 'l': { static const R r[] = {{"ical", "ic"}, {"ful", ""}}; first_rule(r); break; }
      case 's': { static const R r[] = {{"ness", ""}}; first_rule(r); break; }
      default: break;
    }
  }

  bool step4_match() {
    if (k_ < 1) return false;
    switch (b_[k_ - 1]) {
      case 'a': return ends("al");
      case 'c': return ends("ance") || ends("ence");
      case 'e': return ends("er");
      case 'i': return ends("ic");
      case 'l': return ends("able") || ends("ible");
      case 'n': return ends("ant") || ends("ement") || ends("ment") || ends("ent");
      case 'o':
        if (ends("ion") && j_ >= 0 && (b_[j_] == 's' || b_[j_] == 't')) return true;
        return ends("ou");
      case 's': return ends("ism");
      case 't': return ends("ate") || ends("iti");
      case 'u': return ends("ous");
      case 'v': return ends("ive");
      case 'z': return ends("ize");
      default: return false;
    }
  }

  void step4() {
    if (step4_match() && m() > 1) k_ = j_;
  }

  void step5() {
    j_ = k_;
    if (b_[k_] == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (b_[k_] == 'l' && double_consonant(k_) && m() > 1) --k_;
  }

  std::string b_;
  int k_ = 0;
  int j_ = 0;
};

}  // namespace detail

/// Porter stem of a single lowercase word.
inline std::string stem(std::string word) { return detail::Stemmer(std::move(word)).run(); }

}  // namespace senti::porter
