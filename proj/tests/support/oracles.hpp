#pragma once

// Brute-force reference implementations used only by tests. They take a
// different route from the library code (regex rewriting, explicit window
// enumeration) and are meant for short ASCII inputs.

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace square::oracle {

inline std::vector<std::string> normalized_tokens(const std::string& s) {
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  static const std::regex punct(R"([!-/:-@\[-`{-~])");
  std::string no_punct = std::regex_replace(lower, punct, "");
  static const std::regex articles(R"(\b(a|an|the)\b)");
  std::string no_articles = std::regex_replace(no_punct, articles, " ");
  std::istringstream in(no_articles);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

inline std::string normalize(const std::string& s) {
  std::string out;
  for (const auto& t : normalized_tokens(s)) out += (out.empty() ? "" : " ") + t;
  return out;
}

inline int sub_em(const std::string& prediction, const std::vector<std::string>& aliases) {
  const auto pred = normalized_tokens(prediction);
  for (const auto& alias : aliases) {
    const auto needle = normalized_tokens(alias);
    if (needle.empty() || needle.size() > pred.size()) continue;
    for (std::size_t start = 0; start + needle.size() <= pred.size(); ++start) {
      bool same = true;
      for (std::size_t i = 0; i < needle.size(); ++i) {
        if (pred[start + i] != needle[i]) {
          same = false;
          break;
        }
      }
      if (same) return 1;
    }
  }
  return 0;
}

inline double recall_em(const std::string& prediction,
                        const std::vector<std::vector<std::string>>& aspects) {
  std::set<std::size_t> covered;
  for (std::size_t a = 0; a < aspects.size(); ++a) {
    for (const auto& alias : aspects[a]) {
      if (sub_em(prediction, {alias})) covered.insert(a);
    }
  }
  return static_cast<double>(covered.size()) / static_cast<double>(aspects.size());
}

struct Extraction {
  std::string answer;
  bool captured = false;
};

inline Extraction extract(const std::string& text) {
  static const std::regex pattern(R"([\s\S]*answer([\s\S]*))", std::regex::icase);
  std::smatch m;
  if (std::regex_match(text, m, pattern)) {
    static const std::regex lead(R"(^[:\s]*)");
    static const std::regex trail(R"([\s.]*$)");
    std::string span = std::regex_replace(m[1].str(), lead, "");
    span = std::regex_replace(span, trail, "");
    if (!span.empty()) return {span, true};
  }
  return {text, false};
}

}  // namespace square::oracle
