#pragma once

// Cited-response model: sentence statements with "[n]" citation markers,
// lossless rendering, and citation renumbering between document numberings.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "parag/common.hpp"

namespace parag {

/// One citation marker occurrence "[n]" in a string.
struct Marker {
  std::size_t pos;  // offset of '['
  std::size_t len;  // including brackets
  int index;
};

/// All markers in text. Only "[<positive integer>]" counts; "[0]", "[1,2]",
/// "[abc]" stay plain text.
inline std::vector<Marker> find_markers(std::string_view text) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '[') continue;
    std::size_t j = i + 1;
    if (j >= text.size() || text[j] < '1' || text[j] > '9') continue;
    long value = 0;
    while (j < text.size() && text[j] >= '0' && text[j] <= '9' && j - i <= 6) {
      value = value * 10 + (text[j] - '0');
      ++j;
    }
    if (j < text.size() && text[j] == ']') {
      out.push_back({i, j + 1 - i, static_cast<int>(value)});
      i = j;
    }
  }
  return out;
}

/// "[1][3]" for {1, 3}.
inline std::string marker_run(std::span<const int> citations) {
  std::string out;
  for (int c : citations) out += "[" + std::to_string(c) + "]";
  return out;
}

/// Ascending, duplicate-free citation indices of all markers in text.
inline std::vector<int> citation_set(std::string_view text) {
  std::vector<int> out;
  for (const auto& m : find_markers(text)) out.push_back(m.index);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::string strip_markers(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& m : find_markers(text)) {
    out.append(text.substr(pos, m.pos - pos));
    pos = m.pos + m.len;
  }
  out.append(text.substr(pos));
  return out;
}

struct Statement {
  std::string claim;           // sentence without markers, whitespace normalized
  std::vector<int> citations;  // ascending, unique, each >= 1
  std::size_t begin = 0;       // byte span of the sentence in the raw text
  std::size_t end = 0;
};

struct ParsedResponse {
  std::string raw;
  std::vector<Statement> statements;

  std::string_view source(const Statement& s) const {
    return std::string_view(raw).substr(s.begin, s.end - s.begin);
  }
};

namespace detail {

inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

constexpr std::array<std::string_view, 24> kAbbreviations = {
    "dr",  "mr",   "mrs",  "ms",  "prof", "st",  "jr", "sr",
    "vs",  "etc",  "e.g",  "i.e", "u.s",  "u.k", "inc", "ltd",
    "co",  "corp", "no",   "mt",  "ft",   "gen", "col", "approx"};

// The token ending right before `dot` suppresses a sentence break.
inline bool is_abbreviation(std::string_view text, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && !is_space(text[b - 1]) && text[b - 1] != '(' &&
         text[b - 1] != '"')
    --b;
  std::string_view word = text.substr(b, dot - b);
  if (word.empty()) return false;
  if (word.size() == 1 && is_upper(word[0])) return true;  // initials
  std::string lower = to_lower_ascii(word);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) !=
         kAbbreviations.end();
}

// Closing quote/bracket bytes that may follow terminal punctuation.
inline std::size_t closer_len(std::string_view text, std::size_t i) {
  char c = text[i];
  if (c == '"' || c == '\'' || c == ')') return 1;
  // U+201D / U+2019 in UTF-8
  if (i + 2 < text.size() && static_cast<unsigned char>(c) == 0xE2 &&
      static_cast<unsigned char>(text[i + 1]) == 0x80 &&
      (static_cast<unsigned char>(text[i + 2]) == 0x9D ||
       static_cast<unsigned char>(text[i + 2]) == 0x99))
    return 3;
  return 0;
}

inline std::string normalize_claim(std::string_view sentence) {
  std::string s = collapse_ws(strip_markers(sentence));
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ' ' && i + 1 < s.size() &&
        (s[i + 1] == '.' || s[i + 1] == ',' || s[i + 1] == ';' ||
         s[i + 1] == ':' || s[i + 1] == '!' || s[i + 1] == '?'))
      continue;
    out.push_back(s[i]);
  }
  return out;
}

// Byte offsets where sentences end (exclusive, before trailing whitespace).
inline std::vector<std::size_t> sentence_ends(std::string_view text) {
  std::vector<std::size_t> ends;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t first = i;
    while (i < text.size() && is_terminal(text[i])) ++i;
    bool single_dot = (i - first == 1 && text[first] == '.');
    while (i < text.size()) {
      std::size_t n = closer_len(text, i);
      if (n == 0) break;
      i += n;
    }
    // a marker run may trail the punctuation: "claim.[1][2] Next"
    while (i < text.size() && text[i] == '[') {
      auto ms = find_markers(text.substr(i, 16));
      if (ms.empty() || ms.front().pos != 0) break;
      i += ms.front().len;
    }
    if (i < text.size() && !is_space(text[i])) continue;
    if (single_dot && is_abbreviation(text, first)) continue;
    std::size_t next = i;
    while (next < text.size() && is_space(text[next])) ++next;
    if (next < text.size() && is_lower(text[next])) continue;
    ends.push_back(i);
  }
  return ends;
}

}  // namespace detail

/// Splits a response into statements. Every byte of `text` belongs to exactly
/// one statement span (trailing whitespace goes with the preceding sentence);
/// fragments without claim text, such as a trailing marker run, are merged
/// into a neighbour.
inline ParsedResponse parse_response(std::string_view text) {
  ParsedResponse out;
  out.raw = std::string(text);
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t start = 0;
  for (std::size_t e : detail::sentence_ends(text)) {
    std::size_t stop = e;
    while (stop < text.size() && detail::is_space(text[stop])) ++stop;
    segments.emplace_back(start, stop);
    start = stop;
  }
  if (start < text.size()) segments.emplace_back(start, text.size());

  constexpr std::size_t kNone = std::string_view::npos;
  std::size_t pending_begin = kNone;
  for (auto [b, e] : segments) {
    std::string_view seg = text.substr(b, e - b);
    std::string claim = detail::normalize_claim(seg);
    if (claim.empty()) {
      if (!out.statements.empty()) {
        out.statements.back().end = e;
      } else if (pending_begin == kNone) {
        pending_begin = b;
      }
      continue;
    }
    std::size_t begin = pending_begin == kNone ? b : pending_begin;
    pending_begin = kNone;
    out.statements.push_back({std::move(claim), {}, begin, e});
  }
  for (auto& s : out.statements) s.citations = citation_set(out.source(s));
  return out;
}

/// Offset within a sentence where its citation run begins, or where one would
/// be inserted (before trailing punctuation) if it has none.
inline std::size_t citation_cut(std::string_view sentence) {
  auto markers = find_markers(sentence);
  if (!markers.empty()) return markers.front().pos;
  std::size_t cut = sentence.size();
  while (cut > 0 && detail::is_space(sentence[cut - 1])) --cut;
  while (cut > 0 && (detail::is_terminal(sentence[cut - 1]) ||
                     sentence[cut - 1] == '"' || sentence[cut - 1] == '\''))
    --cut;
  return cut == 0 ? sentence.size() : cut;
}

/// Replaces all markers of a sentence with one run for `citations`, placed at
/// citation_cut().
inline std::string replace_markers(std::string_view sentence,
                                   std::span<const int> citations) {
  std::size_t cut = citation_cut(sentence);
  std::string out = strip_markers(sentence.substr(0, cut));
  out += marker_run(citations);
  out += strip_markers(sentence.substr(cut));
  return out;
}

/// Text of one statement with its current citation set applied.
inline std::string render_statement(const ParsedResponse& r,
                                    const Statement& s) {
  std::string_view src = r.source(s);
  if (citation_set(src) == s.citations) return std::string(src);
  return replace_markers(src, s.citations);
}

/// Inverse of parse_response; statements whose citation sets were edited get
/// their markers rewritten, all other bytes are kept.
inline std::string render(const ParsedResponse& r) {
  if (r.statements.empty()) return r.raw;
  std::string out;
  out.reserve(r.raw.size());
  for (const auto& s : r.statements) out += render_statement(r, s);
  return out;
}

// ---------------------------------------------------------------------------
// Renumbering

enum class MapDirection { Forward, Inverse };

/// Order-preserving bijection from a kept subset of old document numbers onto
/// 1..k. Forward maps old -> new, Inverse maps new -> old.
class IndexMapping {
 public:
  IndexMapping() = default;

  std::span<const int> kept() const { return kept_; }
  std::size_t size() const { return kept_.size(); }

  std::optional<int> forward(int old_index) const {
    auto it = std::lower_bound(kept_.begin(), kept_.end(), old_index);
    if (it == kept_.end() || *it != old_index) return std::nullopt;
    return static_cast<int>(it - kept_.begin()) + 1;
  }

  std::optional<int> inverse(int new_index) const {
    if (new_index < 1 || new_index > static_cast<int>(kept_.size()))
      return std::nullopt;
    return kept_[static_cast<std::size_t>(new_index - 1)];
  }

  std::optional<int> apply(int index, MapDirection dir) const {
    return dir == MapDirection::Forward ? forward(index) : inverse(index);
  }

  friend IndexMapping build_mapping(std::span<const int> kept_old_indices);

 private:
  std::vector<int> kept_;
};

/// The i-th kept old index maps to new index i.
inline IndexMapping build_mapping(std::span<const int> kept_old_indices) {
  IndexMapping m;
  for (std::size_t i = 0; i < kept_old_indices.size(); ++i) {
    int v = kept_old_indices[i];
    if (v < 1) throw std::invalid_argument("mapping index must be >= 1");
    if (i > 0 && v <= kept_old_indices[i - 1])
      throw std::invalid_argument("kept indices must be strictly ascending");
  }
  m.kept_.assign(kept_old_indices.begin(), kept_old_indices.end());
  return m;
}

inline IndexMapping build_mapping(std::initializer_list<int> kept) {
  return build_mapping(std::span<const int>(kept.begin(), kept.size()));
}

/// Rewrites every citation marker through the mapping; all other bytes are
/// unchanged. Throws CitationIndexError for a marker outside the domain.
inline std::string remap_citations(std::string_view text,
                                   const IndexMapping& mapping,
                                   MapDirection direction) {
  std::string out;
  out.reserve(text.size() + 8);
  std::size_t pos = 0;
  for (const auto& m : find_markers(text)) {
    auto mapped = mapping.apply(m.index, direction);
    if (!mapped)
      throw CitationIndexError(
          "citation [" + std::to_string(m.index) + "] outside mapping domain",
          m.index);
    out.append(text.substr(pos, m.pos - pos));
    out += "[" + std::to_string(*mapped) + "]";
    pos = m.pos + m.len;
  }
  out.append(text.substr(pos));
  return out;
}

}  // namespace parag
