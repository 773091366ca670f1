#pragma once

// Randomized instances shared by the property tests and the acceptance run.

#include <bit>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "parag/metrics.hpp"
#include "parag/rewrite.hpp"
#include "support.hpp"

namespace testsupport {

// Statements "Claim<s>" over n numbered documents, each with its own random
// truth table over document subsets (monotone half of the time).
struct TableInstance {
  int n = 0;
  std::vector<std::vector<bool>> tables;  // [statement][mask]
  std::vector<std::vector<int>> cites;

  bool phi(std::size_t s, std::uint32_t mask) const { return mask != 0 && tables[s][mask]; }

  std::string text() const {
    std::string t;
    for (std::size_t s = 0; s < cites.size(); ++s) {
      t += "Claim" + std::to_string(s);
      for (int c : cites[s]) t += "[" + std::to_string(c) + "]";
      t += ". ";
    }
    return t;
  }

  parag::FunctionOracle oracle() const {
    return subset_oracle([this](std::uint32_t m, const std::string& claim) {
      return phi(static_cast<std::size_t>(std::stoi(claim.substr(5))), m);
    });
  }
};

inline TableInstance random_instance(std::mt19937_64& rng, int max_docs, int max_statements) {
  TableInstance in;
  in.n = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_docs));
  int statements = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_statements));
  for (int s = 0; s < statements; ++s) {
    std::vector<bool> t(1u << in.n);
    double p = static_cast<double>(rng() % 100) / 200.0;
    bool monotone = rng() % 2;
    for (std::uint32_t m = 1; m < t.size(); ++m)
      t[m] = static_cast<double>(rng() % 1000) / 1000.0 < p;
    if (monotone)
      for (std::uint32_t m = 1; m < t.size(); ++m)
        for (std::uint32_t sub = (m - 1) & m; sub; sub = (sub - 1) & m)
          if (t[sub]) t[m] = true;
    in.tables.push_back(t);
    std::vector<int> c;
    for (int i = 1; i <= in.n; ++i)
      if (rng() % 3 == 0) c.push_back(i);
    in.cites.push_back(c);
  }
  return in;
}

inline std::uint32_t mask_of(const std::vector<int>& cites) {
  std::uint32_t m = 0;
  for (int c : cites) m |= 1u << (c - 1);
  return m;
}

// Smallest size of a supporting subset, 0 when none exists.
inline int brute_min_size(const TableInstance& in, std::size_t s) {
  int best = 0;
  for (std::uint32_t m = 1; m < (1u << in.n); ++m)
    if (in.phi(s, m) && (best == 0 || std::popcount(m) < best)) best = std::popcount(m);
  return best;
}

// Number of rewrite statements violating support, relevance, minimality or
// infeasibility against exhaustive search.
inline int rewrite_mismatches(const TableInstance& in) {
  auto docs = numbered_docs(in.n);
  auto oracle = in.oracle();
  auto r = parag::rewrite_response(in.text(), docs, oracle);
  int bad = 0;
  for (std::size_t s = 0; s < in.cites.size(); ++s) {
    int best = brute_min_size(in, s);
    if (std::holds_alternative<parag::Infeasible>(r.report.outcomes[s])) {
      bad += best != 0;
      continue;
    }
    const auto& cites = r.response.statements[s].citations;
    std::uint32_t mask = mask_of(cites);
    if (!in.phi(s, mask)) {
      ++bad;
      continue;
    }
    for (int c : cites) {
      std::uint32_t bit = 1u << (c - 1);
      if (!in.phi(s, bit) && in.phi(s, mask & ~bit)) ++bad;
    }
    auto found = parag::construct_citation("Claim" + std::to_string(s), docs, oracle);
    if (!found || static_cast<int>(found->size()) != best) ++bad;
  }
  return bad;
}

struct LiteralScores {
  double recall = 0.0;
  double precision = 0.0;
};

// Recall and precision by direct enumeration of the support and relevance
// conditions over the truth tables; unsupported statements contribute no
// relevant citations.
inline LiteralScores literal_scores(const TableInstance& in) {
  std::size_t supported = 0, citations = 0, relevant = 0;
  for (std::size_t s = 0; s < in.cites.size(); ++s) {
    std::uint32_t mask = mask_of(in.cites[s]);
    citations += in.cites[s].size();
    if (!in.phi(s, mask)) continue;
    ++supported;
    for (int c : in.cites[s]) {
      std::uint32_t bit = 1u << (c - 1);
      if (in.phi(s, bit) || !in.phi(s, mask & ~bit)) ++relevant;
    }
  }
  LiteralScores out;
  out.recall = static_cast<double>(supported) / static_cast<double>(in.cites.size());
  out.precision = citations ? static_cast<double>(relevant) / static_cast<double>(citations) : 0.0;
  return out;
}

inline int metric_mismatches(const TableInstance& in) {
  auto docs = numbered_docs(in.n);
  auto oracle = in.oracle();
  auto got = parag::score_citations(parag::parse_response(in.text()), docs, oracle);
  auto want = literal_scores(in);
  return (got.recall != want.recall) + (got.precision != want.precision);
}

// Upper bound on oracle calls for rewriting `in`.
inline std::size_t call_budget(const TableInstance& in) {
  std::size_t b = 0;
  for (const auto& c : in.cites) b += 1 + ((std::size_t{1} << in.n) - 1) + c.size();
  return b;
}

// Sentences with words, punctuation, whitespace runs and citation markers in
// assorted positions.
inline std::string random_marked_text(std::mt19937_64& rng) {
  static const std::vector<std::string> words{
      "alpha", "Beta", "gamma", "3.5", "e.g.", "Dr.", "\"quote\"", "(aside)", "x", "U.S.", "[abc]", "[0]"};
  static const std::vector<std::string> ends{".", "!", "?", "", ".\"", "..."};
  static const std::vector<std::string> gaps{" ", "  ", "\n", " \t"};
  std::string t;
  if (rng() % 4 == 0) t += gaps[rng() % gaps.size()];
  int sentences = static_cast<int>(rng() % 5);
  for (int s = 0; s < sentences; ++s) {
    int n = 1 + static_cast<int>(rng() % 6);
    for (int w = 0; w < n; ++w) {
      if (w) t += ' ';
      t += words[rng() % words.size()];
      if (rng() % 6 == 0) t += "[" + std::to_string(1 + rng() % 12) + "]";
    }
    bool before = rng() % 2;
    std::string run;
    for (int m = static_cast<int>(rng() % 4); m > 0; --m)
      run += "[" + std::to_string(1 + rng() % 9) + "]";
    std::string end = ends[rng() % ends.size()];
    t += before ? run + end : end + run;
    t += gaps[rng() % gaps.size()];
  }
  return t;
}

}  // namespace testsupport
