#pragma once

// Citation rewrite: verify a statement's citations, search the document power
// set for a supporting set when verification fails, then drop citations that
// are irrelevant to the claim. Claims are never edited.

#include <algorithm>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "parag/citemodel.hpp"
#include "parag/dataio.hpp"
#include "parag/oracle.hpp"

namespace parag {

/// Maximum prompt documents the power-set search accepts.
inline constexpr std::size_t kMaxSearchDocs = 9;

namespace detail {

inline void check_range(std::span<const int> cites, std::size_t n) {
  for (int c : cites)
    if (c < 1 || static_cast<std::size_t>(c) > n)
      throw CitationIndexError("citation [" + std::to_string(c) +
                                   "] outside 1.." + std::to_string(n),
                               c);
}

// Asks the oracle once per distinct (citation set, claim) and counts the
// questions sent. Empty sets are never asked.
class Asker {
 public:
  Asker(EntailmentOracle& oracle, std::span<const Document> docs)
      : oracle_(oracle), docs_(docs) {}

  bool operator()(std::span<const int> cites, const std::string& claim) {
    if (cites.empty()) return false;
    auto key = std::make_pair(claim, std::vector<int>(cites.begin(), cites.end()));
    if (auto it = seen_.find(key); it != seen_.end()) return it->second;
    ++calls_;
    bool v = oracle_.entails({build_premise(docs_, cites), claim});
    seen_.emplace(std::move(key), v);
    return v;
  }

  std::size_t calls() const { return calls_; }

 private:
  EntailmentOracle& oracle_;
  std::span<const Document> docs_;
  std::map<std::pair<std::string, std::vector<int>>, bool> seen_;
  std::size_t calls_ = 0;
};

inline std::optional<std::vector<int>> construct(const std::string& claim,
                                                 std::size_t n, Asker& ask) {
  if (n < 1 || n > kMaxSearchDocs)
    throw std::invalid_argument("citation search needs 1..9 documents");
  // Subsets by size, then lexicographically by index tuple.
  for (std::size_t size = 1; size <= n; ++size) {
    std::vector<int> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = static_cast<int>(i) + 1;
    while (true) {
      if (ask(idx, claim)) return idx;
      // next combination
      std::size_t i = size;
      while (i > 0 && idx[i - 1] == static_cast<int>(n - size + i)) --i;
      if (i == 0) break;
      ++idx[i - 1];
      for (std::size_t j = i; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return std::nullopt;
}

inline std::vector<int> simplify(std::vector<int> cites, const std::string& claim,
                                 Asker& ask) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < cites.size();) {
      int c = cites[i];
      if (ask(std::span<const int>(&c, 1), claim)) {
        ++i;
        continue;
      }
      std::vector<int> rest;
      for (int o : cites)
        if (o != c) rest.push_back(o);
      if (ask(rest, claim)) {
        cites = std::move(rest);
        changed = true;
      } else {
        ++i;
      }
    }
  }
  return cites;
}

}  // namespace detail

/// phi(concat(cited docs), claim); false for an uncited statement.
inline bool verify_statement(const Statement& stmt, std::span<const Document> docs,
                             EntailmentOracle& oracle) {
  detail::check_range(stmt.citations, docs.size());
  detail::Asker ask(oracle, docs);
  return ask(stmt.citations, stmt.claim);
}

/// Smallest supporting citation set, searching subsets by size and then
/// lexicographically; nullopt when none of the 2^n - 1 subsets entails.
inline std::optional<std::vector<int>> construct_citation(
    const std::string& claim, std::span<const Document> docs,
    EntailmentOracle& oracle) {
  detail::Asker ask(oracle, docs);
  return detail::construct(claim, docs.size(), ask);
}

/// Removes citations that neither support the claim alone nor are needed by
/// the rest, scanning in ascending order until stable. Requires a supported
/// statement.
inline std::vector<int> simplify_citation(const Statement& stmt,
                                          std::span<const Document> docs,
                                          EntailmentOracle& oracle) {
  detail::check_range(stmt.citations, docs.size());
  detail::Asker ask(oracle, docs);
  return detail::simplify(stmt.citations, stmt.claim, ask);
}

struct VerifiedAsIs {};
struct Constructed {
  std::vector<int> original;
  std::vector<int> citations;
};
struct Simplified {
  std::vector<int> removed;
};
struct Infeasible {};

using StatementOutcome =
    std::variant<VerifiedAsIs, Constructed, Simplified, Infeasible>;

struct RewriteReport {
  std::vector<StatementOutcome> outcomes;  // one per statement, in order
  std::size_t oracle_calls = 0;

  bool has_infeasible() const {
    for (const auto& o : outcomes)
      if (std::holds_alternative<Infeasible>(o)) return true;
    return false;
  }
  // Whether statement i's citations were changed or could not be fixed.
  bool needs_fix(std::size_t i) const {
    return !std::holds_alternative<VerifiedAsIs>(outcomes.at(i));
  }
};

struct RewriteResult {
  ParsedResponse response;  // citation sets rewritten; render() gives the text
  RewriteReport report;
};

/// Rewrites every statement's citations: verify, construct on failure, then
/// simplify. Infeasible statements keep their original citations and flag
/// the response. Throws CitationIndexError for an out-of-range citation.
inline RewriteResult rewrite_response(const ParsedResponse& parsed,
                                      std::span<const Document> docs,
                                      EntailmentOracle& oracle) {
  RewriteResult out{parsed, {}};
  detail::Asker ask(oracle, docs);
  for (auto& st : out.response.statements) {
    detail::check_range(st.citations, docs.size());
    std::vector<int> cites = st.citations;
    bool constructed = false;
    if (!ask(cites, st.claim)) {
      auto found = detail::construct(st.claim, docs.size(), ask);
      if (!found) {
        out.report.outcomes.emplace_back(Infeasible{});
        continue;
      }
      cites = std::move(*found);
      constructed = true;
    }
    std::vector<int> kept = detail::simplify(cites, st.claim, ask);
    if (constructed) {
      out.report.outcomes.emplace_back(Constructed{st.citations, kept});
    } else if (kept.size() != cites.size()) {
      std::vector<int> removed;
      std::set_difference(cites.begin(), cites.end(), kept.begin(), kept.end(),
                          std::back_inserter(removed));
      out.report.outcomes.emplace_back(Simplified{std::move(removed)});
    } else {
      out.report.outcomes.emplace_back(VerifiedAsIs{});
    }
    st.citations = std::move(kept);
  }
  out.report.oracle_calls = ask.calls();
  return out;
}

inline RewriteResult rewrite_response(std::string_view text,
                                      std::span<const Document> docs,
                                      EntailmentOracle& oracle) {
  return rewrite_response(parse_response(text), docs, oracle);
}

}  // namespace parag
