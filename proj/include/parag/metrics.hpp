#pragma once

// Correctness (exact-substring answer recall) and citation quality scoring.
//
// A statement is supported when its cited documents, concatenated, entail the
// claim. A citation is relevant when its statement is supported and either the
// cited document alone entails the claim or dropping it breaks support.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "parag/citemodel.hpp"
#include "parag/dataio.hpp"
#include "parag/oracle.hpp"
#include "parag/parallel.hpp"

namespace parag {

/// Lowercase plus whitespace-run collapse. No stemming or article stripping.
inline std::string normalize_answer_text(std::string_view s) {
  return detail::collapse_ws(detail::to_lower_ascii(s));
}

inline bool contains_answer(std::string_view text, std::string_view alias) {
  if (detail::trim(alias).empty())
    throw std::invalid_argument("contains_answer: empty alias");
  return normalize_answer_text(text).find(normalize_answer_text(alias)) !=
         std::string::npos;
}

namespace detail {
inline bool group_hit(const std::string& norm_text,
                      const std::vector<std::string>& group) {
  for (const auto& alias : group)
    if (norm_text.find(normalize_answer_text(alias)) != std::string::npos)
      return true;
  return false;
}
}  // namespace detail

/// Whether each answer group has an alias in `text`.
inline std::vector<bool> answer_hits(std::string_view text, const QAItem& qa) {
  std::string norm = normalize_answer_text(text);
  std::vector<bool> out;
  out.reserve(qa.answer_groups.size());
  for (const auto& g : qa.answer_groups) out.push_back(detail::group_hit(norm, g));
  return out;
}

/// Fraction of answer groups found in the text.
inline double em_recall(std::string_view text, const QAItem& qa) {
  if (qa.answer_groups.empty()) return 0.0;
  auto hits = answer_hits(text, qa);
  std::size_t n = 0;
  for (bool h : hits) n += h;
  return static_cast<double>(n) / static_cast<double>(hits.size());
}

inline bool is_complete(std::string_view text, const QAItem& qa) {
  auto hits = answer_hits(text, qa);
  return !hits.empty() && std::all_of(hits.begin(), hits.end(), [](bool b) { return b; });
}

inline bool is_incomplete(std::string_view text, const QAItem& qa) {
  return !is_complete(text, qa);
}

// ---------------------------------------------------------------------------
// Citation quality

struct CitationScore {
  double recall = 0.0;
  double precision = 0.0;
  std::size_t statements = 0;
  std::size_t supported = 0;
  std::size_t citations = 0;
  std::size_t relevant = 0;
  std::size_t invalid_statements = 0;  // cited an index outside 1..n
};

namespace detail {
inline bool indices_valid(std::span<const int> cites, std::size_t n) {
  for (int c : cites)
    if (c < 1 || static_cast<std::size_t>(c) > n) return false;
  return true;
}
}  // namespace detail

/// Recall and precision of one parsed response against its prompt documents
/// (display index i is docs[i-1]).
inline CitationScore score_citations(const ParsedResponse& parsed,
                                     std::span<const Document> docs,
                                     EntailmentOracle& oracle) {
  CitationScore s;
  for (const auto& st : parsed.statements) {
    ++s.statements;
    s.citations += st.citations.size();
    if (!detail::indices_valid(st.citations, docs.size())) {
      ++s.invalid_statements;
      continue;
    }
    if (!supports(oracle, docs, st.citations, st.claim)) continue;
    ++s.supported;
    for (int c : st.citations) {
      if (supports(oracle, docs, std::span<const int>(&c, 1), st.claim)) {
        ++s.relevant;
        continue;
      }
      std::vector<int> rest;
      for (int o : st.citations)
        if (o != c) rest.push_back(o);
      if (!supports(oracle, docs, rest, st.claim)) ++s.relevant;
    }
  }
  if (s.statements > 0)
    s.recall = static_cast<double>(s.supported) / static_cast<double>(s.statements);
  if (s.citations > 0)
    s.precision = static_cast<double>(s.relevant) / static_cast<double>(s.citations);
  return s;
}

inline double citation_recall(const ParsedResponse& parsed,
                              std::span<const Document> docs,
                              EntailmentOracle& oracle) {
  return score_citations(parsed, docs, oracle).recall;
}

inline double citation_precision(const ParsedResponse& parsed,
                                 std::span<const Document> docs,
                                 EntailmentOracle& oracle) {
  return score_citations(parsed, docs, oracle).precision;
}

// ---------------------------------------------------------------------------
// Evaluation report

struct EvalInput {
  std::string qid;
  std::string output;
  std::vector<Document> docs;
};

struct EvalRow {
  std::string qid;
  double em = 0.0;
  double cit_rec = 0.0;
  double cit_prec = 0.0;
};

struct EvalAggregate {
  double em = 0.0;  // all x100, rounded to 2 decimals
  double rec = 0.0;
  double prec = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> per_question;
  std::optional<EvalAggregate> aggregate;  // empty when no rows scored
  std::size_t statements = 0;
  std::size_t citations = 0;
  std::size_t invalid_statements = 0;
  std::size_t unknown_qids = 0;
  std::size_t oracle_calls = 0;
};

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline double f1_score(double recall, double precision) {
  return recall + precision > 0.0 ? 2.0 * recall * precision / (recall + precision)
                                  : 0.0;
}

inline EvalReport evaluate(std::span<const EvalInput> responses,
                           const std::unordered_map<std::string, QAItem>& qa_index,
                           EntailmentOracle& oracle, unsigned workers = 1) {
  CountingOracle counter(oracle);
  std::vector<std::optional<EvalRow>> rows(responses.size());
  std::vector<CitationScore> scores(responses.size());
  parallel_for(responses.size(), workers, [&](std::size_t i) {
    const auto& r = responses[i];
    auto it = qa_index.find(r.qid);
    if (it == qa_index.end()) return;
    scores[i] = score_citations(parse_response(r.output), r.docs, counter);
    rows[i] = EvalRow{r.qid, em_recall(r.output, it->second), scores[i].recall,
                      scores[i].precision};
  });

  EvalReport rep;
  double em = 0, rec = 0, prec = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i]) {
      ++rep.unknown_qids;
      continue;
    }
    em += rows[i]->em;
    rec += rows[i]->cit_rec;
    prec += rows[i]->cit_prec;
    rep.statements += scores[i].statements;
    rep.citations += scores[i].citations;
    rep.invalid_statements += scores[i].invalid_statements;
    rep.per_question.push_back(*rows[i]);
  }
  if (!rep.per_question.empty()) {
    double n = static_cast<double>(rep.per_question.size());
    EvalAggregate a;
    a.em = round2(100.0 * em / n);
    a.rec = round2(100.0 * rec / n);
    a.prec = round2(100.0 * prec / n);
    a.f1 = round2(100.0 * f1_score(rec / n, prec / n));
    rep.aggregate = a;
  }
  rep.oracle_calls = counter.queries();
  return rep;
}

inline ojson to_json(const EvalReport& r) {
  ojson rows = ojson::array();
  for (const auto& row : r.per_question) {
    ojson j = ojson::object();
    j["id"] = row.qid;
    j["em"] = row.em;
    j["cit_rec"] = row.cit_rec;
    j["cit_prec"] = row.cit_prec;
    rows.push_back(std::move(j));
  }
  ojson agg = ojson::object();
  for (const char* k : {"em", "rec", "prec", "f1"}) agg[k] = nullptr;
  if (r.aggregate) {
    agg["em"] = r.aggregate->em;
    agg["rec"] = r.aggregate->rec;
    agg["prec"] = r.aggregate->prec;
    agg["f1"] = r.aggregate->f1;
  }
  ojson counts = ojson::object();
  counts["questions"] = r.per_question.size();
  counts["statements"] = r.statements;
  counts["citations"] = r.citations;
  counts["invalid_statements"] = r.invalid_statements;
  counts["unknown_qids"] = r.unknown_qids;
  counts["oracle_calls"] = r.oracle_calls;
  ojson j = ojson::object();
  j["per_question"] = std::move(rows);
  j["aggregate"] = std::move(agg);
  j["counts"] = std::move(counts);
  return j;
}

}  // namespace parag
