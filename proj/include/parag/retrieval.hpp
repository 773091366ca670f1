#pragma once

// Candidate retrieval, golden-document filtering and prompt document assembly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "parag/common.hpp"
#include "parag/dataio.hpp"
#include "parag/metrics.hpp"
#include "parag/oracle.hpp"

namespace parag {

struct RankedDoc {
  Document doc;
  double score = 0.0;
  int rank = 0;  // 1-based
};

struct RankedList {
  std::string qid;
  std::vector<RankedDoc> docs;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual RankedList retrieve(const std::string& question, int k) = 0;
};

/// Token-overlap retriever with inverse document frequency weights over title
/// and text. Ties are broken by doc_id ascending; documents sharing no term
/// with the question fill the tail with score 0.
class LexicalRetriever : public Retriever {
 public:
  explicit LexicalRetriever(const Corpus& corpus) : corpus_(corpus) {
    const auto& docs = corpus.documents();
    for (std::size_t i = 0; i < docs.size(); ++i) {
      auto toks = detail::content_words(docs[i].title + " " + docs[i].text);
      std::sort(toks.begin(), toks.end());
      toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
      for (auto& t : toks) postings_[std::move(t)].push_back(i);
    }
    by_id_.resize(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) by_id_[i] = i;
    std::sort(by_id_.begin(), by_id_.end(), [&](std::size_t a, std::size_t b) {
      return docs[a].doc_id < docs[b].doc_id;
    });
  }

  RankedList retrieve(const std::string& question, int k) override {
    if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
    const auto& docs = corpus_.documents();
    auto terms = detail::content_words(question);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());

    std::unordered_map<std::size_t, double> scores;
    const double n = static_cast<double>(docs.size());
    for (const auto& t : terms) {
      auto it = postings_.find(t);
      if (it == postings_.end()) continue;
      double idf = std::log(1.0 + n / static_cast<double>(it->second.size()));
      for (std::size_t d : it->second) scores[d] += idf;
    }
    std::vector<std::pair<std::size_t, double>> hits(scores.begin(), scores.end());
    std::sort(hits.begin(), hits.end(), [&](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return docs[a.first].doc_id < docs[b.first].doc_id;
    });
    auto limit = static_cast<std::size_t>(k);
    if (hits.size() < limit)
      for (std::size_t i : by_id_) {
        if (hits.size() >= limit) break;
        if (!scores.count(i)) hits.emplace_back(i, 0.0);
      }
    if (hits.size() > limit) hits.resize(limit);

    RankedList out;
    int rank = 0;
    for (auto [i, s] : hits) out.docs.push_back({docs[i], s, ++rank});
    return out;
  }

 private:
  const Corpus& corpus_;
  std::unordered_map<std::string, std::vector<std::size_t>> postings_;
  std::vector<std::size_t> by_id_;
};

// ---------------------------------------------------------------------------

enum class DocFlag { Golden, NoisyRelated, NoisyRandom };

inline std::string_view to_string(DocFlag f) {
  switch (f) {
    case DocFlag::Golden: return "golden";
    case DocFlag::NoisyRelated: return "noisy_related";
    case DocFlag::NoisyRandom: return "noisy_random";
  }
  return "?";
}

struct PromptDoc {
  Document doc;
  DocFlag flag = DocFlag::Golden;
};

/// Documents as shown in a prompt; display index i is docs[i - 1].
struct PromptDocSet {
  std::vector<PromptDoc> docs;

  std::size_t size() const { return docs.size(); }
  bool empty() const { return docs.empty(); }

  std::vector<Document> documents() const {
    std::vector<Document> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(d.doc);
    return out;
  }

  // Ascending display indices carrying `flag`.
  std::vector<int> indices_with(DocFlag flag) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < docs.size(); ++i)
      if (docs[i].flag == flag) out.push_back(static_cast<int>(i) + 1);
    return out;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& d : docs) out.push_back(d.doc.doc_id);
    return out;
  }
};

inline bool contains_any_alias(std::string_view text, const QAItem& qa) {
  auto hits = answer_hits(text, qa);
  return std::any_of(hits.begin(), hits.end(), [](bool b) { return b; });
}

namespace detail {
inline std::string doc_surface(const Document& d) { return d.title + "\n" + d.text; }

// Bitmask of answer groups a document covers (at most 64 groups).
inline std::uint64_t cover_mask(const Document& d, const QAItem& qa) {
  auto hits = answer_hits(doc_surface(d), qa);
  std::uint64_t m = 0;
  for (std::size_t g = 0; g < hits.size() && g < 64; ++g)
    if (hits[g]) m |= std::uint64_t{1} << g;
  return m;
}
}  // namespace detail

/// Documents that contain at least one alias of at least one group, in rank
/// order. Both title and text are searched.
inline std::vector<Document> filter_golden(const RankedList& ranked,
                                           const QAItem& qa) {
  std::vector<Document> out;
  for (const auto& r : ranked.docs)
    if (contains_any_alias(detail::doc_surface(r.doc), qa)) out.push_back(r.doc);
  return out;
}

/// Picks at most `max_docs` golden documents covering every answer group.
///
/// Greedy by number of still-uncovered groups, ties to the earlier (higher
/// ranked) document. When greedy needs more than `max_docs`, an exact search
/// over non-dominated documents decides feasibility. The result is in rank
/// order; nullopt when no cover fits.
inline std::optional<PromptDocSet> select_prompt_docs(
    std::span<const Document> golden, const QAItem& qa, int max_docs = 5) {
  const std::size_t groups = qa.answer_groups.size();
  if (groups == 0 || groups > 64 || max_docs < 1) return std::nullopt;
  const std::uint64_t all =
      groups == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << groups) - 1;

  std::vector<std::uint64_t> masks;
  masks.reserve(golden.size());
  for (const auto& d : golden) masks.push_back(detail::cover_mask(d, qa));

  std::vector<std::size_t> chosen;
  std::uint64_t covered = 0;
  while (covered != all) {
    std::size_t best = golden.size();
    int best_gain = 0;
    for (std::size_t i = 0; i < golden.size(); ++i) {
      int gain = std::popcount(masks[i] & ~covered);
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    if (best == golden.size()) return std::nullopt;  // some group uncoverable
    chosen.push_back(best);
    covered |= masks[best];
  }

  if (chosen.size() > static_cast<std::size_t>(max_docs)) {
    // Keep the earliest document per distinct mask, drop strictly dominated.
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < golden.size(); ++i) {
      bool dominated = masks[i] == 0;
      for (std::size_t j = 0; j < golden.size() && !dominated; ++j) {
        if (j == i) continue;
        bool superset = (masks[i] & ~masks[j]) == 0;
        if (superset && (masks[j] != masks[i] || j < i)) dominated = true;
      }
      if (!dominated) cand.push_back(i);
    }
    std::optional<std::vector<std::size_t>> found;
    std::vector<std::size_t> pick;
    // Depth-first over combinations in lexicographic (rank) order, by size.
    auto dfs = [&](auto& self, std::size_t from, std::size_t want,
                   std::uint64_t cov) -> bool {
      if (pick.size() == want) return cov == all;
      for (std::size_t c = from; c < cand.size(); ++c) {
        pick.push_back(cand[c]);
        if (self(self, c + 1, want, cov | masks[cand[c]])) return true;
        pick.pop_back();
      }
      return false;
    };
    for (std::size_t want = 1; want <= static_cast<std::size_t>(max_docs); ++want) {
      pick.clear();
      if (dfs(dfs, 0, want, 0)) {
        found = pick;
        break;
      }
    }
    if (!found) return std::nullopt;
    chosen = *found;
  }

  std::sort(chosen.begin(), chosen.end());
  PromptDocSet out;
  for (std::size_t i : chosen) out.docs.push_back({golden[i], DocFlag::Golden});
  return out;
}

struct NoisySample {
  std::vector<Document> related;  // from the question's own ranked list
  std::vector<Document> random;   // from other questions' ranked lists
};

namespace detail {
// Draws `count` distinct elements uniformly; order of draw is kept.
inline std::vector<Document> draw(std::vector<Document> pool, std::size_t count,
                                  SeededRng& rng) {
  std::vector<Document> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}
}  // namespace detail

/// Samples answer-free documents: `per_kind` related from the question's own
/// ranked list and `per_kind` random from other questions' documents. All
/// returned documents are distinct and none is in `exclude` (the golden set).
/// nullopt when either pool is too small.
inline std::optional<NoisySample> sample_noisy(
    const RankedList& ranked, std::span<const Document> other_pool,
    const QAItem& qa, std::span<const Document> exclude, std::uint64_t seed,
    std::size_t per_kind = 2) {
  std::unordered_set<std::string> seen;
  for (const auto& d : exclude) seen.insert(d.doc_id);

  std::vector<Document> related_pool;
  for (const auto& r : ranked.docs) {
    if (seen.count(r.doc.doc_id)) continue;
    if (contains_any_alias(detail::doc_surface(r.doc), qa)) continue;
    if (seen.insert(r.doc.doc_id).second) related_pool.push_back(r.doc);
  }
  if (related_pool.size() < per_kind) return std::nullopt;

  SeededRng rng(seed);
  NoisySample out;
  out.related = detail::draw(std::move(related_pool), per_kind, rng);

  std::unordered_set<std::string> taken;
  for (const auto& d : exclude) taken.insert(d.doc_id);
  for (const auto& d : out.related) taken.insert(d.doc_id);
  std::vector<Document> random_pool;
  for (const auto& d : other_pool) {
    if (taken.count(d.doc_id)) continue;
    if (contains_any_alias(detail::doc_surface(d), qa)) continue;
    if (taken.insert(d.doc_id).second) random_pool.push_back(d);
  }
  if (random_pool.size() < per_kind) return std::nullopt;
  out.random = detail::draw(std::move(random_pool), per_kind, rng);
  return out;
}

/// Mixes golden and noisy documents under a seeded uniform interleaving.
/// Golden documents keep their relative order, so golden numbering maps onto
/// mixed positions through an order-preserving IndexMapping; noisy documents
/// are shuffled among themselves.
inline PromptDocSet assemble_prompt_docs(const PromptDocSet& golden,
                                         const NoisySample& noisy,
                                         std::uint64_t seed) {
  std::vector<PromptDoc> noise;
  for (const auto& d : noisy.related) noise.push_back({d, DocFlag::NoisyRelated});
  for (const auto& d : noisy.random) noise.push_back({d, DocFlag::NoisyRandom});
  if (golden.size() > 5 || noise.size() > 4)
    throw std::invalid_argument("assemble_prompt_docs: at most 5 golden and 4 noisy");

  SeededRng rng(seed);
  std::vector<bool> slot_is_golden(golden.size(), true);
  slot_is_golden.resize(golden.size() + noise.size(), false);
  std::vector<char> slots(slot_is_golden.begin(), slot_is_golden.end());
  rng.shuffle(slots);
  rng.shuffle(noise);

  PromptDocSet out;
  std::size_t g = 0, n = 0;
  for (char is_golden : slots)
    out.docs.push_back(is_golden ? golden.docs[g++] : noise[n++]);
  return out;
}

}  // namespace parag
