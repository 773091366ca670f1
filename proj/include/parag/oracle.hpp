#pragma once

// Boolean entailment oracle phi(premise, hypothesis): the interface, the shared
// premise builder, a deterministic mock and a memoizing wrapper.

#include <atomic>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "parag/common.hpp"
#include "parag/dataio.hpp"

namespace parag {

struct EntailmentQuery {
  std::string premise;
  std::string hypothesis;

  friend bool operator==(const EntailmentQuery&, const EntailmentQuery&) = default;
};

class EntailmentOracle {
 public:
  virtual ~EntailmentOracle() = default;

  // Element i answers queries[i]. Implementations must be thread-safe.
  virtual std::vector<bool> entails_batch(
      std::span<const EntailmentQuery> queries) = 0;

  bool entails(const EntailmentQuery& q) {
    return entails_batch(std::span<const EntailmentQuery>(&q, 1)).front();
  }
};

/// Premise for a citation set: cited documents in ascending index order, each
/// as "{title}. {text}", joined by blank lines. Every component that asks the
/// oracle about cited documents goes through here.
inline std::string build_premise(std::span<const Document> docs,
                                 std::span<const int> citations) {
  std::string out;
  for (int c : citations) {
    if (c < 1 || static_cast<std::size_t>(c) > docs.size())
      throw CitationIndexError("citation [" + std::to_string(c) +
                                   "] outside 1.." + std::to_string(docs.size()),
                               c);
    const Document& d = docs[static_cast<std::size_t>(c - 1)];
    if (!out.empty()) out += "\n\n";
    if (!d.title.empty()) out += d.title + ". ";
    out += d.text;
  }
  return out;
}

/// phi(concat(citations), claim). An empty citation set supports nothing and
/// is answered without consulting the oracle.
inline bool supports(EntailmentOracle& oracle, std::span<const Document> docs,
                     std::span<const int> citations, const std::string& claim) {
  if (citations.empty()) return false;
  return oracle.entails({build_premise(docs, citations), claim});
}

// ---------------------------------------------------------------------------

namespace detail {

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",
      "for",  "from", "has",  "have", "he",   "her",  "his",  "in",
      "is",   "it",   "its",  "of",   "on",   "or",   "she",  "that",
      "the",  "their", "they", "this", "to",   "was",  "were", "which",
      "who",  "with", "also", "been", "but",  "had",  "not",  "into"};
  return words;
}

// Lowercased alphanumeric tokens; non-ASCII bytes count as word characters.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (word) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                         : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : word_tokens(text))
    if (!stopwords().count(w)) out.push_back(std::move(w));
  return out;
}

}  // namespace detail

/// Deterministic stand-in for an NLI model.
///
/// Explicit table entries win; otherwise the hypothesis is entailed iff it has
/// at least one content word and every content word occurs in the premise.
class MockOracle : public EntailmentOracle {
 public:
  MockOracle() = default;

  void set(std::string premise, std::string hypothesis, bool value) {
    table_[{std::move(premise), std::move(hypothesis)}] = value;
  }

  static bool default_rule(std::string_view premise,
                           std::string_view hypothesis) {
    auto hyp = detail::content_words(hypothesis);
    if (hyp.empty() || premise.empty()) return false;
    auto prem = detail::word_tokens(premise);
    std::set<std::string> have(prem.begin(), prem.end());
    for (const auto& w : hyp)
      if (!have.count(w)) return false;
    return true;
  }

  std::vector<bool> entails_batch(
      std::span<const EntailmentQuery> queries) override {
    std::vector<bool> out;
    out.reserve(queries.size());
    for (const auto& q : queries) {
      auto it = table_.find({q.premise, q.hypothesis});
      out.push_back(it != table_.end() ? it->second
                                       : default_rule(q.premise, q.hypothesis));
    }
    return out;
  }

 private:
  std::map<std::pair<std::string, std::string>, bool> table_;
};

/// Adapts a callable; handy for table-driven tests.
class FunctionOracle : public EntailmentOracle {
 public:
  explicit FunctionOracle(std::function<bool(const EntailmentQuery&)> fn)
      : fn_(std::move(fn)) {}

  std::vector<bool> entails_batch(
      std::span<const EntailmentQuery> queries) override {
    std::vector<bool> out;
    out.reserve(queries.size());
    for (const auto& q : queries) out.push_back(fn_(q));
    return out;
  }

 private:
  std::function<bool(const EntailmentQuery&)> fn_;
};

/// Counts queries passing through to another oracle.
class CountingOracle : public EntailmentOracle {
 public:
  explicit CountingOracle(EntailmentOracle& inner) : inner_(inner) {}

  std::vector<bool> entails_batch(
      std::span<const EntailmentQuery> queries) override {
    queries_ += queries.size();
    ++batches_;
    return inner_.entails_batch(queries);
  }

  std::size_t queries() const { return queries_.load(); }
  std::size_t batches() const { return batches_.load(); }
  void reset() {
    queries_ = 0;
    batches_ = 0;
  }

 private:
  EntailmentOracle& inner_;
  std::atomic<std::size_t> queries_{0};
  std::atomic<std::size_t> batches_{0};
};

/// Memoizes another oracle by exact (premise, hypothesis).
///
/// Concurrent callers asking the same uncached query share one in-flight
/// backend request, so each distinct query reaches the backend exactly once.
/// A failed backend batch is evicted and its error propagated to every waiter.
class CachingOracle : public EntailmentOracle {
 public:
  explicit CachingOracle(EntailmentOracle& backend) : backend_(backend) {}

  std::vector<bool> entails_batch(
      std::span<const EntailmentQuery> queries) override {
    std::vector<std::shared_future<bool>> results;
    results.reserve(queries.size());
    std::vector<std::string> owned_keys;
    std::vector<EntailmentQuery> owned;
    std::vector<std::promise<bool>> promises;
    {
      std::lock_guard lock(mu_);
      for (const auto& q : queries) {
        std::string k = key(q);
        auto it = cache_.find(k);
        if (it == cache_.end()) {
          promises.emplace_back();
          auto fut = promises.back().get_future().share();
          it = cache_.emplace(k, fut).first;
          owned_keys.push_back(std::move(k));
          owned.push_back(q);
        }
        results.push_back(it->second);
      }
    }
    queries_ += queries.size();
    if (!owned.empty()) {
      backend_queries_ += owned.size();
      ++backend_batches_;
      std::vector<bool> answers;
      try {
        answers = backend_.entails_batch(owned);
        if (answers.size() != owned.size())
          throw BackendError("oracle returned " + std::to_string(answers.size()) +
                                 " answers for " + std::to_string(owned.size()) +
                                 " queries",
                             false);
      } catch (...) {
        {
          std::lock_guard lock(mu_);
          for (const auto& k : owned_keys) cache_.erase(k);
        }
        for (auto& p : promises) p.set_exception(std::current_exception());
        throw;
      }
      for (std::size_t i = 0; i < promises.size(); ++i)
        promises[i].set_value(answers[i]);
    }
    std::vector<bool> out;
    out.reserve(results.size());
    for (auto& f : results) out.push_back(f.get());
    return out;
  }

  // Queries answered, cached or not.
  std::size_t queries() const { return queries_.load(); }
  // Queries forwarded to the backend (cache misses).
  std::size_t backend_queries() const { return backend_queries_.load(); }
  std::size_t backend_batches() const { return backend_batches_.load(); }
  std::size_t cache_size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
  }

 private:
  static std::string key(const EntailmentQuery& q) {
    return std::to_string(q.premise.size()) + ":" + q.premise + q.hypothesis;
  }

  EntailmentOracle& backend_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::shared_future<bool>> cache_;
  std::atomic<std::size_t> queries_{0};
  std::atomic<std::size_t> backend_queries_{0};
  std::atomic<std::size_t> backend_batches_{0};
};

}  // namespace parag
