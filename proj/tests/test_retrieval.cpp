#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "parag/retrieval.hpp"
#include "support.hpp"

using namespace parag;

namespace {
QAItem qa_of(std::vector<std::vector<std::string>> groups) {
  return QAItem{"q", "question", std::move(groups)};
}

RankedList ranked_of(const std::vector<Document>& docs) {
  RankedList r;
  int rank = 0;
  for (const auto& d : docs) r.docs.push_back({d, 1.0, ++rank});
  return r;
}
}  // namespace

TEST(LexicalRetriever, SingleSharingDocRanksFirst) {
  Corpus c({{"a", "Weather", "rain falls daily"},
            {"b", "Pirates", "Patchy leads the fan club"},
            {"c", "Trains", "schedules changed"}});
  LexicalRetriever r(c);
  auto out = r.retrieve("Who leads the fan club?", 3);
  ASSERT_EQ(out.docs.size(), 3u);
  EXPECT_EQ(out.docs[0].doc.doc_id, "b");
  EXPECT_GT(out.docs[0].score, 0.0);
  EXPECT_EQ(out.docs[0].rank, 1);
}

TEST(LexicalRetriever, KLargerThanCorpus) {
  Corpus c({{"a", "", "one"}, {"b", "", "two"}});
  LexicalRetriever r(c);
  auto out = r.retrieve("two", 100);
  ASSERT_EQ(out.docs.size(), 2u);
  EXPECT_EQ(out.docs[0].doc.doc_id, "b");
  EXPECT_EQ(out.docs[1].rank, 2);
}

TEST(LexicalRetriever, EqualScoresOrderedByDocId) {
  Corpus c({{"z9", "", "apple pie"}, {"a1", "", "apple tart"}, {"m5", "", "apple cake"}});
  LexicalRetriever r(c);
  auto out = r.retrieve("apple", 3);
  ASSERT_EQ(out.docs.size(), 3u);
  // Independent check: all three share exactly one term with equal df.
  EXPECT_DOUBLE_EQ(out.docs[0].score, out.docs[2].score);
  EXPECT_EQ(out.docs[0].doc.doc_id, "a1");
  EXPECT_EQ(out.docs[1].doc.doc_id, "m5");
  EXPECT_EQ(out.docs[2].doc.doc_id, "z9");
}

TEST(LexicalRetriever, RanksIncreasingScoresNonIncreasing) {
  auto c = load_corpus(testsupport::toy_dir() + "/corpus.tsv");
  LexicalRetriever r(c);
  auto out = r.retrieve("Which rivers flow into Lake Ostrava?", 30);
  ASSERT_EQ(out.docs.size(), 30u);
  for (std::size_t i = 1; i < out.docs.size(); ++i) {
    EXPECT_EQ(out.docs[i].rank, out.docs[i - 1].rank + 1);
    EXPECT_LE(out.docs[i].score, out.docs[i - 1].score);
  }
  EXPECT_THROW(r.retrieve("x", 0), std::invalid_argument);
}

TEST(LexicalRetriever, EmptyCorpus) {
  Corpus c;
  LexicalRetriever r(c);
  EXPECT_TRUE(r.retrieve("anything", 5).docs.empty());
}

TEST(FilterGolden, AliasInText) {
  Document d{"x", "Neighbours", "In the series she was played by Ashley Jones until 2005."};
  auto golden = filter_golden(ranked_of({d}), qa_of({{"Ashley Jones"}}));
  EXPECT_EQ(golden.size(), 1u);
  EXPECT_TRUE(filter_golden(ranked_of({{"y", "", "nothing here"}}), qa_of({{"Ashley Jones"}}))
                  .empty());
}

TEST(FilterGolden, MatchesBruteForceScanInRankOrder) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "omega"};
  std::vector<Document> docs;
  for (int i = 0; i < 100; ++i) {
    std::string text = "filler text " + std::to_string(i);
    if (i % 14 == 3) text += " with Gamma Ray inside";
    if (i == 50) text += " and DELTA   force";
    docs.push_back({"d" + std::to_string(i), "", text});
  }
  auto qa = qa_of({{"gamma ray"}, {"delta force", "omega"}});
  auto golden = filter_golden(ranked_of(docs), qa);
  std::vector<std::string> expect;
  for (const auto& d : docs) {
    std::string t = detail::collapse_ws(detail::to_lower_ascii(d.title + "\n" + d.text));
    if (t.find("gamma ray") != std::string::npos ||
        t.find("delta force") != std::string::npos || t.find("omega") != std::string::npos)
      expect.push_back(d.doc_id);
  }
  std::vector<std::string> got;
  for (const auto& d : golden) got.push_back(d.doc_id);
  EXPECT_EQ(got, expect);
  EXPECT_EQ(got.size(), 8u);
}

TEST(SelectPromptDocs, SingleDocCoversAll) {
  std::vector<Document> g{{"A", "", "x and y"}, {"B", "", "x"}};
  auto s = select_prompt_docs(g, qa_of({{"x"}, {"y"}}));
  ASSERT_TRUE(s);
  EXPECT_EQ(s->ids(), std::vector<std::string>{"A"});
}

TEST(SelectPromptDocs, RankTieBreakAndMinimality) {
  // A covers g1, B covers g2, C covers g1; rank A < B < C.
  std::vector<Document> g{{"A", "", "one"}, {"B", "", "two"}, {"C", "", "one"}};
  auto qa = qa_of({{"one"}, {"two"}});
  auto s = select_prompt_docs(g, qa);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->ids(), (std::vector<std::string>{"A", "B"}));
  // Brute force: no single document covers both, some pair with A does.
  std::size_t min_size = 99;
  for (unsigned m = 1; m < 8; ++m) {
    std::uint64_t cov = 0;
    for (int i = 0; i < 3; ++i)
      if (m >> i & 1) cov |= detail::cover_mask(g[static_cast<std::size_t>(i)], qa);
    if (cov == 3) min_size = std::min<std::size_t>(min_size, std::popcount(m));
  }
  EXPECT_EQ(s->size(), min_size);
  for (const auto& d : s->docs) EXPECT_EQ(d.flag, DocFlag::Golden);
}

TEST(SelectPromptDocs, PigeonholeInfeasible) {
  std::vector<Document> g;
  std::vector<std::vector<std::string>> groups;
  for (int i = 0; i < 6; ++i) {
    g.push_back({"d" + std::to_string(i), "", "ans" + std::to_string(i) + "x"});
    groups.push_back({"ans" + std::to_string(i) + "x"});
  }
  EXPECT_FALSE(select_prompt_docs(g, qa_of(groups), 5));
  EXPECT_TRUE(select_prompt_docs(g, qa_of(groups), 6));
}

TEST(SelectPromptDocs, CoversWheneverSmallCoverExists) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 300; ++t) {
    const int groups = 2 + static_cast<int>(rng() % 6);
    const int n = 1 + static_cast<int>(rng() % 10);
    std::vector<std::vector<std::string>> gs;
    for (int i = 0; i < groups; ++i) gs.push_back({"ans" + std::string(1, char('a' + i)) + "q"});
    auto qa = qa_of(gs);
    std::vector<Document> docs;
    std::vector<std::uint64_t> masks;
    for (int d = 0; d < n; ++d) {
      std::string text = "doc";
      std::uint64_t m = 0;
      for (int i = 0; i < groups; ++i)
        if (rng() % 4 == 0) {
          text += " " + gs[static_cast<std::size_t>(i)][0];
          m |= 1ull << i;
        }
      if (m == 0) {
        text += " " + gs[0][0];
        m = 1;
      }
      docs.push_back({"d" + std::to_string(d), "", text});
      masks.push_back(m);
    }
    const std::uint64_t all = (1ull << groups) - 1;
    bool exists = false;
    for (std::uint32_t sub = 1; sub < (1u << n) && !exists; ++sub) {
      if (std::popcount(sub) > 5) continue;
      std::uint64_t cov = 0;
      for (int d = 0; d < n; ++d)
        if (sub >> d & 1) cov |= masks[static_cast<std::size_t>(d)];
      exists = cov == all;
    }
    auto s = select_prompt_docs(docs, qa, 5);
    ASSERT_EQ(s.has_value(), exists) << "trial " << t;
    if (s) {
      EXPECT_LE(s->size(), 5u);
      std::string all_text;
      for (const auto& d : s->docs) all_text += d.doc.text + "\n";
      EXPECT_TRUE(is_complete(all_text, qa));
    }
  }
}

TEST(SampleNoisy, ForcedChoice) {
  auto qa = qa_of({{"gold"}});
  std::vector<Document> own{{"g", "", "gold here"}, {"r1", "", "near"}, {"r2", "", "close"}};
  std::vector<Document> other{{"o1", "", "far"}, {"o2", "", "away"}};
  std::vector<Document> golden{own[0]};
  auto s = sample_noisy(ranked_of(own), other, qa, golden, 42);
  ASSERT_TRUE(s);
  std::set<std::string> rel, rnd;
  for (const auto& d : s->related) rel.insert(d.doc_id);
  for (const auto& d : s->random) rnd.insert(d.doc_id);
  EXPECT_EQ(rel, (std::set<std::string>{"r1", "r2"}));
  EXPECT_EQ(rnd, (std::set<std::string>{"o1", "o2"}));
}

TEST(SampleNoisy, SeedDeterminismAndShortPool) {
  auto qa = qa_of({{"gold"}});
  std::vector<Document> own, other;
  for (int i = 0; i < 10; ++i) own.push_back({"r" + std::to_string(i), "", "near"});
  for (int i = 0; i < 10; ++i) other.push_back({"o" + std::to_string(i), "", "far"});
  auto a = sample_noisy(ranked_of(own), other, qa, {}, 7);
  auto b = sample_noisy(ranked_of(own), other, qa, {}, 7);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->related, b->related);
  EXPECT_EQ(a->random, b->random);
  std::vector<Document> one{{"x", "", "far"}};
  EXPECT_FALSE(sample_noisy(ranked_of(own), one, qa, {}, 7));
}

TEST(SampleNoisy, AliasDecoysNeverSampled) {
  auto qa = qa_of({{"Patchy"}, {"Burger Beard"}});
  std::vector<Document> own, other;
  for (int i = 0; i < 6; ++i) own.push_back({"r" + std::to_string(i), "", "plain related"});
  for (int i = 0; i < 6; ++i)
    own.push_back({"rd" + std::to_string(i), "", "mentions patchy the pirate"});
  for (int i = 0; i < 6; ++i) other.push_back({"o" + std::to_string(i), "", "plain other"});
  for (int i = 0; i < 6; ++i)
    other.push_back({"od" + std::to_string(i), "BURGER   beard", "decoy title"});
  other.push_back(own[0]);  // shared with the related pool
  std::vector<Document> golden{{"g", "", "Patchy"}};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto s = sample_noisy(ranked_of(own), other, qa, golden, seed);
    ASSERT_TRUE(s);
    std::set<std::string> ids;
    for (const auto* part : {&s->related, &s->random})
      for (const auto& d : *part) {
        ASSERT_FALSE(contains_any_alias(detail::doc_surface(d), qa)) << d.doc_id;
        ids.insert(d.doc_id);
      }
    ASSERT_EQ(ids.size(), 4u);
    ASSERT_FALSE(ids.count("g"));
  }
}

namespace {
PromptDocSet golden_set(int n) {
  PromptDocSet s;
  for (int i = 0; i < n; ++i)
    s.docs.push_back({{"g" + std::to_string(i), "", "golden"}, DocFlag::Golden});
  return s;
}
NoisySample noise(int related, int random) {
  NoisySample n;
  for (int i = 0; i < related; ++i) n.related.push_back({"r" + std::to_string(i), "", "x"});
  for (int i = 0; i < random; ++i) n.random.push_back({"o" + std::to_string(i), "", "y"});
  return n;
}
}  // namespace

TEST(AssemblePromptDocs, SingleGolden) {
  auto s = assemble_prompt_docs(golden_set(1), noise(0, 0), 42);
  EXPECT_EQ(s.ids(), std::vector<std::string>{"g0"});
  EXPECT_EQ(s.indices_with(DocFlag::Golden), std::vector<int>{1});
}

TEST(AssemblePromptDocs, Seed42Permutation) {
  auto s = assemble_prompt_docs(golden_set(4), noise(2, 2), 42);
  // Independent reconstruction: Fisher-Yates over the slot pattern and then
  // the noisy list, drawing from mt19937_64 by rejection sampling.
  std::mt19937_64 eng(42);
  auto below = [&](std::uint64_t n) {
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n, x;
    do x = eng(); while (x >= limit);
    return x % n;
  };
  std::vector<char> slots{1, 1, 1, 1, 0, 0, 0, 0};
  for (std::size_t i = slots.size(); i > 1; --i) std::swap(slots[i - 1], slots[below(i)]);
  std::vector<std::string> noisy{"r0", "r1", "o0", "o1"};
  for (std::size_t i = noisy.size(); i > 1; --i) std::swap(noisy[i - 1], noisy[below(i)]);
  std::vector<std::string> expect;
  std::size_t g = 0, n = 0;
  for (char c : slots) expect.push_back(c ? "g" + std::to_string(g++) : noisy[n++]);
  EXPECT_EQ(s.ids(), expect);
  // Recorded golden permutation for seed 42.
  EXPECT_EQ(s.ids(), (std::vector<std::string>{"o1", "g0", "o0", "g1", "g2", "r1", "g3", "r0"}));
  EXPECT_EQ(assemble_prompt_docs(golden_set(4), noise(2, 2), 42).ids(), s.ids());
}

TEST(AssemblePromptDocs, FlagsSurviveAndGoldenOrderKept) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto s = assemble_prompt_docs(golden_set(5), noise(2, 2), seed);
    std::map<DocFlag, int> flags;
    for (const auto& d : s.docs) ++flags[d.flag];
    EXPECT_EQ(flags[DocFlag::Golden], 5);
    EXPECT_EQ(flags[DocFlag::NoisyRelated], 2);
    EXPECT_EQ(flags[DocFlag::NoisyRandom], 2);
    auto pos = s.indices_with(DocFlag::Golden);
    for (std::size_t i = 0; i < pos.size(); ++i)
      EXPECT_EQ(s.docs[static_cast<std::size_t>(pos[i] - 1)].doc.doc_id, "g" + std::to_string(i));
  }
  EXPECT_THROW(assemble_prompt_docs(golden_set(6), noise(0, 0), 1), std::invalid_argument);
  EXPECT_THROW(assemble_prompt_docs(golden_set(1), noise(3, 2), 1), std::invalid_argument);
}
