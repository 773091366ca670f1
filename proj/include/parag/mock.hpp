#pragma once

// Offline generator and judge backends. They read the prompts built by
// genclient.hpp, so the full pipeline runs without any service.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "parag/citemodel.hpp"
#include "parag/common.hpp"
#include "parag/genclient.hpp"
#include "parag/metrics.hpp"
#include "parag/oracle.hpp"

namespace parag {

/// What a mock recovers from a prompt built by build_ift_prompt or
/// build_rag_prompt.
struct PromptView {
  std::string question;
  std::optional<std::vector<std::vector<std::string>>> hints;
  std::vector<std::string> doc_texts;  // display index i is doc_texts[i-1]
};

inline PromptView parse_prompt(std::string_view prompt) {
  PromptView v;
  bool in_docs = false;
  detail::for_each_line(prompt, [&](std::string_view line, std::size_t) {
    if (line.starts_with("Question: ")) {
      v.question = std::string(line.substr(10));
    } else if (line.starts_with(kHintLead)) {
      std::vector<std::vector<std::string>> groups;
      std::string_view rest = line.substr(kHintLead.size());
      while (true) {
        std::size_t semi = rest.find("; ");
        std::string_view g = rest.substr(0, semi);
        std::vector<std::string> aliases;
        while (true) {
          std::size_t slash = g.find(" / ");
          aliases.emplace_back(g.substr(0, slash));
          if (slash == std::string_view::npos) break;
          g = g.substr(slash + 3);
        }
        groups.push_back(std::move(aliases));
        if (semi == std::string_view::npos) break;
        rest = rest.substr(semi + 2);
      }
      v.hints = std::move(groups);
    } else if (line == "Documents:") {
      in_docs = true;
    } else if (in_docs) {
      if (line.empty() || line == "Answer:") {
        in_docs = false;
        return;
      }
      // "[i] (Title: t) text"
      std::size_t close = line.find(") ");
      if (line.starts_with("[") && close != std::string_view::npos)
        v.doc_texts.emplace_back(line.substr(close + 2));
    }
  });
  return v;
}

/// How often the mock generator cites badly, and how much of the document set
/// it uses when answering without hints.
struct MockProfile {
  double miscite_rate = 0.4;
  double doc_use_rate = 0.7;
};

/// Answers by copying document sentences.
///
/// With hints, one sentence per answer group, taken from the first document
/// that mentions an alias. Without hints, the sentence most similar to the
/// question from a random subset of the documents. Each sentence cites its
/// source, but with probability `miscite_rate` the citation is replaced by a
/// wrong document, padded with an extra document, or dropped. Output depends
/// only on (prompt, seed, sample index, salt).
class ExtractiveMockGenerator : public Generator {
 public:
  explicit ExtractiveMockGenerator(MockProfile profile = {}, std::uint64_t salt = 0)
      : profile_(profile), salt_(salt) {}

  Generation generate(const std::string& prompt, const GenConfig& cfg,
                      std::uint64_t seed) override {
    cfg.validate();
    PromptView view = parse_prompt(prompt);
    Generation g;
    g.prompt_tokens = detail::word_tokens(prompt).size();
    for (int s = 0; s < cfg.max_samples_per_input; ++s) {
      auto rng = SeededRng::derive(detail::mix(seed, salt_), prompt,
                                   "sample-" + std::to_string(s));
      std::string answer = answer_once(view, rng);
      g.completion_tokens += detail::word_tokens(answer).size();
      g.candidates.push_back(std::move(answer));
    }
    return finalize_generation(std::move(g), cfg);
  }

 private:
  struct Pick {
    std::size_t doc;  // 0-based
    std::string sentence;
  };

  static std::vector<std::string> sentences(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& st : parse_response(text).statements) out.push_back(st.claim);
    return out;
  }

  std::string answer_once(const PromptView& v, SeededRng& rng) const {
    std::vector<Pick> picks;
    auto add = [&](std::size_t d, std::string s) {
      for (const auto& p : picks)
        if (p.sentence == s) return;
      picks.push_back({d, std::move(s)});
    };
    const std::size_t n = v.doc_texts.size();
    if (n == 0) return {};

    if (v.hints) {
      for (const auto& group : *v.hints) {
        QAItem probe{"", "", {group}};
        bool found = false;
        for (std::size_t d = 0; d < n && !found; ++d)
          for (auto& s : sentences(v.doc_texts[d]))
            if (is_complete(s, probe)) {
              add(d, std::move(s));
              found = true;
              break;
            }
      }
    } else {
      auto q = detail::content_words(v.question);
      std::set<std::string> qwords(q.begin(), q.end());
      std::vector<std::size_t> used;
      for (std::size_t d = 0; d < n; ++d)
        if (rng.chance(profile_.doc_use_rate)) used.push_back(d);
      if (used.empty()) used.push_back(static_cast<std::size_t>(rng.below(n)));
      for (std::size_t d : used) {
        std::string best;
        std::size_t best_overlap = 0;
        for (auto& s : sentences(v.doc_texts[d])) {
          std::size_t overlap = 0;
          for (const auto& w : detail::content_words(s)) overlap += qwords.count(w);
          if (best.empty() || overlap > best_overlap) {
            best = std::move(s);
            best_overlap = overlap;
          }
        }
        if (!best.empty()) add(d, std::move(best));
      }
    }

    std::string out;
    for (const auto& p : picks) {
      std::string body = p.sentence;
      while (!body.empty() && detail::is_terminal(body.back())) body.pop_back();
      std::vector<int> cites = {static_cast<int>(p.doc) + 1};
      if (n > 1 && rng.chance(profile_.miscite_rate)) {
        int other = static_cast<int>(rng.below(n - 1)) + 1;
        if (other >= cites[0]) ++other;
        switch (rng.below(3)) {
          case 0: cites = {other}; break;
          case 1:
            cites.push_back(other);
            std::sort(cites.begin(), cites.end());
            break;
          default: cites.clear(); break;
        }
      }
      if (!out.empty()) out += ' ';
      out += body + marker_run(cites) + ".";
    }
    return out;
  }

  MockProfile profile_;
  std::uint64_t salt_;
};

/// Judge stand-in: prefers the answer covering more distinct cited documents,
/// then the longer one; exact ties go to model_1.
class MockJudge : public Generator {
 public:
  Generation generate(const std::string& prompt, const GenConfig&,
                      std::uint64_t) override {
    auto answer = [&](std::string_view model) -> std::string {
      std::string key = "{\"model\": \"" + std::string(model) + "\",\"answer\": \"";
      std::size_t b = prompt.find(key);
      if (b == std::string::npos) return {};
      b += key.size();
      std::size_t e = prompt.find("\"},\n", b);
      if (e == std::string::npos) e = prompt.find("\"}\n]", b);
      return prompt.substr(b, e == std::string::npos ? std::string::npos : e - b);
    };
    std::string a1 = answer("model_1"), a2 = answer("model_2");
    auto key = [](const std::string& a) {
      return std::make_pair(citation_set(a).size(), a.size());
    };
    bool second_wins = key(a2) > key(a1);
    Generation g;
    g.candidates.push_back(
        std::string("[{'model': 'model_1', 'rank': ") + (second_wins ? "2" : "1") +
        "}, {'model': 'model_2', 'rank': " + (second_wins ? "1" : "2") + "}]");
    return g;
  }
};

}  // namespace parag
