#pragma once

// Generation prompts, the generator interface and the pairwise LLM judge.

#include <cstdint>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "parag/common.hpp"
#include "parag/dataio.hpp"
#include "parag/retrieval.hpp"

namespace parag {

struct GenConfig {
  std::string endpoint;
  std::string model = "gpt-3.5-turbo-1106";
  double temperature = 1.0;
  int max_samples_per_input = 4;
  bool forward_seed = false;

  void validate() const {
    if (temperature < 0.0)
      throw std::invalid_argument("GenConfig: temperature must be >= 0");
    if (max_samples_per_input < 1)
      throw std::invalid_argument("GenConfig: max_samples_per_input must be >= 1");
  }
};

enum class PromptKind { IftWithHints, RagPlain, Judge };

struct Generation {
  std::vector<std::string> candidates;  // in generation order, nonempty
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

class Generator {
 public:
  virtual ~Generator() = default;
  // `seed` is a per-request sampling seed; remote backends forward it only
  // when cfg.forward_seed is set. Implementations must be thread-safe.
  virtual Generation generate(const std::string& prompt, const GenConfig& cfg,
                              std::uint64_t seed) = 0;
};

/// Drops empty completions and caps the count.
inline Generation finalize_generation(Generation g, const GenConfig& cfg) {
  std::erase_if(g.candidates,
                [](const std::string& s) { return detail::trim(s).empty(); });
  if (g.candidates.size() > static_cast<std::size_t>(cfg.max_samples_per_input))
    g.candidates.resize(static_cast<std::size_t>(cfg.max_samples_per_input));
  return g;
}

// ---------------------------------------------------------------------------
// Prompts

inline constexpr std::string_view kInstruction =
    "Instruction: Write an accurate, engaging, and concise answer for the given "
    "question using only the provided search results (some of which might be "
    "irrelevant) and cite them properly. Use an unbiased and journalistic tone. "
    "Always cite for any factual claim. When citing several search results, use "
    "[1][2][3]. Cite at least one document and at most three documents in each "
    "sentence. If multiple documents support the sentence, only cite a minimum "
    "sufficient subset of the documents.";

inline constexpr std::string_view kHintLead =
    "The final answer should contain the following short answers: ";

/// "A / B; C" for [["A","B"],["C"]].
inline std::string flatten_hints(
    const std::vector<std::vector<std::string>>& groups) {
  if (groups.empty())
    throw std::invalid_argument("short-answer hints must not be empty");
  std::string out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty())
      throw std::invalid_argument("answer group without aliases");
    if (g) out += "; ";
    for (std::size_t a = 0; a < groups[g].size(); ++a) {
      if (detail::trim(groups[g][a]).empty())
        throw std::invalid_argument("empty answer alias");
      if (a) out += " / ";
      out += groups[g][a];
    }
  }
  return out;
}

/// One "[i] (Title: t) text" line per document, numbered by display index.
inline std::string format_documents(std::span<const Document> docs) {
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::string text = docs[i].text;
    for (char& c : text)
      if (c == '\n' || c == '\r') c = ' ';
    out += "[" + std::to_string(i + 1) + "] (Title: " + docs[i].title + ") " +
           text + "\n";
  }
  return out;
}

namespace detail {
inline std::string assemble_prompt(const std::string& question,
                                   const std::string* hints,
                                   std::span<const Document> docs) {
  if (docs.empty()) throw std::invalid_argument("prompt needs at least one document");
  std::string out(kInstruction);
  out += "\n\nQuestion: " + question + "\n\n";
  if (hints) out += std::string(kHintLead) + *hints + "\n\n";
  out += "Documents:\n" + format_documents(docs) + "\nAnswer:";
  return out;
}
}  // namespace detail

/// Data-construction prompt with short-answer hints.
inline std::string build_ift_prompt(
    const std::string& question,
    const std::vector<std::vector<std::string>>& answer_groups,
    std::span<const Document> docs) {
  std::string hints = flatten_hints(answer_groups);
  return detail::assemble_prompt(question, &hints, docs);
}

/// Generator prompt: the hinted prompt without the short-answer sentence.
inline std::string build_rag_prompt(const std::string& question,
                                    std::span<const Document> docs) {
  return detail::assemble_prompt(question, nullptr, docs);
}

inline std::string build_ift_prompt(const QAItem& qa, const PromptDocSet& docs) {
  return build_ift_prompt(qa.question, qa.answer_groups, docs.documents());
}

inline std::string build_rag_prompt(const QAItem& qa, const PromptDocSet& docs) {
  return build_rag_prompt(qa.question, docs.documents());
}

// ---------------------------------------------------------------------------
// Pairwise judge

inline std::string build_judge_prompt(const std::string& instruction,
                                      const std::string& output_1,
                                      const std::string& output_2) {
  std::string p =
      "I want you to create a leaderboard of different of large-language "
      "models. To do so, I will give you the instructions (prompts) given to "
      "the models, and the responses of two models. Please rank the models "
      "according to the correctness of their answers and whether they make use "
      "of valuable documents and avoid being interfered with by irrelevant "
      "documents. All inputs and outputs should be python dictionaries.\n\n";
  p += "Here is the prompt: " + instruction + "\n\n";
  p += "Here are the outputs of the models:\n\n[\n";
  p += "    {\"model\": \"model_1\",\"answer\": \"" + output_1 + "\"},\n";
  p += "    {\"model\": \"model_2\",\"answer\": \"" + output_2 + "\"}\n]\n\n";
  p +=
      "Now please rank the models by the quality of their answers, so that the "
      "model with rank 1 has the best output. Then return a list of the model "
      "names and ranks, i.e., produce the following output:\n\n[\n"
      "    {'model': <model-name>, 'rank': <model-rank>},\n"
      "    {'model': <model-name>, 'rank': <model-rank>}\n]\n\n"
      "Your response must be a valid Python dictionary and should contain "
      "nothing else because we will directly execute it in Python. Please "
      "provide the ranking that the majority of humans would give.";
  return p;
}

enum class JudgeOutcome { First, Second, Tie, ParseFailure };

inline std::string_view to_string(JudgeOutcome o) {
  switch (o) {
    case JudgeOutcome::First: return "first";
    case JudgeOutcome::Second: return "second";
    case JudgeOutcome::Tie: return "tie";
    case JudgeOutcome::ParseFailure: return "parse_failure";
  }
  return "?";
}

/// Reads the judge's rank list; outcome is in model_1/model_2 terms.
inline JudgeOutcome parse_judge_reply(const std::string& reply) {
  static const std::regex entry(
      R"re(['"]model['"]\s*:\s*['"](model_[12])['"]\s*,\s*['"]rank['"]\s*:\s*(\d+))re");
  std::optional<int> r1, r2;
  for (auto it = std::sregex_iterator(reply.begin(), reply.end(), entry);
       it != std::sregex_iterator(); ++it) {
    int rank = std::stoi((*it)[2].str());
    auto& slot = (*it)[1].str() == "model_1" ? r1 : r2;
    if (slot) return JudgeOutcome::ParseFailure;
    slot = rank;
  }
  if (!r1 || !r2) return JudgeOutcome::ParseFailure;
  if (*r1 == *r2) return JudgeOutcome::Tie;
  return *r1 < *r2 ? JudgeOutcome::First : JudgeOutcome::Second;
}

/// Whether the judge sees out2 in the model_1 slot for this seed.
inline bool judge_swaps(std::uint64_t seed) {
  return SeededRng::derive(seed, "judge", "position").chance(0.5);
}

/// Ranks out1 against out2. Positions are randomized per seed and mapped
/// back, so First always means out1 won.
inline JudgeOutcome judge_pairwise(const std::string& instruction,
                                   const std::string& out1,
                                   const std::string& out2, Generator& judge,
                                   GenConfig cfg, std::uint64_t seed) {
  if (detail::trim(out1).empty() || detail::trim(out2).empty())
    throw std::invalid_argument("judge_pairwise: outputs must be nonempty");
  bool swap = judge_swaps(seed);
  cfg.max_samples_per_input = 1;
  auto gen = finalize_generation(
      judge.generate(build_judge_prompt(instruction, swap ? out2 : out1,
                                        swap ? out1 : out2),
                     cfg, seed),
      cfg);
  if (gen.candidates.empty()) return JudgeOutcome::ParseFailure;
  JudgeOutcome o = parse_judge_reply(gen.candidates.front());
  if (swap && o == JudgeOutcome::First) return JudgeOutcome::Second;
  if (swap && o == JudgeOutcome::Second) return JudgeOutcome::First;
  return o;
}

}  // namespace parag
