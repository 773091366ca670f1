#pragma once

// Data construction flows: instruction fine-tuning records and the three
// preference perspectives (informativeness, robustness, citation quality).
//
// All randomness derives from (seed, qid, purpose), questions are processed
// independently on a worker pool, and outputs keep input order, so results do
// not depend on scheduling.

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "parag/citemodel.hpp"
#include "parag/dataio.hpp"
#include "parag/genclient.hpp"
#include "parag/metrics.hpp"
#include "parag/oracle.hpp"
#include "parag/parallel.hpp"
#include "parag/retrieval.hpp"
#include "parag/rewrite.hpp"

namespace parag {

struct PipelineConfig {
  std::uint64_t seed = 42;
  int retrieval_k = 100;
  int max_golden_docs = 5;
  std::size_t noisy_per_kind = 2;  // related and random each
  int ri_deletion_retries = 8;
  bool cq_first_error_only = false;
  unsigned workers = 1;
  GenConfig constructor_gen;  // data constructor, hinted prompts
  GenConfig generator_gen;    // the generator being aligned
};

/// Backends a run uses. The oracle should normally be a CachingOracle.
struct PipelineDeps {
  Retriever& retriever;
  Generator& constructor;
  Generator& generator;
  EntailmentOracle& oracle;
};

inline constexpr std::array<std::string_view, 9> kSkipReasons = {
    "no_cover", "no_incomplete", "backend", "remap",     "quality",
    "upstream", "clean",         "infeasible", "noisy_pool"};

/// Per-stage accounting: input == kept + sum(skipped).
struct StageSummary {
  std::string stage;
  std::size_t input = 0;
  std::size_t kept = 0;     // questions that produced output
  std::size_t records = 0;  // records written (CQ may emit several per question)
  std::map<std::string, std::size_t, std::less<>> skipped;
  std::size_t oracle_calls = 0;
  std::size_t generator_calls = 0;

  std::size_t skipped_total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : skipped) n += v;
    return n;
  }
};

inline ojson to_json(const StageSummary& s) {
  ojson skipped = ojson::object();
  for (auto reason : kSkipReasons) {
    auto it = s.skipped.find(reason);
    skipped[std::string(reason)] = it == s.skipped.end() ? 0 : it->second;
  }
  ojson j = ojson::object();
  j["stage"] = s.stage;
  j["input"] = s.input;
  j["kept"] = s.kept;
  j["records"] = s.records;
  j["skipped"] = std::move(skipped);
  j["oracle_calls"] = s.oracle_calls;
  j["generator_calls"] = s.generator_calls;
  return j;
}

/// Retrieval results for a batch of questions, shared by every stage.
struct QuestionBatch {
  std::vector<QAItem> qa;
  std::vector<std::optional<RankedList>> ranked;  // nullopt: backend failed
};

inline std::uint64_t stream_seed(std::uint64_t seed, const std::string& qid,
                                 std::string_view purpose) {
  return SeededRng::derive(seed, qid, purpose).next();
}

inline QuestionBatch retrieve_batch(std::vector<QAItem> qa, Retriever& retriever,
                                    int k, unsigned workers) {
  QuestionBatch b;
  b.ranked.resize(qa.size());
  parallel_for(qa.size(), workers, [&](std::size_t i) {
    try {
      RankedList r = retriever.retrieve(qa[i].question, k);
      r.qid = qa[i].qid;
      b.ranked[i] = std::move(r);
    } catch (const BackendError&) {
    }
  });
  b.qa = std::move(qa);
  return b;
}

/// Question id -> IFT record, the chosen side of RI and RR pairs.
using ChosenIndex = std::unordered_map<std::string, IFTRecord>;

inline ChosenIndex index_chosen(std::span<const IFTRecord> records) {
  ChosenIndex idx;
  for (const auto& r : records) idx.emplace(r.qid, r);
  return idx;
}

namespace detail {

// Per-question result slot: output or a skip reason.
template <typename T>
struct Outcome {
  std::optional<T> value;
  std::string_view skip;
};

class CountingGenerator : public Generator {
 public:
  explicit CountingGenerator(Generator& inner) : inner_(inner) {}
  Generation generate(const std::string& prompt, const GenConfig& cfg,
                      std::uint64_t seed) override {
    ++calls_;
    return finalize_generation(inner_.generate(prompt, cfg, seed), cfg);
  }
  std::size_t calls() const { return calls_.load(); }

 private:
  Generator& inner_;
  std::atomic<std::size_t> calls_{0};
};

// Runs `per_question` over the batch and tallies outcomes. A stage in which
// every question hit a backend failure is a systemic failure and throws.
template <typename T, typename Fn>
std::vector<T> run_stage(const QuestionBatch& batch, unsigned workers,
                         StageSummary& summary, Fn&& per_question) {
  std::vector<Outcome<T>> slots(batch.qa.size());
  std::vector<std::string> backend_errors(batch.qa.size());
  parallel_for(batch.qa.size(), workers, [&](std::size_t i) {
    try {
      slots[i] = per_question(i);
    } catch (const BackendError& e) {
      slots[i] = {std::nullopt, "backend"};
      backend_errors[i] = e.what();
    }
  });
  summary.input += batch.qa.size();
  std::vector<T> out;
  std::size_t backend_failures = 0;
  for (auto& s : slots) {
    if (s.value) {
      ++summary.kept;
      out.push_back(std::move(*s.value));
    } else {
      ++summary.skipped[std::string(s.skip)];
      backend_failures += s.skip == "backend";
    }
  }
  if (!batch.qa.empty() && backend_failures == batch.qa.size()) {
    std::string first;
    for (const auto& e : backend_errors)
      if (!e.empty()) {
        first = e;
        break;
      }
    throw BackendError("every question failed in stage " + summary.stage +
                           (first.empty() ? "" : ": " + first),
                       false);
  }
  return out;
}

inline ojson ids_json(const std::vector<std::string>& ids) {
  ojson j = ojson::array();
  for (const auto& s : ids) j.push_back(s);
  return j;
}

inline ojson ints_json(std::span<const int> v) {
  ojson j = ojson::array();
  for (int x : v) j.push_back(x);
  return j;
}

inline std::vector<int> all_indices(std::size_t n) {
  std::vector<int> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<int>(i) + 1;
  return v;
}

inline bool markers_in_range(std::string_view text, std::size_t n) {
  for (const auto& m : find_markers(text))
    if (static_cast<std::size_t>(m.index) > n) return false;
  return true;
}

inline std::optional<PromptDocSet> golden_prompt_docs(const RankedList& ranked,
                                                      const QAItem& qa,
                                                      int max_docs) {
  auto golden = filter_golden(ranked, qa);
  if (golden.empty()) return std::nullopt;
  return select_prompt_docs(golden, qa, max_docs);
}

inline PromptDocSet golden_set_of(const IFTRecord& r) {
  PromptDocSet s;
  for (const auto& d : r.prompt_docs) s.docs.push_back({d, DocFlag::Golden});
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Instruction fine-tuning records: golden prompt documents, a hinted answer
/// from the constructor, citation rewrite, and a filter keeping only complete
/// answers whose every statement could be given an accurate citation set.
inline std::vector<IFTRecord> build_ift(const QuestionBatch& batch,
                                        PipelineDeps deps,
                                        const PipelineConfig& cfg,
                                        StageSummary& summary) {
  summary.stage = "IFT";
  CountingOracle oracle(deps.oracle);
  detail::CountingGenerator gen(deps.constructor);
  auto out = detail::run_stage<IFTRecord>(
      batch, cfg.workers, summary,
      [&](std::size_t i) -> detail::Outcome<IFTRecord> {
        const QAItem& qa = batch.qa[i];
        if (!batch.ranked[i]) return {std::nullopt, "backend"};
        auto docs = detail::golden_prompt_docs(*batch.ranked[i], qa,
                                               cfg.max_golden_docs);
        if (!docs) return {std::nullopt, "no_cover"};
        auto plain_docs = docs->documents();
        auto g = gen.generate(build_ift_prompt(qa, *docs), cfg.constructor_gen,
                              stream_seed(cfg.seed, qa.qid, "ift-generate"));
        bool remap_only = !g.candidates.empty();
        for (const auto& cand : g.candidates) {
          if (!detail::markers_in_range(cand, plain_docs.size())) continue;
          remap_only = false;
          if (!is_complete(cand, qa)) continue;
          auto rw = rewrite_response(cand, plain_docs, oracle);
          if (rw.report.has_infeasible()) continue;
          std::string output = render(rw.response);
          if (!is_complete(output, qa)) continue;
          return {IFTRecord{qa.qid, qa.question, plain_docs,
                            build_rag_prompt(qa, *docs), std::move(output)},
                  {}};
        }
        return {std::nullopt, remap_only ? "remap" : "quality"};
      });
  summary.records = out.size();
  summary.oracle_calls += oracle.queries();
  summary.generator_calls += gen.calls();
  return out;
}

/// Response-informativeness pairs. Chosen is the IFT answer on the full golden
/// set; rejected is the generator's answer after deleting golden documents so
/// that some answer group is no longer covered, kept only when incomplete and
/// renumbered back to the full set's numbering.
inline std::vector<PreferencePair> build_ri(const QuestionBatch& batch,
                                            const ChosenIndex& chosen,
                                            PipelineDeps deps,
                                            const PipelineConfig& cfg,
                                            StageSummary& summary) {
  summary.stage = "RI";
  detail::CountingGenerator gen(deps.generator);
  auto out = detail::run_stage<PreferencePair>(
      batch, cfg.workers, summary,
      [&](std::size_t i) -> detail::Outcome<PreferencePair> {
        const QAItem& qa = batch.qa[i];
        auto it = chosen.find(qa.qid);
        if (it == chosen.end()) return {std::nullopt, "upstream"};
        const IFTRecord& rec = it->second;
        const std::size_t n = rec.prompt_docs.size();
        if (n < 2 || n > 62) return {std::nullopt, "no_incomplete"};

        // Delete a random nonempty proper subset that uncovers some group.
        auto rng = SeededRng::derive(cfg.seed, qa.qid, "ri-delete");
        std::optional<std::vector<int>> kept;
        const std::uint64_t full = (std::uint64_t{1} << n) - 1;
        for (int attempt = 0; attempt < cfg.ri_deletion_retries && !kept; ++attempt) {
          std::uint64_t removed = 1 + rng.below(full - 1);  // 1 .. full-1
          std::vector<int> keep;
          std::string surface;
          for (std::size_t d = 0; d < n; ++d)
            if (!(removed >> d & 1)) {
              keep.push_back(static_cast<int>(d) + 1);
              surface += detail::doc_surface(rec.prompt_docs[d]) + "\n";
            }
          if (!is_complete(surface, qa)) kept = std::move(keep);
        }
        if (!kept) return {std::nullopt, "no_incomplete"};

        std::vector<Document> kept_docs;
        for (int k : *kept) kept_docs.push_back(rec.prompt_docs[static_cast<std::size_t>(k - 1)]);
        IndexMapping mapping = build_mapping(*kept);
        auto g = gen.generate(build_rag_prompt(qa.question, kept_docs),
                              cfg.generator_gen,
                              stream_seed(cfg.seed, qa.qid, "ri-generate"));
        bool remap_only = !g.candidates.empty();
        for (const auto& cand : g.candidates) {
          std::string restored;
          try {
            restored = remap_citations(cand, mapping, MapDirection::Inverse);
          } catch (const CitationIndexError&) {
            continue;
          }
          remap_only = false;
          if (!is_incomplete(restored, qa) || restored == rec.output) continue;
          PreferencePair p;
          p.qid = qa.qid;
          p.perspective = Perspective::RI;
          p.prompt = rec.prompt;
          p.chosen = rec.output;
          p.rejected = std::move(restored);
          std::vector<std::string> ids;
          for (const auto& d : rec.prompt_docs) ids.push_back(d.doc_id);
          ojson map = ojson::object();
          for (std::size_t k = 0; k < mapping.size(); ++k)
            map[std::to_string(k + 1)] = mapping.kept()[k];
          p.meta["doc_ids"] = detail::ids_json(ids);
          p.meta["kept_indices"] = detail::ints_json(*kept);
          p.meta["new_to_old"] = std::move(map);
          p.meta["rejected_em"] = em_recall(p.rejected, qa);
          return {std::move(p), {}};
        }
        return {std::nullopt, remap_only ? "remap" : "no_incomplete"};
      });
  summary.records = out.size();
  summary.generator_calls += gen.calls();
  return out;
}

/// Response-robustness pairs. The prompt mixes the golden documents with two
/// related and two random answer-free documents; chosen is the IFT answer
/// renumbered onto the golden positions, rejected an incomplete generator
/// answer on the mixed prompt.
inline std::vector<PreferencePair> build_rr(const QuestionBatch& batch,
                                            const ChosenIndex& chosen,
                                            PipelineDeps deps,
                                            const PipelineConfig& cfg,
                                            StageSummary& summary) {
  summary.stage = "RR";
  detail::CountingGenerator gen(deps.generator);

  // Every question's retrieved documents, tagged with their owner.
  std::vector<std::pair<std::size_t, const Document*>> pool;
  for (std::size_t q = 0; q < batch.ranked.size(); ++q)
    if (batch.ranked[q])
      for (const auto& r : batch.ranked[q]->docs) pool.emplace_back(q, &r.doc);

  auto out = detail::run_stage<PreferencePair>(
      batch, cfg.workers, summary,
      [&](std::size_t i) -> detail::Outcome<PreferencePair> {
        const QAItem& qa = batch.qa[i];
        auto it = chosen.find(qa.qid);
        if (it == chosen.end()) return {std::nullopt, "upstream"};
        if (!batch.ranked[i]) return {std::nullopt, "backend"};
        const IFTRecord& rec = it->second;
        PromptDocSet golden = detail::golden_set_of(rec);

        std::vector<Document> others;
        for (const auto& [owner, doc] : pool)
          if (owner != i) others.push_back(*doc);
        auto noisy = sample_noisy(*batch.ranked[i], others, qa, rec.prompt_docs,
                                  stream_seed(cfg.seed, qa.qid, "rr-noisy"),
                                  cfg.noisy_per_kind);
        if (!noisy) return {std::nullopt, "noisy_pool"};
        PromptDocSet mixed = assemble_prompt_docs(
            golden, *noisy, stream_seed(cfg.seed, qa.qid, "rr-mix"));
        auto golden_pos = mixed.indices_with(DocFlag::Golden);
        IndexMapping mapping = build_mapping(golden_pos);
        std::string chosen_text;
        try {
          chosen_text = remap_citations(rec.output, mapping, MapDirection::Inverse);
        } catch (const CitationIndexError&) {
          return {std::nullopt, "remap"};
        }

        std::string prompt = build_rag_prompt(qa, mixed);
        auto g = gen.generate(prompt, cfg.generator_gen,
                              stream_seed(cfg.seed, qa.qid, "rr-generate"));
        bool remap_only = !g.candidates.empty();
        for (const auto& cand : g.candidates) {
          if (!detail::markers_in_range(cand, mixed.size())) continue;
          remap_only = false;
          if (!is_incomplete(cand, qa) || cand == chosen_text) continue;
          PreferencePair p;
          p.qid = qa.qid;
          p.perspective = Perspective::RR;
          p.prompt = std::move(prompt);
          p.chosen = std::move(chosen_text);
          p.rejected = cand;
          ojson flags = ojson::array();
          for (const auto& d : mixed.docs) flags.push_back(std::string(to_string(d.flag)));
          p.meta["doc_ids"] = detail::ids_json(mixed.ids());
          p.meta["doc_flags"] = std::move(flags);
          p.meta["golden_positions"] = detail::ints_json(golden_pos);
          p.meta["rejected_em"] = em_recall(p.rejected, qa);
          return {std::move(p), {}};
        }
        return {std::nullopt, remap_only ? "remap" : "no_incomplete"};
      });
  summary.records = out.size();
  summary.generator_calls += gen.calls();
  return out;
}

/// Citation-quality pairs. A complete generator answer on the golden prompt is
/// rewritten; every statement whose citations were wrong yields one pair whose
/// prompt runs up to that statement's citation, with the original marker run
/// rejected and the rewritten one chosen.
inline std::vector<PreferencePair> build_cq(const QuestionBatch& batch,
                                            PipelineDeps deps,
                                            const PipelineConfig& cfg,
                                            StageSummary& summary) {
  summary.stage = "CQ";
  CountingOracle oracle(deps.oracle);
  detail::CountingGenerator gen(deps.generator);
  auto grouped = detail::run_stage<std::vector<PreferencePair>>(
      batch, cfg.workers, summary,
      [&](std::size_t i) -> detail::Outcome<std::vector<PreferencePair>> {
        const QAItem& qa = batch.qa[i];
        if (!batch.ranked[i]) return {std::nullopt, "backend"};
        auto docs = detail::golden_prompt_docs(*batch.ranked[i], qa,
                                               cfg.max_golden_docs);
        if (!docs) return {std::nullopt, "no_cover"};
        auto plain_docs = docs->documents();
        std::string prompt = build_rag_prompt(qa, *docs);
        auto g = gen.generate(prompt, cfg.generator_gen,
                              stream_seed(cfg.seed, qa.qid, "cq-generate"));
        const std::string* response = nullptr;
        bool remap_only = !g.candidates.empty();
        for (const auto& cand : g.candidates) {
          if (!detail::markers_in_range(cand, plain_docs.size())) continue;
          remap_only = false;
          if (is_complete(cand, qa)) {
            response = &cand;
            break;
          }
        }
        if (!response) return {std::nullopt, remap_only ? "remap" : "quality"};

        ParsedResponse parsed = parse_response(*response);
        auto rw = rewrite_response(parsed, plain_docs, oracle);
        std::vector<PreferencePair> pairs;
        bool any_infeasible = false;
        std::string prefix;
        for (std::size_t s = 0; s < parsed.statements.size(); ++s) {
          const Statement& orig = parsed.statements[s];
          const auto& outcome = rw.report.outcomes[s];
          if (std::holds_alternative<Infeasible>(outcome)) any_infeasible = true;
          if (rw.report.needs_fix(s) && !std::holds_alternative<Infeasible>(outcome) &&
              !(cfg.cq_first_error_only && !pairs.empty())) {
            std::string_view src = parsed.source(orig);
            const auto& fixed = rw.response.statements[s].citations;
            PreferencePair p;
            p.qid = qa.qid;
            p.perspective = Perspective::CQ;
            p.prompt = prompt + " " + prefix + std::string(src.substr(0, citation_cut(src)));
            p.rejected = marker_run(orig.citations);
            p.chosen = marker_run(fixed);
            p.meta["doc_ids"] = detail::ids_json(docs->ids());
            p.meta["statement_index"] = s;
            p.meta["claim"] = orig.claim;
            p.meta["error"] = std::holds_alternative<Constructed>(outcome)
                                  ? "unsupported"
                                  : "irrelevant";
            p.meta["premise_chars"] =
                fixed.empty() ? 0 : build_premise(plain_docs, fixed).size();
            pairs.push_back(std::move(p));
          }
          prefix += render_statement(rw.response, rw.response.statements[s]);
        }
        if (pairs.empty())
          return {std::nullopt, any_infeasible ? "infeasible" : "clean"};
        return {std::move(pairs), {}};
      });
  std::vector<PreferencePair> out;
  for (auto& v : grouped)
    for (auto& p : v) out.push_back(std::move(p));
  summary.records = out.size();
  summary.oracle_calls += oracle.queries();
  summary.generator_calls += gen.calls();
  return out;
}

// ---------------------------------------------------------------------------

struct StageProducts {
  std::vector<IFTRecord> ift;
  std::vector<PreferencePair> ri;
  std::vector<PreferencePair> rr;
  std::vector<PreferencePair> cq;
  std::vector<StageSummary> summaries;
};

/// All four flows over one batch, in stage order.
inline StageProducts build_all(std::vector<QAItem> qa, PipelineDeps deps,
                               const PipelineConfig& cfg) {
  StageProducts p;
  QuestionBatch batch =
      retrieve_batch(std::move(qa), deps.retriever, cfg.retrieval_k, cfg.workers);
  p.summaries.resize(4);
  p.ift = build_ift(batch, deps, cfg, p.summaries[0]);
  ChosenIndex chosen = index_chosen(p.ift);
  p.ri = build_ri(batch, chosen, deps, cfg, p.summaries[1]);
  p.rr = build_rr(batch, chosen, deps, cfg, p.summaries[2]);
  p.cq = build_cq(batch, deps, cfg, p.summaries[3]);
  return p;
}

/// Writes ift/ri/rr/cq JSONL and manifest.json in stage order IFT, RI, RR, CQ.
inline std::vector<fs::path> emit_stage_bundle(
    const StageProducts& products, const fs::path& out_dir,
    const StageManifest& manifest = StageManifest::defaults()) {
  std::vector<fs::path> files;
  files.push_back(export_stage(products.ift, manifest, out_dir).front());
  files.push_back(export_stage(Perspective::RI, products.ri, manifest, out_dir).front());
  files.push_back(export_stage(Perspective::RR, products.rr, manifest, out_dir).front());
  files.push_back(export_stage(Perspective::CQ, products.cq, manifest, out_dir).front());
  files.push_back(out_dir / "manifest.json");
  return files;
}

inline fs::path write_summary(std::span<const StageSummary> summaries,
                              const fs::path& path) {
  ojson j = ojson::object();
  for (const auto& s : summaries) j[s.stage] = to_json(s);
  write_text_file(path, j.dump(2) + "\n");
  return path;
}

}  // namespace parag
