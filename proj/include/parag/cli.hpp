#pragma once

// Command-line front end. run() returns the process exit code:
// 0 success, 1 usage or input error, 2 backend failure.

#include <cctype>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "parag/dataio.hpp"
#include "parag/genclient.hpp"
#include "parag/http.hpp"
#include "parag/metrics.hpp"
#include "parag/mock.hpp"
#include "parag/oracle.hpp"
#include "parag/parallel.hpp"
#include "parag/pipelines.hpp"
#include "parag/retrieval.hpp"

namespace parag {

// ---------------------------------------------------------------------------
// Stats

struct FileStats {
  std::string file;
  std::size_t records = 0;
  std::size_t claims = 0;
  std::map<std::size_t, std::size_t> citations_per_claim;
  std::map<std::string, std::size_t> answer_coverage;  // "hit/groups"
  std::size_t coverage_rows = 0;
};

namespace detail {

inline ojson percent_hist(const auto& counts, std::size_t total) {
  ojson j = ojson::object();
  for (const auto& [k, v] : counts) {
    std::string key;
    if constexpr (std::is_same_v<std::decay_t<decltype(k)>, std::string>)
      key = k;
    else
      key = std::to_string(k);
    j[key] = total ? round2(100.0 * static_cast<double>(v) / static_cast<double>(total)) : 0.0;
  }
  return j;
}

}  // namespace detail

/// Citation complexity and answer coverage of an IFT, pair or response file.
/// IFT and response records contribute their output; pairs contribute the
/// chosen side (a CQ chosen marker run counts as one claim).
inline FileStats compute_stats(const fs::path& path,
                               const std::unordered_map<std::string, QAItem>* qa) {
  FileStats s;
  s.file = path.string();
  for_each_jsonl(path, [&](const ojson& j, std::size_t) {
    ++s.records;
    std::string text;
    bool marker_only = false;
    if (j.contains("perspective")) {
      text = j.at("chosen").get<std::string>();
      marker_only = j.at("perspective").get<std::string>() == "CQ";
    } else {
      text = j.at("output").get<std::string>();
    }
    if (marker_only) {
      ++s.claims;
      ++s.citations_per_claim[citation_set(text).size()];
      return;
    }
    for (const auto& st : parse_response(text).statements) {
      ++s.claims;
      ++s.citations_per_claim[st.citations.size()];
    }
    if (qa) {
      auto it = qa->find(j.at("id").get<std::string>());
      if (it == qa->end()) return;
      auto hits = answer_hits(text, it->second);
      std::size_t n = 0;
      for (bool h : hits) n += h;
      ++s.answer_coverage[std::to_string(n) + "/" + std::to_string(hits.size())];
      ++s.coverage_rows;
    }
  });
  return s;
}

inline ojson to_json(const FileStats& s, bool with_coverage) {
  ojson j = ojson::object();
  j["file"] = s.file;
  j["records"] = s.records;
  j["claims"] = s.claims;
  j["citations_per_claim"] = detail::percent_hist(s.citations_per_claim, s.claims);
  if (with_coverage)
    j["answer_coverage"] = detail::percent_hist(s.answer_coverage, s.coverage_rows);
  return j;
}

// ---------------------------------------------------------------------------
// Backends

struct BackendFlags {
  bool mock = false;
  std::string generator_url;
  std::string nli_url;
  std::string retriever_url;
  std::string api_key;
  std::string model = GenConfig{}.model;
  double temperature = GenConfig{}.temperature;
  int samples = GenConfig{}.max_samples_per_input;
  bool forward_seed = false;
  int timeout = 60;
  int retries = 3;
};

struct Backends {
  std::unique_ptr<Retriever> retriever;
  std::unique_ptr<Generator> constructor;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<Generator> judge;
  std::unique_ptr<EntailmentOracle> oracle_backend;
  std::unique_ptr<CachingOracle> oracle;
  GenConfig gen;
};

namespace detail {
inline std::string env_or(const std::string& flag, const char* name) {
  if (!flag.empty()) return flag;
  const char* v = std::getenv(name);
  return v ? v : "";
}

class UsageError : public Error {
 public:
  using Error::Error;
};
}  // namespace detail

inline Backends make_backends(BackendFlags f, const Corpus* corpus,
                              bool need_retriever, bool need_generator) {
  f.generator_url = detail::env_or(f.generator_url, "GENERATOR_URL");
  f.nli_url = detail::env_or(f.nli_url, "NLI_URL");
  f.retriever_url = detail::env_or(f.retriever_url, "RETRIEVER_URL");
  f.api_key = detail::env_or(f.api_key, "API_KEY");

  Backends b;
  b.gen.endpoint = f.generator_url;
  b.gen.model = f.model;
  b.gen.temperature = f.temperature;
  b.gen.max_samples_per_input = f.samples;
  b.gen.forward_seed = f.forward_seed;
  b.gen.validate();

  HttpOptions http;
  http.timeout_seconds = f.timeout;
  http.retries = f.retries;

  if (need_retriever) {
    if (!f.mock && !f.retriever_url.empty()) {
      b.retriever = std::make_unique<RemoteRetriever>(f.retriever_url, http);
    } else if (corpus) {
      b.retriever = std::make_unique<LexicalRetriever>(*corpus);
    } else {
      throw detail::UsageError("--corpus or --retriever-url is required");
    }
  }

  if (f.mock) {
    b.oracle_backend = std::make_unique<MockOracle>();
    b.constructor = std::make_unique<ExtractiveMockGenerator>(
        MockProfile{}, detail::fnv1a("constructor"));
    b.generator = std::make_unique<ExtractiveMockGenerator>(
        MockProfile{}, detail::fnv1a("generator"));
    b.judge = std::make_unique<MockJudge>();
  } else {
    if (f.nli_url.empty())
      throw detail::UsageError("--nli-url (or NLI_URL) is required without --mock");
    b.oracle_backend = std::make_unique<RemoteOracle>(f.nli_url, http);
    if (need_generator) {
      if (f.generator_url.empty())
        throw detail::UsageError(
            "--generator-url (or GENERATOR_URL) is required without --mock");
      HttpOptions gh = http;
      gh.bearer_token = f.api_key;
      b.constructor = std::make_unique<RemoteGenerator>(gh);
      b.generator = std::make_unique<RemoteGenerator>(gh);
      b.judge = std::make_unique<RemoteGenerator>(gh);
    }
  }
  b.oracle = std::make_unique<CachingOracle>(*b.oracle_backend);
  return b;
}

// ---------------------------------------------------------------------------
// Subcommands

namespace detail {

inline std::unordered_map<std::string, QAItem> qa_index(const std::vector<QAItem>& items) {
  std::unordered_map<std::string, QAItem> idx;
  for (const auto& q : items) idx.emplace(q.qid, q);
  return idx;
}

inline std::vector<QAItem> load_questions(const std::string& path, std::ostream& err) {
  QALoad load = load_qa(path);
  for (std::size_t line : load.skipped_lines)
    err << "warning: " << path << ": line " << line << " has no answers, skipped\n";
  return std::move(load.items);
}

// Eval inputs: {"id","output","docs":[{"id","title","text"}...]} per line, or
// "doc_ids" resolved against a corpus.
inline std::vector<EvalInput> load_responses(const fs::path& path, const Corpus* corpus) {
  std::vector<EvalInput> out;
  for_each_jsonl(path, [&](const ojson& j, std::size_t n) {
    EvalInput in;
    in.qid = j.at("id").get<std::string>();
    in.output = j.at("output").get<std::string>();
    if (j.contains("docs")) {
      for (const auto& d : j.at("docs")) in.docs.push_back(document_from_json(d));
    } else if (j.contains("doc_ids") && corpus) {
      for (const auto& id : j.at("doc_ids")) {
        const Document* d = corpus->find(id.get<std::string>());
        if (!d)
          throw ParseError("unknown doc id '" + id.get<std::string>() + "' at line " +
                               std::to_string(n),
                           n);
        in.docs.push_back(*d);
      }
    } else {
      throw ParseError("record at line " + std::to_string(n) +
                           " has neither 'docs' nor resolvable 'doc_ids'",
                       n);
    }
    out.push_back(std::move(in));
  });
  return out;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Citation-aware RAG alignment data construction and evaluation", "parag"};
  app.require_subcommand(1, 1);

  std::uint64_t seed = 42;
  unsigned workers = default_workers();
  int k = 100;
  BackendFlags bf;
  bool cq_first_only = false;

  auto shared = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Global seed")->capture_default_str();
    sub->add_flag("--mock", bf.mock, "Use offline deterministic backends");
    sub->add_option("--workers", workers, "Worker threads")
        ->check(CLI::Range(1u, 256u))
        ->capture_default_str();
    sub->add_option("--generator-url", bf.generator_url,
                    "Chat-completion base URL (env GENERATOR_URL)");
    sub->add_option("--nli-url", bf.nli_url, "Entailment service URL (env NLI_URL)");
    sub->add_option("--retriever-url", bf.retriever_url,
                    "Retrieval service URL (env RETRIEVER_URL)");
    sub->add_option("--model", bf.model, "Generator model name")->capture_default_str();
    sub->add_option("--temperature", bf.temperature)->capture_default_str();
    sub->add_option("--samples", bf.samples, "Samples per prompt")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_flag("--forward-seed", bf.forward_seed, "Send the sampling seed upstream");
    sub->add_option("--timeout", bf.timeout, "HTTP timeout in seconds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--retries", bf.retries, "HTTP retries")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
  };

  std::string qa_path, corpus_path, out_dir, ift_path, perspective_s;

  auto* ift_cmd = app.add_subcommand("build-ift", "Build instruction fine-tuning records");
  auto* pref_cmd = app.add_subcommand("build-pref", "Build one preference perspective");
  auto* all_cmd = app.add_subcommand("build-all", "Build IFT and all preference data");
  for (auto* sub : {ift_cmd, pref_cmd, all_cmd}) {
    shared(sub);
    sub->add_option("--qa", qa_path, "Questions JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--corpus", corpus_path, "Passages TSV")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--k", k, "Documents retrieved per question")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
  for (auto* sub : {pref_cmd, all_cmd})
    sub->add_flag("--cq-first-error-only", cq_first_only,
                  "Emit at most one citation-quality pair per response");
  pref_cmd->add_option("--perspective", perspective_s, "ri, rr or cq")
      ->required()
      ->check(CLI::IsMember({"ri", "rr", "cq", "RI", "RR", "CQ"}));
  pref_cmd->add_option("--ift", ift_path, "IFT records (required for ri and rr)")
      ->check(CLI::ExistingFile);

  std::string responses_path, report_path, baseline_path;
  auto* eval_cmd = app.add_subcommand("eval", "Score responses for correctness and citations");
  shared(eval_cmd);
  eval_cmd->add_option("--qa", qa_path, "Questions JSONL")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--responses", responses_path, "Responses JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", corpus_path, "Passages TSV for doc_ids")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", report_path, "Report path (stdout if omitted)");
  eval_cmd->add_option("--judge-baseline", baseline_path,
                       "Baseline responses for pairwise judging")
      ->check(CLI::ExistingFile);

  std::vector<std::string> stat_files;
  auto* stats_cmd = app.add_subcommand("stats", "Citation and coverage distributions");
  stats_cmd->add_option("files", stat_files, "JSONL files")->required()->check(CLI::ExistingFile);
  stats_cmd->add_option("--qa", qa_path, "Questions JSONL for coverage")
      ->check(CLI::ExistingFile);
  stats_cmd->add_option("--out", report_path, "Report path (stdout if omitted)");

  std::vector<std::string> overrides;
  auto* manifest_cmd = app.add_subcommand("export-manifest", "Write the training manifest");
  manifest_cmd->add_option("--out", out_dir, "Output directory")->required();
  manifest_cmd->add_option("--set", overrides, "STAGE.field=value")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  auto emit = [&](const ojson& j, const std::string& path) {
    std::string text = j.dump(2) + "\n";
    if (path.empty())
      out << text;
    else
      write_text_file(path, text);
  };

  try {
    if (manifest_cmd->parsed()) {
      StageManifest m = StageManifest::defaults();
      for (const auto& o : overrides) {
        auto dot = o.find('.');
        auto eq = o.find('=');
        if (dot == std::string::npos || eq == std::string::npos || eq < dot)
          throw detail::UsageError("--set expects STAGE.field=value, got '" + o + "'");
        m.set(o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1));
      }
      out << write_manifest(m, out_dir).string() << "\n";
      return 0;
    }

    if (stats_cmd->parsed()) {
      std::optional<std::unordered_map<std::string, QAItem>> idx;
      if (!qa_path.empty()) idx = detail::qa_index(detail::load_questions(qa_path, err));
      ojson files = ojson::array();
      for (const auto& f : stat_files)
        files.push_back(to_json(compute_stats(f, idx ? &*idx : nullptr), idx.has_value()));
      ojson j = ojson::object();
      j["files"] = std::move(files);
      emit(j, report_path);
      return 0;
    }

    if (eval_cmd->parsed()) {
      auto questions = detail::load_questions(qa_path, err);
      auto idx = detail::qa_index(questions);
      std::optional<Corpus> corpus;
      if (!corpus_path.empty()) corpus = load_corpus(corpus_path);
      auto responses = detail::load_responses(responses_path, corpus ? &*corpus : nullptr);
      Backends b = make_backends(bf, nullptr, false, !baseline_path.empty());
      EvalReport rep = evaluate(responses, idx, *b.oracle, workers);
      ojson j = to_json(rep);
      if (!baseline_path.empty()) {
        auto baseline = detail::load_responses(baseline_path, corpus ? &*corpus : nullptr);
        std::unordered_map<std::string, const EvalInput*> base_by_id;
        for (const auto& r : baseline) base_by_id.emplace(r.qid, &r);
        std::vector<std::optional<JudgeOutcome>> outcomes(responses.size());
        GenConfig jcfg = b.gen;
        parallel_for(responses.size(), workers, [&](std::size_t i) {
          auto it = base_by_id.find(responses[i].qid);
          auto q = idx.find(responses[i].qid);
          if (it == base_by_id.end() || q == idx.end()) return;
          if (detail::trim(responses[i].output).empty() ||
              detail::trim(it->second->output).empty())
            return;
          outcomes[i] = judge_pairwise(q->second.question, responses[i].output,
                                       it->second->output, *b.judge, jcfg,
                                       stream_seed(seed, responses[i].qid, "judge"));
        });
        std::map<std::string, std::size_t> tally{
            {"wins", 0}, {"ties", 0}, {"losses", 0}, {"parse_failures", 0}, {"unpaired", 0}};
        for (const auto& o : outcomes) {
          if (!o) ++tally["unpaired"];
          else if (*o == JudgeOutcome::First) ++tally["wins"];
          else if (*o == JudgeOutcome::Second) ++tally["losses"];
          else if (*o == JudgeOutcome::Tie) ++tally["ties"];
          else ++tally["parse_failures"];
        }
        ojson jj = ojson::object();
        for (const char* key : {"wins", "ties", "losses", "parse_failures", "unpaired"})
          jj[key] = tally[key];
        j["judge"] = std::move(jj);
      }
      emit(j, report_path);
      return 0;
    }

    // Construction subcommands.
    auto questions = detail::load_questions(qa_path, err);
    std::optional<Corpus> corpus;
    if (!corpus_path.empty()) corpus = load_corpus(corpus_path);
    Backends b = make_backends(bf, corpus ? &*corpus : nullptr, true, true);

    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.retrieval_k = k;
    cfg.workers = workers;
    cfg.cq_first_error_only = cq_first_only;
    cfg.constructor_gen = b.gen;
    cfg.generator_gen = b.gen;
    PipelineDeps deps{*b.retriever, *b.constructor, *b.generator, *b.oracle};
    const StageManifest manifest = StageManifest::defaults();
    const fs::path dir(out_dir);

    if (all_cmd->parsed()) {
      StageProducts p = build_all(std::move(questions), deps, cfg);
      emit_stage_bundle(p, dir, manifest);
      write_summary(p.summaries, dir / "summary.json");
      for (const auto& s : p.summaries)
        err << s.stage << ": kept " << s.kept << "/" << s.input << ", records "
            << s.records << "\n";
      return 0;
    }

    QuestionBatch batch = retrieve_batch(std::move(questions), *b.retriever, k, workers);
    StageSummary summary;
    if (ift_cmd->parsed()) {
      auto records = build_ift(batch, deps, cfg, summary);
      export_stage(records, manifest, dir);
    } else {
      std::string upper = perspective_s;
      for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      Perspective persp = *parse_perspective(upper);
      std::vector<PreferencePair> pairs;
      if (persp == Perspective::CQ) {
        pairs = build_cq(batch, deps, cfg, summary);
      } else {
        if (ift_path.empty())
          throw detail::UsageError("--ift is required for --perspective " + perspective_s);
        auto ift = read_ift(ift_path);
        ChosenIndex chosen = index_chosen(ift);
        pairs = persp == Perspective::RI ? build_ri(batch, chosen, deps, cfg, summary)
                                         : build_rr(batch, chosen, deps, cfg, summary);
      }
      export_stage(persp, pairs, manifest, dir);
    }
    std::string name = detail::to_lower_ascii(summary.stage);
    write_summary(std::span<const StageSummary>(&summary, 1),
                  dir / (name + "_summary.json"));
    err << summary.stage << ": kept " << summary.kept << "/" << summary.input
        << ", records " << summary.records << "\n";
    return 0;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return 2;
  } catch (const detail::UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace parag
