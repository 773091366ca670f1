#pragma once

// Domain records, dataset loaders and the JSONL/JSON writers for every data
// product. Output files are UTF-8, one compact object per line, keys in a fixed
// order, so identical inputs give byte-identical files.

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "parag/common.hpp"

namespace parag {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;

  friend bool operator==(const Document&, const Document&) = default;
};

/// A question with its short answers. Each group is one answer; any alias in
/// the group satisfies it.
struct QAItem {
  std::string qid;
  std::string question;
  std::vector<std::vector<std::string>> answer_groups;

  friend bool operator==(const QAItem&, const QAItem&) = default;
};

struct IFTRecord {
  std::string qid;
  std::string question;
  std::vector<Document> prompt_docs;
  std::string prompt;
  std::string output;

  friend bool operator==(const IFTRecord&, const IFTRecord&) = default;
};

enum class Perspective { RI, RR, CQ };

inline std::string_view to_string(Perspective p) {
  switch (p) {
    case Perspective::RI: return "RI";
    case Perspective::RR: return "RR";
    case Perspective::CQ: return "CQ";
  }
  return "?";
}

inline std::optional<Perspective> parse_perspective(std::string_view s) {
  std::string l = detail::to_lower_ascii(s);
  if (l == "ri") return Perspective::RI;
  if (l == "rr") return Perspective::RR;
  if (l == "cq") return Perspective::CQ;
  return std::nullopt;
}

struct PreferencePair {
  std::string qid;
  Perspective perspective = Perspective::RI;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  ojson meta = ojson::object();

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct StageSpec {
  std::string name;
  std::string data;
  int batch_size = 0;
  double learning_rate = 0.0;
  int epochs = 0;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

/// Ordered training stages for an external trainer.
struct StageManifest {
  std::vector<StageSpec> stages;

  // IFT, then the preference stages in the order RI -> RR -> CQ.
  static StageManifest defaults() {
    return {{
        {"IFT", "ift.jsonl", 128, 2e-5, 1},
        {"RI", "ri.jsonl", 64, 2e-6, 1},
        {"RR", "rr.jsonl", 64, 2e-6, 1},
        {"CQ", "cq.jsonl", 64, 2e-7, 1},
    }};
  }

  StageSpec* find(std::string_view name) {
    for (auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
  const StageSpec* find(std::string_view name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }

  // Overrides one field ("batch_size", "learning_rate", "epochs", "data").
  void set(std::string_view stage, std::string_view field,
           std::string_view value) {
    StageSpec* s = find(stage);
    if (!s) throw Error("unknown stage '" + std::string(stage) + "'");
    try {
      if (field == "batch_size") {
        s->batch_size = std::stoi(std::string(value));
      } else if (field == "learning_rate") {
        s->learning_rate = std::stod(std::string(value));
      } else if (field == "epochs") {
        s->epochs = std::stoi(std::string(value));
      } else if (field == "data") {
        s->data = std::string(value);
      } else {
        throw Error("unknown manifest field '" + std::string(field) + "'");
      }
    } catch (const std::logic_error&) {
      throw Error("bad value '" + std::string(value) + "' for " +
                  std::string(stage) + "." + std::string(field));
    }
  }

  friend bool operator==(const StageManifest&, const StageManifest&) = default;
};

/// Immutable id-indexed passage store.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Document> docs) {
    for (auto& d : docs) add(std::move(d), 0);
  }

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<Document>& documents() const { return docs_; }

  const Document* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &docs_[it->second];
  }

  // Line is only used for error messages; 0 means "not from a file".
  void add(Document d, std::size_t line) {
    if (d.doc_id.empty())
      throw ParseError("empty doc_id at line " + std::to_string(line), line);
    if (detail::trim(d.text).empty())
      throw ParseError("empty text for doc_id '" + d.doc_id + "' at line " +
                           std::to_string(line),
                       line);
    if (index_.count(d.doc_id))
      throw ParseError("duplicate doc_id at line " + std::to_string(line) +
                           ": '" + d.doc_id + "'",
                       line);
    index_.emplace(d.doc_id, docs_.size());
    docs_.push_back(std::move(d));
  }

 private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Loading

struct QALoad {
  std::vector<QAItem> items;
  // 1-based lines dropped for having no usable answers.
  std::vector<std::size_t> skipped_lines;
};

namespace detail {

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Calls fn(line, lineno) for each line, stripping a trailing '\r'.
template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn) {
  std::size_t lineno = 0, pos = 0;
  while (pos < content.size()) {
    std::size_t nl = content.find('\n', pos);
    std::size_t end = nl == std::string_view::npos ? content.size() : nl;
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, ++lineno);
    pos = end + 1;
  }
}

inline std::vector<std::vector<std::string>> parse_answer_groups(
    const nlohmann::json& answers, std::size_t lineno) {
  if (!answers.is_array())
    throw ParseError("'answers' must be an array at line " +
                         std::to_string(lineno),
                     lineno);
  std::vector<std::vector<std::string>> groups;
  for (const auto& a : answers) {
    std::vector<std::string> group;
    if (a.is_string()) {
      group.push_back(a.get<std::string>());
    } else if (a.is_array()) {
      for (const auto& alias : a) {
        if (!alias.is_string())
          throw ParseError("non-string alias at line " + std::to_string(lineno),
                           lineno);
        group.push_back(alias.get<std::string>());
      }
    } else {
      throw ParseError("answer must be a string or list at line " +
                           std::to_string(lineno),
                       lineno);
    }
    std::erase_if(group, [](const std::string& s) { return trim(s).empty(); });
    if (!group.empty()) groups.push_back(std::move(group));
  }
  return groups;
}

inline std::string strip_tsv_quotes(std::string_view field) {
  if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
    std::string out;
    field = field.substr(1, field.size() - 2);
    for (std::size_t i = 0; i < field.size(); ++i) {
      out.push_back(field[i]);
      if (field[i] == '"' && i + 1 < field.size() && field[i + 1] == '"') ++i;
    }
    return out;
  }
  return std::string(field);
}

}  // namespace detail

/// Parses qa.jsonl content. Flat answer lists become singleton groups.
inline QALoad parse_qa(std::string_view content) {
  QALoad out;
  detail::for_each_line(content, [&](std::string_view line, std::size_t n) {
    if (detail::trim(line).empty()) return;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("malformed JSON at line " + std::to_string(n) + ": " +
                           e.what(),
                       n);
    }
    if (!j.is_object() || !j.contains("answers"))
      throw ParseError("missing 'answers' at line " + std::to_string(n), n);
    QAItem item;
    try {
      item.qid = j.value("id", std::string());
      item.question = j.value("question", std::string());
    } catch (const nlohmann::json::exception&) {
      throw ParseError("'id'/'question' must be strings at line " +
                           std::to_string(n),
                       n);
    }
    if (item.qid.empty())
      throw ParseError("missing 'id' at line " + std::to_string(n), n);
    item.answer_groups = detail::parse_answer_groups(j["answers"], n);
    if (item.answer_groups.empty()) {
      out.skipped_lines.push_back(n);
      return;
    }
    out.items.push_back(std::move(item));
  });
  return out;
}

inline QALoad load_qa(const fs::path& path) {
  return parse_qa(detail::read_file(path));
}

/// Parses a DPR-style TSV (doc_id, text, title); an "id\ttext\ttitle" header
/// on the first line is skipped.
inline Corpus parse_corpus(std::string_view content) {
  Corpus corpus;
  detail::for_each_line(content, [&](std::string_view line, std::size_t n) {
    if (line.empty()) return;
    if (n == 1 && line == "id\ttext\ttitle") return;
    std::vector<std::string_view> cols;
    std::size_t pos = 0;
    while (true) {
      std::size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 3)
      throw ParseError("expected 3 tab-separated columns at line " +
                           std::to_string(n) + ", got " +
                           std::to_string(cols.size()),
                       n);
    corpus.add({std::string(cols[0]), detail::strip_tsv_quotes(cols[2]),
                detail::strip_tsv_quotes(cols[1])},
               n);
  });
  return corpus;
}

inline Corpus load_corpus(const fs::path& path) {
  return parse_corpus(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// JSON conversion

inline ojson to_json(const Document& d) {
  ojson j = ojson::object();
  j["id"] = d.doc_id;
  j["title"] = d.title;
  j["text"] = d.text;
  return j;
}

inline Document document_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(), j.value("title", std::string()),
          j.at("text").get<std::string>()};
}

inline ojson to_json(const IFTRecord& r) {
  ojson j = ojson::object();
  j["id"] = r.qid;
  j["question"] = r.question;
  ojson docs = ojson::array();
  for (const auto& d : r.prompt_docs) docs.push_back(to_json(d));
  j["docs"] = std::move(docs);
  j["prompt"] = r.prompt;
  j["output"] = r.output;
  return j;
}

inline ojson to_json(const PreferencePair& p) {
  ojson j = ojson::object();
  j["id"] = p.qid;
  j["perspective"] = std::string(to_string(p.perspective));
  j["prompt"] = p.prompt;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  j["meta"] = p.meta;
  return j;
}

inline ojson to_json(const StageManifest& m) {
  ojson stages = ojson::array();
  for (const auto& s : m.stages) {
    ojson j = ojson::object();
    j["name"] = s.name;
    j["data"] = s.data;
    j["batch_size"] = s.batch_size;
    j["learning_rate"] = s.learning_rate;
    j["epochs"] = s.epochs;
    stages.push_back(std::move(j));
  }
  ojson j = ojson::object();
  j["stages"] = std::move(stages);
  return j;
}

inline StageManifest manifest_from_json(const nlohmann::json& j) {
  StageManifest m;
  for (const auto& s : j.at("stages"))
    m.stages.push_back({s.at("name").get<std::string>(),
                        s.at("data").get<std::string>(),
                        s.at("batch_size").get<int>(),
                        s.at("learning_rate").get<double>(),
                        s.at("epochs").get<int>()});
  return m;
}

inline std::string dump_compact(const ojson& j) {
  return j.dump(-1, ' ', false, ojson::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Reading exported files back

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::string content = detail::read_file(path);
  detail::for_each_line(content, [&](std::string_view line, std::size_t n) {
    if (detail::trim(line).empty()) return;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.filename().string() + ": malformed JSON at line " +
                           std::to_string(n) + ": " + e.what(),
                       n);
    }
    try {
      fn(j, n);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.filename().string() + ": bad record at line " +
                           std::to_string(n) + ": " + e.what(),
                       n);
    }
  });
}

inline std::vector<IFTRecord> read_ift(const fs::path& path) {
  std::vector<IFTRecord> out;
  for_each_jsonl(path, [&](const ojson& j, std::size_t) {
    IFTRecord r;
    r.qid = j.at("id").get<std::string>();
    r.question = j.value("question", std::string());
    for (const auto& d : j.at("docs")) r.prompt_docs.push_back(document_from_json(d));
    r.prompt = j.at("prompt").get<std::string>();
    r.output = j.at("output").get<std::string>();
    out.push_back(std::move(r));
  });
  return out;
}

inline std::vector<PreferencePair> read_pairs(const fs::path& path) {
  std::vector<PreferencePair> out;
  for_each_jsonl(path, [&](const ojson& j, std::size_t n) {
    PreferencePair p;
    p.qid = j.at("id").get<std::string>();
    auto persp = parse_perspective(j.at("perspective").get<std::string>());
    if (!persp)
      throw ParseError("unknown perspective at line " + std::to_string(n), n);
    p.perspective = *persp;
    p.prompt = j.at("prompt").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.meta = j.value("meta", ojson::object());
    out.push_back(std::move(p));
  });
  return out;
}

inline StageManifest read_manifest(const fs::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(detail::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad manifest '" + path.string() + "': " + e.what(), 0);
  }
}

// ---------------------------------------------------------------------------
// Writing

/// Writes `text` to `path`, creating parent directories.
inline void write_text_file(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec)
    throw Error("cannot create directory '" + path.parent_path().string() +
                "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

template <typename Range>
std::string to_jsonl(const Range& records) {
  std::string out;
  for (const auto& r : records) {
    out += dump_compact(to_json(r));
    out += '\n';
  }
  return out;
}

inline fs::path write_manifest(const StageManifest& m, const fs::path& out_dir) {
  fs::path p = out_dir / "manifest.json";
  write_text_file(p, to_json(m).dump(2) + "\n");
  return p;
}

namespace detail {
inline const StageSpec& require_stage(const StageManifest& m,
                                      std::string_view name) {
  const StageSpec* s = m.find(name);
  if (!s) throw Error("manifest has no stage '" + std::string(name) + "'");
  return *s;
}
}  // namespace detail

/// Writes the IFT stage file plus manifest.json; returns the written paths.
inline std::vector<fs::path> export_stage(std::span<const IFTRecord> records,
                                          const StageManifest& manifest,
                                          const fs::path& out_dir) {
  fs::path data = out_dir / detail::require_stage(manifest, "IFT").data;
  write_text_file(data, to_jsonl(records));
  return {data, write_manifest(manifest, out_dir)};
}

/// Writes one preference stage file plus manifest.json. Every pair must carry
/// the stage's perspective.
inline std::vector<fs::path> export_stage(Perspective stage,
                                          std::span<const PreferencePair> pairs,
                                          const StageManifest& manifest,
                                          const fs::path& out_dir) {
  for (const auto& p : pairs)
    if (p.perspective != stage)
      throw Error("pair for '" + p.qid + "' has perspective " +
                  std::string(to_string(p.perspective)) + " in the " +
                  std::string(to_string(stage)) + " file");
  fs::path data =
      out_dir / detail::require_stage(manifest, to_string(stage)).data;
  write_text_file(data, to_jsonl(pairs));
  return {data, write_manifest(manifest, out_dir)};
}

}  // namespace parag
