#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "parag/dataio.hpp"
#include "parag/genclient.hpp"
#include "parag/oracle.hpp"
#include "parag/retrieval.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("parag-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) { return parag::detail::read_file(p); }

// Documents whose premise text is "D<i>", so premises decode to index sets.
inline std::vector<parag::Document> numbered_docs(int n) {
  std::vector<parag::Document> docs;
  for (int i = 1; i <= n; ++i)
    docs.push_back({"d" + std::to_string(i), "", "D" + std::to_string(i)});
  return docs;
}

// Bitmask of display indices (bit i-1 for index i) encoded in a premise built
// from numbered_docs.
inline std::uint32_t premise_mask(const std::string& premise) {
  std::uint32_t mask = 0;
  std::size_t pos = 0;
  while (pos < premise.size()) {
    std::size_t end = premise.find("\n\n", pos);
    if (end == std::string::npos) end = premise.size();
    int idx = std::stoi(premise.substr(pos + 1, end - pos - 1));
    mask |= 1u << (idx - 1);
    pos = end + 2;
  }
  return mask;
}

// Oracle over numbered_docs answering from a (mask, claim) predicate.
inline parag::FunctionOracle subset_oracle(
    std::function<bool(std::uint32_t, const std::string&)> truth) {
  return parag::FunctionOracle([truth](const parag::EntailmentQuery& q) {
    return truth(premise_mask(q.premise), q.hypothesis);
  });
}

inline std::string toy_dir() { return PARAG_TOY_DIR; }

// Returns the same ranked documents for every question; throws BackendError
// for questions listed in `failing`.
class FixedRetriever : public parag::Retriever {
 public:
  explicit FixedRetriever(std::vector<parag::Document> docs,
                          std::vector<std::string> failing = {})
      : docs_(std::move(docs)), failing_(std::move(failing)) {}

  parag::RankedList retrieve(const std::string& question, int k) override {
    for (const auto& f : failing_)
      if (f == question) throw parag::BackendError("retriever down", true);
    parag::RankedList r;
    for (std::size_t i = 0; i < docs_.size() && static_cast<int>(i) < k; ++i)
      r.docs.push_back({docs_[i], 1.0 / static_cast<double>(i + 1), static_cast<int>(i) + 1});
    return r;
  }

 private:
  std::vector<parag::Document> docs_;
  std::vector<std::string> failing_;
};

// Generator answering from a callable over the prompt.
class ReplyGenerator : public parag::Generator {
 public:
  using Fn = std::function<std::vector<std::string>(const std::string&)>;
  explicit ReplyGenerator(Fn fn) : fn_(std::move(fn)) {}
  explicit ReplyGenerator(std::vector<std::string> replies)
      : fn_([replies](const std::string&) { return replies; }) {}

  parag::Generation generate(const std::string& prompt, const parag::GenConfig&,
                             std::uint64_t) override {
    parag::Generation g;
    g.candidates = fn_(prompt);
    return g;
  }

 private:
  Fn fn_;
};

}  // namespace testsupport
