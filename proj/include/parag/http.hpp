#pragma once

// HTTP backends: NLI oracle, chat-completion generator and retriever.
// Plain http:// only; every call opens its own client, so instances are
// thread-safe.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "parag/common.hpp"
#include "parag/genclient.hpp"
#include "parag/oracle.hpp"
#include "parag/parallel.hpp"
#include "parag/retrieval.hpp"

namespace parag {

struct HttpOptions {
  int timeout_seconds = 60;
  int retries = 3;           // extra attempts after the first
  int backoff_ms = 200;      // doubled per attempt
  int max_in_flight = 4;     // concurrent requests per client (1..64)
  std::size_t batch_size = 64;
  std::string bearer_token;  // sent as Authorization when nonempty
};

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash, may be empty
};

inline Url split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos || url.substr(0, scheme) != "http")
    throw std::invalid_argument("expected an http:// URL, got '" + url + "'");
  std::size_t slash = url.find('/', scheme + 3);
  Url u{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  if (u.origin.size() <= scheme + 3)
    throw std::invalid_argument("URL without host: '" + url + "'");
  return u;
}

namespace detail {

inline bool retriable_status(int status) { return status == 429 || status >= 500; }

// POSTs JSON and returns the parsed reply, retrying connection failures,
// 429 and 5xx with exponential backoff.
inline nlohmann::json post_json(const Url& base, const std::string& path,
                                const nlohmann::json& body,
                                const HttpOptions& opts) {
  const std::string payload = body.dump(-1, ' ', false,
                                        nlohmann::json::error_handler_t::replace);
  const std::string target = base.path + path;
  std::string last_error;
  for (int attempt = 0; attempt <= opts.retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(static_cast<long>(opts.backoff_ms) << (attempt - 1)));
    httplib::Client client(base.origin);
    client.set_connection_timeout(opts.timeout_seconds, 0);
    client.set_read_timeout(opts.timeout_seconds, 0);
    client.set_write_timeout(opts.timeout_seconds, 0);
    if (!opts.bearer_token.empty()) client.set_bearer_token_auth(opts.bearer_token);
    auto res = client.Post(target, payload, "application/json");
    if (!res) {
      last_error = "POST " + base.origin + target + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "POST " + base.origin + target + ": HTTP " +
                   std::to_string(res->status);
      if (retriable_status(res->status)) continue;
      throw BackendError(last_error, false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw BackendError("POST " + base.origin + target + ": malformed reply: " + e.what(),
                         false);
    }
  }
  throw BackendError(last_error + " (after " + std::to_string(opts.retries + 1) +
                         " attempts)",
                     true);
}

// Bounds concurrent requests issued through one client object.
class InFlightLimit {
 public:
  explicit InFlightLimit(int n) : sem_(std::clamp(n, 1, 64)) {}
  template <typename Fn>
  auto run(Fn&& fn) {
    sem_.acquire();
    struct Release {
      std::counting_semaphore<64>& s;
      ~Release() { s.release(); }
    } guard{sem_};
    return fn();
  }

 private:
  std::counting_semaphore<64> sem_;
};

}  // namespace detail

/// POST /entails {"pairs":[{"premise","hypothesis"}...]} -> {"entails":[bool...]}.
/// Large batches are split into chunks sent concurrently; a failed chunk
/// fails the whole batch. Wrap in CachingOracle for memoization.
class RemoteOracle : public EntailmentOracle {
 public:
  RemoteOracle(const std::string& url, HttpOptions opts = {})
      : base_(split_url(url)), opts_(opts), limit_(opts.max_in_flight) {
    if (opts_.batch_size == 0) opts_.batch_size = 1;
  }

  std::vector<bool> entails_batch(std::span<const EntailmentQuery> queries) override {
    const std::size_t chunks = (queries.size() + opts_.batch_size - 1) / opts_.batch_size;
    std::vector<std::vector<bool>> parts(chunks);
    parallel_for(chunks, static_cast<unsigned>(std::clamp(opts_.max_in_flight, 1, 64)),
                 [&](std::size_t c) {
                   auto part = queries.subspan(
                       c * opts_.batch_size,
                       std::min(opts_.batch_size, queries.size() - c * opts_.batch_size));
                   parts[c] = limit_.run([&] { return send(part); });
                 });
    std::vector<bool> out;
    out.reserve(queries.size());
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  }

 private:
  std::vector<bool> send(std::span<const EntailmentQuery> part) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& q : part)
      pairs.push_back({{"premise", q.premise}, {"hypothesis", q.hypothesis}});
    auto reply = detail::post_json(base_, "/entails", {{"pairs", pairs}}, opts_);
    auto it = reply.find("entails");
    if (it == reply.end() || !it->is_array() || it->size() != part.size())
      throw BackendError("/entails: expected " + std::to_string(part.size()) +
                             " booleans",
                         false);
    std::vector<bool> out;
    for (const auto& v : *it) {
      if (!v.is_boolean()) throw BackendError("/entails: non-boolean entry", false);
      out.push_back(v.get<bool>());
    }
    return out;
  }

  Url base_;
  HttpOptions opts_;
  detail::InFlightLimit limit_;
};

/// OpenAI-compatible POST {endpoint}/chat/completions with n samples.
class RemoteGenerator : public Generator {
 public:
  explicit RemoteGenerator(HttpOptions opts = {})
      : opts_(opts), limit_(opts.max_in_flight) {}

  Generation generate(const std::string& prompt, const GenConfig& cfg,
                      std::uint64_t seed) override {
    cfg.validate();
    Url base = split_url(cfg.endpoint);
    nlohmann::json body = {
        {"model", cfg.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", cfg.temperature},
        {"n", cfg.max_samples_per_input}};
    if (cfg.forward_seed) body["seed"] = seed & 0x7fffffffULL;
    auto reply = limit_.run(
        [&] { return detail::post_json(base, "/chat/completions", body, opts_); });

    Generation g;
    auto choices = reply.find("choices");
    if (choices == reply.end() || !choices->is_array())
      throw BackendError("/chat/completions: reply without choices", false);
    for (const auto& c : *choices) {
      const auto* content = c.contains("message") ? &c["message"] : nullptr;
      if (content && content->contains("content") && (*content)["content"].is_string())
        g.candidates.push_back((*content)["content"].get<std::string>());
    }
    if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
      g.prompt_tokens = usage->value("prompt_tokens", std::size_t{0});
      g.completion_tokens = usage->value("completion_tokens", std::size_t{0});
    }
    return finalize_generation(std::move(g), cfg);
  }

 private:
  HttpOptions opts_;
  detail::InFlightLimit limit_;
};

/// POST /retrieve {"question","k"} -> {"docs":[{"id","title","text","score"}...]}.
/// Ranks follow reply order.
class RemoteRetriever : public Retriever {
 public:
  RemoteRetriever(const std::string& url, HttpOptions opts = {})
      : base_(split_url(url)), opts_(opts), limit_(opts.max_in_flight) {}

  RankedList retrieve(const std::string& question, int k) override {
    if (k < 1) throw std::invalid_argument("retrieve: k must be >= 1");
    auto reply = limit_.run([&] {
      return detail::post_json(base_, "/retrieve", {{"question", question}, {"k", k}},
                               opts_);
    });
    auto docs = reply.find("docs");
    if (docs == reply.end() || !docs->is_array())
      throw BackendError("/retrieve: reply without docs", false);
    RankedList out;
    int rank = 0;
    try {
      for (const auto& d : *docs) {
        if (rank == k) break;
        Document doc{d.at("id").get<std::string>(), d.value("title", std::string()),
                     d.at("text").get<std::string>()};
        out.docs.push_back({std::move(doc), d.value("score", 0.0), ++rank});
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("/retrieve: bad document: ") + e.what(), false);
    }
    return out;
  }

 private:
  Url base_;
  HttpOptions opts_;
  detail::InFlightLimit limit_;
};

}  // namespace parag
