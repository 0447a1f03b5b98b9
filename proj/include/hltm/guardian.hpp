#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hltm/corpus.hpp"
#include "hltm/io.hpp"

namespace hltm {

struct GuardianConfig {
  std::string api_key;
  std::vector<std::string> sections;
  std::size_t per_category = 500;
  std::string base_url = "https://content.guardianapis.com";
  std::size_t page_size = 50;
  std::size_t max_retries = 5;
  std::chrono::milliseconds initial_backoff{1000};
  /// Pause between successful page requests.
  std::chrono::milliseconds request_interval{100};
  std::filesystem::path cache_dir;
};

class GuardianError : public Error {
 public:
  enum class Kind { Authentication, Http, PartialFetch };

  GuardianError(Kind kind, int status, const std::string& what, std::vector<std::string> completed = {})
      : Error(what), kind_(kind), status_(status), completed_(std::move(completed)) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }
  /// Sections fully cached before a partial fetch stopped.
  const std::vector<std::string>& completed() const { return completed_; }

 private:
  Kind kind_;
  int status_;
  std::vector<std::string> completed_;
};

inline std::filesystem::path default_cache_dir() {
  if (const char* d = std::getenv("HLTM_CACHE_DIR"); d && *d) return d;
  return "hltm-cache";
}

namespace detail {

inline std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace detail

/// Downloads up to per_category articles per section into
/// <cache>/guardian/<section>.jsonl (skipping sections already cached) and
/// concatenates them into <cache>/guardian.jsonl, whose path is returned.
inline std::filesystem::path fetch_guardian_jsonl(const GuardianConfig& cfg) {
  if (cfg.api_key.empty()) throw GuardianError(GuardianError::Kind::Authentication, 0, "missing Guardian API key");
  const auto cache = (cfg.cache_dir.empty() ? default_cache_dir() : cfg.cache_dir) / "guardian";
  std::filesystem::create_directories(cache);

  httplib::Client client(cfg.base_url);
  client.set_connection_timeout(10);
  client.set_read_timeout(30);

  std::vector<std::string> completed;
  for (const auto& section : cfg.sections) {
    const auto path = cache / (section + ".jsonl");
    if (std::filesystem::exists(path) && detail::count_lines(path) >= cfg.per_category) {
      completed.push_back(section);
      continue;
    }
    std::vector<std::string> lines;
    for (std::size_t page = 1; lines.size() < cfg.per_category; ++page) {
      httplib::Params params{{"section", section},
                             {"page", std::to_string(page)},
                             {"page-size", std::to_string(cfg.page_size)},
                             {"order-by", "newest"},
                             {"show-fields", "bodyText"},
                             {"api-key", cfg.api_key}};
      auto backoff = cfg.initial_backoff;
      httplib::Result res;
      for (std::size_t attempt = 0;; ++attempt) {
        res = client.Get("/search", params, httplib::Headers{});
        const int status = res ? res->status : 0;
        if (status == 200) break;
        if (status == 401 || status == 403) {
          throw GuardianError(GuardianError::Kind::Authentication, status, "Guardian API rejected the key");
        }
        const bool retryable = status == 0 || status == 429 || status >= 500;
        if (!retryable || attempt >= cfg.max_retries) {
          if (status == 429) {
            throw GuardianError(GuardianError::Kind::PartialFetch, status,
                                "Guardian API quota exhausted while fetching '" + section + "'", completed);
          }
          throw GuardianError(GuardianError::Kind::Http, status,
                              status == 0 ? "Guardian API request failed: " + httplib::to_string(res.error())
                                          : "Guardian API returned HTTP " + std::to_string(status));
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(res->body).at("response");
      } catch (const nlohmann::json::exception& e) {
        throw GuardianError(GuardianError::Kind::Http, 200, std::string("unexpected Guardian response: ") + e.what());
      }
      const auto& results = body.at("results");
      for (const auto& r : results) {
        if (lines.size() == cfg.per_category) break;
        std::string text = r.value("webTitle", "");
        if (r.contains("fields")) text += "\n" + r["fields"].value("bodyText", "");
        lines.push_back(nlohmann::json{{"id", r.at("id")}, {"text", text}, {"category", section}}.dump());
      }
      const auto pages = body.value("pages", std::size_t{0});
      if (results.empty() || page >= pages) break;
      std::this_thread::sleep_for(cfg.request_interval);
    }
    std::string joined;
    for (const auto& l : lines) joined += l + '\n';
    detail::write_file_atomic(path, {joined.begin(), joined.end()});
    completed.push_back(section);
  }

  std::string all;
  for (const auto& section : cfg.sections) {
    std::ifstream in(cache / (section + ".jsonl"));
    all.append(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const auto out = cache / "guardian.jsonl";
  detail::write_file_atomic(out, {all.begin(), all.end()});
  return out;
}

inline Corpus fetch_guardian(const GuardianConfig& cfg, const PreprocessConfig& preprocess = {}) {
  return ingest_jsonl(fetch_guardian_jsonl(cfg).string(), preprocess);
}

}  // namespace hltm
