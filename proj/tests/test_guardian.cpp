#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "hltm/guardian.hpp"

using namespace hltm;
using nlohmann::json;

namespace {

/// Minimal stand-in for the content search endpoint.
class MockApi {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit MockApi(Handler h) : handler_(std::move(h)) {
    server_.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      handler_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockApi() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> requests{0};

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

/// Paged results: `total` articles per section, ids "<section>/<n>".
void serve_pages(const httplib::Request& req, httplib::Response& res, std::size_t total) {
  const auto section = req.get_param_value("section");
  const auto page = std::stoul(req.get_param_value("page"));
  const auto size = std::stoul(req.get_param_value("page-size"));
  json results = json::array();
  for (std::size_t i = (page - 1) * size; i < std::min(total, page * size); ++i) {
    results.push_back({{"id", section + "/" + std::to_string(i)},
                       {"webTitle", "Title " + std::to_string(i)},
                       {"fields", {{"bodyText", section + " body text " + std::to_string(i)}}}});
  }
  const std::size_t pages = (total + size - 1) / size;
  res.set_content(json{{"response", {{"status", "ok"}, {"pages", pages}, {"results", results}}}}.dump(),
                  "application/json");
}

GuardianConfig config_for(const MockApi& api, const std::string& cache) {
  GuardianConfig c;
  c.api_key = "test-key";
  c.base_url = api.url();
  c.page_size = 4;
  c.per_category = 10;
  c.initial_backoff = std::chrono::milliseconds(1);
  c.request_interval = std::chrono::milliseconds(0);
  c.max_retries = 3;
  c.cache_dir = std::filesystem::temp_directory_path() / ("hltm-guardian-" + cache);
  std::filesystem::remove_all(c.cache_dir);
  return c;
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<json> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace

TEST(Guardian, PaginatesUpToPerCategory) {
  MockApi api([](const auto& req, auto& res) {
    EXPECT_EQ(req.get_param_value("api-key"), "test-key");
    EXPECT_EQ(req.get_param_value("show-fields"), "bodyText");
    serve_pages(req, res, 25);
  });
  auto cfg = config_for(api, "paging");
  cfg.sections = {"sport", "business"};
  const auto path = fetch_guardian_jsonl(cfg);
  const auto rows = read_jsonl(path);
  ASSERT_EQ(rows.size(), 20u);
  EXPECT_EQ(rows[0].at("id"), "sport/0");
  EXPECT_EQ(rows[0].at("category"), "sport");
  EXPECT_EQ(rows[0].at("text"), "Title 0\nsport body text 0");
  EXPECT_EQ(rows[19].at("id"), "business/9");
  EXPECT_EQ(api.requests.load(), 6);
}

TEST(Guardian, StopsAtLastPage) {
  MockApi api([](const auto& req, auto& res) { serve_pages(req, res, 6); });
  auto cfg = config_for(api, "short");
  cfg.sections = {"science"};
  const auto rows = read_jsonl(fetch_guardian_jsonl(cfg));
  EXPECT_EQ(rows.size(), 6u);
  EXPECT_EQ(api.requests.load(), 2);
}

TEST(Guardian, CachedSectionsAreNotRefetched) {
  MockApi api([](const auto& req, auto& res) { serve_pages(req, res, 25); });
  auto cfg = config_for(api, "cache");
  cfg.sections = {"sport"};
  fetch_guardian_jsonl(cfg);
  const int first = api.requests.load();
  const auto path = fetch_guardian_jsonl(cfg);
  EXPECT_EQ(api.requests.load(), first);
  EXPECT_EQ(read_jsonl(path).size(), 10u);
  cfg.sections = {"sport", "politics"};
  EXPECT_EQ(read_jsonl(fetch_guardian_jsonl(cfg)).size(), 20u);
  EXPECT_EQ(api.requests.load(), 2 * first);
}

TEST(Guardian, RejectedKeyIsAnAuthenticationError) {
  MockApi api([](const auto&, auto& res) { res.status = 401; });
  auto cfg = config_for(api, "auth");
  cfg.sections = {"sport"};
  try {
    fetch_guardian_jsonl(cfg);
    FAIL() << "expected an error";
  } catch (const GuardianError& e) {
    EXPECT_EQ(e.kind(), GuardianError::Kind::Authentication);
    EXPECT_EQ(e.status(), 401);
  }
  EXPECT_EQ(api.requests.load(), 1);
}

TEST(Guardian, MissingKeyFailsWithoutRequests) {
  MockApi api([](const auto& req, auto& res) { serve_pages(req, res, 5); });
  auto cfg = config_for(api, "nokey");
  cfg.api_key.clear();
  cfg.sections = {"sport"};
  try {
    fetch_guardian_jsonl(cfg);
    FAIL() << "expected an error";
  } catch (const GuardianError& e) {
    EXPECT_EQ(e.kind(), GuardianError::Kind::Authentication);
  }
  EXPECT_EQ(api.requests.load(), 0);
}

TEST(Guardian, TransientServerErrorsAreRetried) {
  std::atomic<int> calls{0};
  MockApi api([&](const auto& req, auto& res) {
    if (calls++ % 2 == 0) {
      res.status = 503;
      return;
    }
    serve_pages(req, res, 8);
  });
  auto cfg = config_for(api, "retry");
  cfg.sections = {"culture"};
  EXPECT_EQ(read_jsonl(fetch_guardian_jsonl(cfg)).size(), 8u);
  EXPECT_EQ(api.requests.load(), 4);
}

TEST(Guardian, PersistentRateLimitReportsCompletedSections) {
  MockApi api([](const auto& req, auto& res) {
    if (req.get_param_value("section") == "world") {
      res.status = 429;
      return;
    }
    serve_pages(req, res, 10);
  });
  auto cfg = config_for(api, "quota");
  cfg.sections = {"sport", "business", "world", "music"};
  try {
    fetch_guardian_jsonl(cfg);
    FAIL() << "expected an error";
  } catch (const GuardianError& e) {
    EXPECT_EQ(e.kind(), GuardianError::Kind::PartialFetch);
    EXPECT_EQ(e.status(), 429);
    EXPECT_EQ(e.completed(), (std::vector<std::string>{"sport", "business"}));
  }
  const auto dir = cfg.cache_dir / "guardian";
  EXPECT_TRUE(std::filesystem::exists(dir / "sport.jsonl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "business.jsonl"));
  EXPECT_FALSE(std::filesystem::exists(dir / "world.jsonl"));
  EXPECT_EQ(api.requests.load(), 3 + 3 + 1 + static_cast<int>(cfg.max_retries));
}

TEST(Guardian, ClientErrorsAreNotRetried) {
  MockApi api([](const auto&, auto& res) { res.status = 400; });
  auto cfg = config_for(api, "client-error");
  cfg.sections = {"sport"};
  try {
    fetch_guardian_jsonl(cfg);
    FAIL() << "expected an error";
  } catch (const GuardianError& e) {
    EXPECT_EQ(e.kind(), GuardianError::Kind::Http);
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(api.requests.load(), 1);
}

TEST(Guardian, FetchedArticlesBuildACorpus) {
  MockApi api([](const auto& req, auto& res) { serve_pages(req, res, 12); });
  auto cfg = config_for(api, "corpus");
  cfg.per_category = 12;
  cfg.sections = {"sport", "business"};
  PreprocessConfig pre;
  pre.min_df = 1;
  pre.max_df_fraction = 1.0;
  const auto corpus = fetch_guardian(cfg, pre);
  EXPECT_EQ(corpus.num_documents(), 24u);
  EXPECT_EQ(corpus.categories(), (std::vector<std::string>{"business", "sport"}));
  EXPECT_TRUE(corpus.vocabulary().find("sport").has_value());
}
