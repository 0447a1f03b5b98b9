#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "hltm/backend.hpp"
#include "hltm/corpus.hpp"
#include "hltm/metrics.hpp"
#include "hltm/model.hpp"
#include "hltm/refine.hpp"
#include "hltm/simulate.hpp"

namespace hltm {

/// An error that maps onto an HTTP status.
class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  std::filesystem::path workspace = "hltm-workspace";
  /// Static assets mounted at /ui; empty serves a placeholder page.
  std::filesystem::path ui_dir;
  TrainingConfig training;
  RefineConfig refine;
};

/// Reads HLTM_WORKSPACE and HLTM_UI_DIR over the given defaults.
inline ServiceConfig service_config_from_env(ServiceConfig base = {}) {
  if (const char* w = std::getenv("HLTM_WORKSPACE"); w && *w) base.workspace = w;
  if (const char* u = std::getenv("HLTM_UI_DIR"); u && *u) base.ui_dir = u;
  return base;
}

enum class SessionStatus { Training, Ready, Failed };

inline std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Training: return "training";
    case SessionStatus::Ready: return "ready";
    case SessionStatus::Failed: return "failed";
  }
  return "failed";
}

inline SessionStatus parse_session_status(std::string_view s) {
  if (s == "ready") return SessionStatus::Ready;
  if (s == "training") return SessionStatus::Training;
  return SessionStatus::Failed;
}

struct Session {
  std::string id;
  std::string corpus_id;
  Backend backend = Backend::InfoGibbs;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  /// Held for the whole of a training or refinement run.
  std::mutex work;
  /// Guards everything below.
  mutable std::mutex data;
  SessionStatus status = SessionStatus::Training;
  std::string error;
  std::shared_ptr<const Model> model;
  std::shared_ptr<const TopicSnapshot> topics;
  std::vector<nlohmann::json> history;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Topic lists as served to clients: ordered {word, probability} and
/// {doc_id, probability} arrays.
inline nlohmann::json topics_payload(const TopicSnapshot& s, const Corpus& corpus, std::size_t n) {
  nlohmann::json topics = nlohmann::json::array();
  for (std::size_t t = 0; t < s.topic_count(); ++t) {
    nlohmann::json words = nlohmann::json::array();
    for (auto w : s.top_words(t, n)) words.push_back({{"word", s.vocabulary[w]}, {"probability", s.word_probs(t, w)}});
    nlohmann::json docs = nlohmann::json::array();
    for (auto d : s.top_docs(t, n)) {
      docs.push_back({{"doc_id", corpus.document(d).id},
                      {"category", corpus.document(d).category},
                      {"probability", s.doc_probs(d, t)}});
    }
    topics.push_back({{"topic", t}, {"words", std::move(words)}, {"documents", std::move(docs)}});
  }
  return topics;
}

inline nlohmann::json control_to_json(const ControlScore& c) {
  return {{"value", c.value}, {"kind", to_string(c.kind)}, {"details", c.details}};
}

/// Live sessions over file-backed storage. Layout under the workspace:
///   corpora/<id>.cbor
///   sessions/<id>/session.json, model-<rev>.cbor, history/<n>.cbor
class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), rng_(std::random_device{}()) {
    std::filesystem::create_directories(cfg_.workspace / "corpora");
    std::filesystem::create_directories(cfg_.workspace / "sessions");
    load_workspace();
  }

  ~Service() {
    std::vector<std::thread> pending;
    {
      std::lock_guard lock(mutex_);
      pending.swap(trainers_);
    }
    for (auto& t : pending) t.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return cfg_; }

  /// Blocks until no session is training.
  void wait_idle() {
    for (;;) {
      std::vector<std::thread> pending;
      {
        std::lock_guard lock(mutex_);
        pending.swap(trainers_);
      }
      if (pending.empty()) return;
      for (auto& t : pending) t.join();
    }
  }

  // --- operations behind the routes ---------------------------------------

  nlohmann::json add_corpus(const nlohmann::json& body) {
    if (!body.is_object()) throw HttpError(400, "body must be a JSON object");
    std::shared_ptr<const Corpus> corpus;
    try {
      if (body.contains("synthetic")) {
        SyntheticConfig sc;
        const auto& s = body["synthetic"];
        detail::read_opt(s, "n_categories", sc.n_categories);
        detail::read_opt(s, "docs_per_category", sc.docs_per_category);
        detail::read_opt(s, "vocab_size", sc.vocab_size);
        detail::read_opt(s, "doc_length", sc.doc_length);
        detail::read_opt(s, "seed", sc.seed);
        detail::read_opt(s, "signature_weight", sc.signature_weight);
        corpus = std::make_shared<const Corpus>(generate_synthetic(sc));
      } else if (body.contains("documents")) {
        PreprocessConfig pc;
        if (body.contains("preprocess")) {
          const auto& p = body["preprocess"];
          detail::read_opt(p, "min_df", pc.min_df);
          detail::read_opt(p, "max_df_fraction", pc.max_df_fraction);
          detail::read_opt(p, "min_token_length", pc.min_token_length);
        }
        std::vector<RawRecord> records;
        for (const auto& d : body.at("documents")) {
          records.push_back({d.at("id").get<std::string>(), d.at("text").get<std::string>(),
                             d.at("category").get<std::string>()});
        }
        corpus = std::make_shared<const Corpus>(build_corpus(records, pc));
      } else {
        throw HttpError(400, "expected 'documents' or 'synthetic'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("malformed corpus: ") + e.what());
    } catch (const HttpError&) {
      throw;
    } catch (const Error& e) {
      throw HttpError(400, e.what());
    }
    const std::string id = new_id("corpus");
    const auto bytes = nlohmann::json::to_cbor(corpus_to_json(*corpus));
    detail::write_file_atomic(cfg_.workspace / "corpora" / (id + ".cbor"), bytes);
    {
      std::lock_guard lock(mutex_);
      corpora_[id] = corpus;
    }
    return corpus_summary(id, *corpus);
  }

  nlohmann::json corpus_info(const std::string& id) const {
    auto corpus = find_corpus(id);
    auto j = corpus_summary(id, *corpus);
    j["vocabulary"] = corpus->vocabulary().words();
    return j;
  }

  nlohmann::json list_corpora() const {
    std::lock_guard lock(mutex_);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, c] : corpora_) out.push_back(corpus_summary(id, *c));
    return out;
  }

  /// Registers the session and starts training in the background.
  nlohmann::json create_session(const nlohmann::json& body) {
    if (!body.is_object()) throw HttpError(400, "body must be a JSON object");
    auto session = std::make_shared<Session>();
    TrainingConfig training = cfg_.training;
    try {
      session->corpus_id = body.at("corpus_id").get<std::string>();
      session->backend = parse_backend(body.at("backend").get<std::string>());
      session->k = body.at("k").get<std::size_t>();
      session->seed = body.value("seed", std::uint64_t{1});
      if (body.contains("training")) {
        const auto& t = body["training"];
        detail::read_opt(t, "alpha", training.alpha);
        detail::read_opt(t, "beta", training.beta);
        detail::read_opt(t, "gibbs_sweeps", training.gibbs_sweeps);
        detail::read_opt(t, "vb_iterations", training.vb_iterations);
      }
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("malformed session request: ") + e.what());
    } catch (const Error& e) {
      throw HttpError(400, e.what());
    }
    if (session->k < 1) throw HttpError(400, "k must be at least 1");
    auto corpus = find_corpus(session->corpus_id);
    session->id = new_id("session");
    {
      std::lock_guard lock(mutex_);
      sessions_[session->id] = session;
    }
    persist(*session, nullptr, std::nullopt);
    std::lock_guard lock(mutex_);
    trainers_.emplace_back([this, session, corpus, training] { train(session, corpus, training); });
    return session_status(*session);
  }

  nlohmann::json session_status(const std::string& id) const { return session_status(*find_session(id)); }

  nlohmann::json list_sessions() const {
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(mutex_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : all) out.push_back(session_status(*s));
    return out;
  }

  nlohmann::json topics(const std::string& id) const {
    auto s = find_session(id);
    std::lock_guard lock(s->data);
    require_ready(*s);
    return {{"session_id", s->id},
            {"backend", to_string(s->backend)},
            {"k", s->topics->topic_count()},
            {"revision", s->history.size()},
            {"topics", topics_payload(*s->topics, *find_corpus(s->corpus_id), cfg_.refine.display_n)}};
  }

  nlohmann::json history(const std::string& id) const {
    auto s = find_session(id);
    std::lock_guard lock(s->data);
    return {{"session_id", s->id}, {"history", s->history}};
  }

  /// Applies one refinement. A second request while one is running on the
  /// same session gets 409.
  nlohmann::json refine_session(const std::string& id, const nlohmann::json& body) {
    auto s = find_session(id);
    auto corpus = find_corpus(s->corpus_id);
    RefinementOp op;
    try {
      op = op_from_json(body, &corpus->vocabulary(), corpus.get());
    } catch (const nlohmann::json::exception& e) {
      throw HttpError(400, std::string("malformed refinement: ") + e.what());
    } catch (const Error& e) {
      throw HttpError(400, e.what());
    }
    std::unique_lock work(s->work, std::try_to_lock);
    if (!work.owns_lock()) throw HttpError(409, "a refinement is already in flight for this session");
    std::shared_ptr<const Model> current;
    {
      std::lock_guard lock(s->data);
      require_ready(*s);
      current = s->model;
    }
    Model m = *current;
    RefinementOutcome outcome;
    try {
      outcome = refine(m, op, cfg_.refine);
    } catch (const Error& e) {
      throw HttpError(400, e.what());
    }
    const auto control = control_score(outcome, cfg_.refine.display_n);
    const double coherence = coherence_delta(outcome.pre, outcome.post, reference_for(s->corpus_id));
    nlohmann::json entry{{"op", op_to_json(op, &corpus->vocabulary())},
                         {"control", control_to_json(control)},
                         {"coherence_delta", coherence},
                         {"timestamp", utc_timestamp()},
                         {"inference",
                          {{"iterations", outcome.inference.iterations},
                           {"converged", outcome.inference.converged},
                           {"objective", outcome.inference.objective}}}};
    auto model = std::make_shared<const Model>(std::move(m));
    auto post = std::make_shared<const TopicSnapshot>(outcome.post);
    std::size_t index;
    {
      std::lock_guard lock(s->data);
      index = s->history.size();
      entry["index"] = index;
      s->history.push_back(entry);
      s->model = model;
      s->topics = post;
    }
    persist(*s, model.get(), std::make_pair(index, &outcome));
    nlohmann::json response = entry;
    response["topics"] = topics_payload(*post, *corpus, cfg_.refine.display_n);
    return response;
  }

  /// Pre and post snapshots stored with history entry n.
  std::pair<TopicSnapshot, TopicSnapshot> stored_snapshots(const std::string& id, std::size_t n) const {
    const auto path = session_dir(id) / "history" / (std::to_string(n) + ".cbor");
    if (!std::filesystem::exists(path)) throw HttpError(404, "no stored snapshots for entry " + std::to_string(n));
    const auto j = nlohmann::json::from_cbor(detail::read_file_bytes(path));
    return {snapshot_from_json(j.at("pre")), snapshot_from_json(j.at("post"))};
  }

  // --- HTTP wiring ----------------------------------------------------------

  void attach(httplib::Server& srv) {
    auto json_route = [](auto fn) {
      return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
          int status = 200;
          const auto body = fn(req, status);
          res.status = status;
          res.set_content(body.dump(), "application/json");
        } catch (const HttpError& e) {
          res.status = e.status();
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
          res.status = 500;
          res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
      };
    };
    auto parse_body = [](const httplib::Request& req) {
      try {
        return nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        throw HttpError(400, std::string("invalid JSON: ") + e.what());
      }
    };

    srv.Get("/healthz", json_route([](const httplib::Request&, int&) { return nlohmann::json{{"status", "ok"}}; }));
    srv.Get("/corpora", json_route([this](const httplib::Request&, int&) { return list_corpora(); }));
    srv.Post("/corpora", json_route([this, parse_body](const httplib::Request& req, int& status) {
               status = 201;
               return add_corpus(parse_body(req));
             }));
    srv.Get(R"(/corpora/([^/]+))",
            json_route([this](const httplib::Request& req, int&) { return corpus_info(req.matches[1]); }));
    srv.Get("/sessions", json_route([this](const httplib::Request&, int&) { return list_sessions(); }));
    srv.Post("/sessions", json_route([this, parse_body](const httplib::Request& req, int& status) {
               status = 202;
               return create_session(parse_body(req));
             }));
    srv.Get(R"(/sessions/([^/]+))",
            json_route([this](const httplib::Request& req, int&) { return session_status(req.matches[1]); }));
    srv.Get(R"(/sessions/([^/]+)/topics)",
            json_route([this](const httplib::Request& req, int&) { return topics(req.matches[1]); }));
    srv.Get(R"(/sessions/([^/]+)/history)",
            json_route([this](const httplib::Request& req, int&) { return history(req.matches[1]); }));
    srv.Post(R"(/sessions/([^/]+)/refinements)",
             json_route([this, parse_body](const httplib::Request& req, int&) {
               const std::string id = req.matches[1];
               find_session(id);
               return refine_session(id, parse_body(req));
             }));

    if (!cfg_.ui_dir.empty() && std::filesystem::is_directory(cfg_.ui_dir)) {
      srv.set_mount_point("/ui", cfg_.ui_dir.string());
    } else {
      srv.Get("/ui", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
      srv.Get("/ui/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(
            "<!doctype html><title>hltm</title><p>No UI assets are installed. Set HLTM_UI_DIR to a built web "
            "client.</p>",
            "text/html");
      });
    }
  }

 private:
  static nlohmann::json corpus_summary(const std::string& id, const Corpus& c) {
    return {{"corpus_id", id},
            {"documents", c.num_documents()},
            {"vocabulary_size", c.vocab_size()},
            {"tokens", c.token_count()},
            {"categories", c.categories()}};
  }

  static nlohmann::json session_status(const Session& s) {
    std::lock_guard lock(s.data);
    nlohmann::json j{{"session_id", s.id},
                     {"corpus_id", s.corpus_id},
                     {"backend", to_string(s.backend)},
                     {"k", s.topics ? s.topics->topic_count() : s.k},
                     {"seed", s.seed},
                     {"status", to_string(s.status)},
                     {"history_length", s.history.size()}};
    if (!s.error.empty()) j["error"] = s.error;
    return j;
  }

  static void require_ready(const Session& s) {
    if (s.status == SessionStatus::Training) throw HttpError(409, "session is still training");
    if (s.status == SessionStatus::Failed) throw HttpError(409, "session failed: " + s.error);
  }

  std::string new_id(const char* prefix) {
    std::lock_guard lock(mutex_);
    for (;;) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s-%012llx", prefix,
                    static_cast<unsigned long long>(rng_() & 0xFFFFFFFFFFFFULL));
      if (!corpora_.contains(buf) && !sessions_.contains(buf)) return buf;
    }
  }

  std::shared_ptr<const Corpus> find_corpus(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = corpora_.find(id);
    if (it == corpora_.end()) throw HttpError(404, "unknown corpus '" + id + "'");
    return it->second;
  }

  std::shared_ptr<Session> find_session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError(404, "unknown session '" + id + "'");
    return it->second;
  }

  const ReferenceStats& reference_for(const std::string& corpus_id) {
    std::lock_guard lock(mutex_);
    auto it = references_.find(corpus_id);
    if (it == references_.end()) {
      it = references_.emplace(corpus_id, ReferenceStats::from_corpus(*corpora_.at(corpus_id))).first;
    }
    return it->second;
  }

  std::filesystem::path session_dir(const std::string& id) const { return cfg_.workspace / "sessions" / id; }

  void train(std::shared_ptr<Session> s, std::shared_ptr<const Corpus> corpus, TrainingConfig training) {
    std::lock_guard work(s->work);
    try {
      auto model = std::make_shared<const Model>(train_model(corpus, s->backend, s->k, s->seed, training));
      auto topics = std::make_shared<const TopicSnapshot>(snapshot(*model));
      {
        std::lock_guard lock(s->data);
        s->model = model;
        s->topics = topics;
        s->status = SessionStatus::Ready;
      }
      persist(*s, model.get(), std::nullopt);
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(s->data);
        s->status = SessionStatus::Failed;
        s->error = e.what();
      }
      persist(*s, nullptr, std::nullopt);
    }
  }

  /// Writes the model file and history snapshots first, then swaps in the
  /// new session.json; a crash before the final rename leaves the previous
  /// state readable.
  void persist(const Session& s, const Model* model,
               std::optional<std::pair<std::size_t, const RefinementOutcome*>> entry) {
    const auto dir = session_dir(s.id);
    std::filesystem::create_directories(dir / "history");
    nlohmann::json meta;
    {
      std::lock_guard lock(s.data);
      meta = {{"session_id", s.id},          {"corpus_id", s.corpus_id},         {"backend", to_string(s.backend)},
              {"k", s.k},                    {"seed", s.seed},                   {"status", to_string(s.status)},
              {"error", s.error},            {"history", s.history}};
    }
    const std::string model_file = "model-" + std::to_string(meta["history"].size()) + ".cbor";
    if (model) {
      detail::write_file_atomic(dir / model_file, nlohmann::json::to_cbor(model_state_to_json(*model)));
      meta["model_file"] = model_file;
    }
    if (entry) {
      const auto& [n, outcome] = *entry;
      nlohmann::json snaps{{"pre", snapshot_to_json(outcome->pre)}, {"post", snapshot_to_json(outcome->post)}};
      detail::write_file_atomic(dir / "history" / (std::to_string(n) + ".cbor"), nlohmann::json::to_cbor(snaps));
    }
    const auto text = meta.dump(2);
    detail::write_file_atomic(dir / "session.json", {text.begin(), text.end()});
    if (model) {
      for (const auto& f : std::filesystem::directory_iterator(dir)) {
        const auto name = f.path().filename().string();
        if (name.rfind("model-", 0) == 0 && name != model_file) std::filesystem::remove(f.path());
      }
    }
  }

  void load_workspace() {
    for (const auto& f : std::filesystem::directory_iterator(cfg_.workspace / "corpora")) {
      if (f.path().extension() != ".cbor") continue;
      corpora_[f.path().stem().string()] = std::make_shared<const Corpus>(
          corpus_from_json(nlohmann::json::from_cbor(detail::read_file_bytes(f.path()))));
    }
    for (const auto& f : std::filesystem::directory_iterator(cfg_.workspace / "sessions")) {
      const auto meta_path = f.path() / "session.json";
      if (!std::filesystem::exists(meta_path)) continue;
      std::ifstream in(meta_path);
      const auto meta = nlohmann::json::parse(in);
      auto s = std::make_shared<Session>();
      s->id = meta.at("session_id").get<std::string>();
      s->corpus_id = meta.at("corpus_id").get<std::string>();
      s->backend = parse_backend(meta.at("backend").get<std::string>());
      s->k = meta.at("k").get<std::size_t>();
      s->seed = meta.at("seed").get<std::uint64_t>();
      s->status = parse_session_status(meta.at("status").get<std::string>());
      s->error = meta.value("error", std::string{});
      for (const auto& h : meta.at("history")) s->history.push_back(h);
      auto corpus = corpora_.find(s->corpus_id);
      if (s->status == SessionStatus::Training) {
        s->status = SessionStatus::Failed;
        s->error = "interrupted by restart";
      } else if (s->status == SessionStatus::Ready) {
        if (corpus == corpora_.end() || !meta.contains("model_file")) {
          s->status = SessionStatus::Failed;
          s->error = "stored state incomplete";
        } else {
          const auto bytes = detail::read_file_bytes(f.path() / meta["model_file"].get<std::string>());
          auto model = std::make_shared<const Model>(
              model_state_from_json(nlohmann::json::from_cbor(bytes), corpus->second));
          s->topics = std::make_shared<const TopicSnapshot>(snapshot(*model));
          s->model = std::move(model);
        }
      }
      sessions_[s->id] = std::move(s);
    }
  }

  ServiceConfig cfg_;
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, std::shared_ptr<const Corpus>> corpora_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::map<std::string, ReferenceStats> references_;
  std::vector<std::thread> trainers_;
};

}  // namespace hltm
