#pragma once

#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "hltm/backend.hpp"
#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/io.hpp"
#include "hltm/logreg.hpp"
#include "hltm/metrics.hpp"
#include "hltm/model.hpp"
#include "hltm/refine.hpp"
#include "hltm/stats.hpp"
#include "hltm/users.hpp"

namespace hltm {

struct ExperimentConfig {
  /// JSONL corpus; empty means generate a synthetic one.
  std::string corpus_path;
  PreprocessConfig preprocess;
  SyntheticConfig synthetic;

  std::vector<Backend> backends{std::begin(kAllBackends), std::end(kAllBackends)};
  std::vector<RefinementKind> refinements{std::begin(kAllRefinements), std::end(kAllRefinements)};
  std::vector<UserKind> users{UserKind::Random, UserKind::Good};

  std::size_t runs_per_cell = 100;
  std::size_t small_k = 10;
  std::size_t large_k = 20;
  /// Models per K value, per model family.
  std::size_t pool_size = 20;
  std::uint64_t master_seed = 1;
  std::size_t max_retries = 10;
  std::size_t representative_n = 50;
  /// 0 = one worker per hardware thread.
  std::size_t threads = 0;
  std::string output_dir = "hltm-out";
  /// Load the pool from here when present; train and save it otherwise.
  std::string pool_dir;

  TrainingConfig training;
  RefineConfig refine;
  LogisticRegressionConfig logreg;
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  ExperimentConfig c;
  read_opt(j, "corpus_path", c.corpus_path);
  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    read_opt(p, "min_df", c.preprocess.min_df);
    read_opt(p, "max_df_fraction", c.preprocess.max_df_fraction);
    read_opt(p, "min_token_length", c.preprocess.min_token_length);
  }
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    read_opt(s, "n_categories", c.synthetic.n_categories);
    read_opt(s, "docs_per_category", c.synthetic.docs_per_category);
    read_opt(s, "vocab_size", c.synthetic.vocab_size);
    read_opt(s, "doc_length", c.synthetic.doc_length);
    read_opt(s, "seed", c.synthetic.seed);
    read_opt(s, "signature_weight", c.synthetic.signature_weight);
    read_opt(s, "zipf_exponent", c.synthetic.zipf_exponent);
  }
  if (j.contains("backends")) {
    c.backends.clear();
    for (const auto& b : j["backends"]) c.backends.push_back(parse_backend(b.get<std::string>()));
  }
  if (j.contains("refinements")) {
    c.refinements.clear();
    for (const auto& r : j["refinements"]) c.refinements.push_back(parse_refinement_kind(r.get<std::string>()));
  }
  if (j.contains("users")) {
    c.users.clear();
    for (const auto& u : j["users"]) c.users.push_back(parse_user_kind(u.get<std::string>()));
  }
  read_opt(j, "runs_per_cell", c.runs_per_cell);
  read_opt(j, "small_k", c.small_k);
  read_opt(j, "large_k", c.large_k);
  read_opt(j, "pool_size", c.pool_size);
  read_opt(j, "master_seed", c.master_seed);
  read_opt(j, "max_retries", c.max_retries);
  read_opt(j, "representative_n", c.representative_n);
  read_opt(j, "threads", c.threads);
  read_opt(j, "output_dir", c.output_dir);
  read_opt(j, "pool_dir", c.pool_dir);
  if (j.contains("training")) {
    const auto& t = j["training"];
    read_opt(t, "alpha", c.training.alpha);
    read_opt(t, "beta", c.training.beta);
    read_opt(t, "gibbs_sweeps", c.training.gibbs_sweeps);
    read_opt(t, "vb_iterations", c.training.vb_iterations);
    read_opt(t, "vb_tolerance", c.training.vb_tolerance);
  }
  if (j.contains("refine")) {
    const auto& r = j["refine"];
    read_opt(r, "display_n", c.refine.display_n);
    read_opt(r, "epsilon", c.refine.epsilon);
    read_opt(r, "high_prior", c.refine.high_prior);
    read_opt(r, "hard_constraints", c.refine.hard_constraints);
    read_opt(r, "split_fraction", c.refine.split_fraction);
    read_opt(r, "max_sweeps", c.refine.inference.max_sweeps);
    read_opt(r, "gibbs_tolerance", c.refine.inference.gibbs_tolerance);
    read_opt(r, "max_em_iterations", c.refine.inference.max_em_iterations);
  }
  if (j.contains("logreg")) {
    const auto& l = j["logreg"];
    read_opt(l, "l2", c.logreg.l2);
    read_opt(l, "learning_rate", c.logreg.learning_rate);
    read_opt(l, "epochs", c.logreg.epochs);
  }
  if (c.runs_per_cell == 0) throw Error("runs_per_cell must be positive");
  if (c.pool_size == 0) throw Error("pool_size must be positive");
  if (c.small_k < 2 || c.large_k < 2) throw Error("K values must be at least 2");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return experiment_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline std::shared_ptr<const Corpus> load_experiment_corpus(const ExperimentConfig& c) {
  if (c.corpus_path.empty()) return std::make_shared<const Corpus>(generate_synthetic(c.synthetic));
  return std::make_shared<const Corpus>(ingest_jsonl(c.corpus_path, c.preprocess));
}

// --- model pool -------------------------------------------------------------

enum class ModelFamily { Gibbs, Vb };

inline ModelFamily family_of(Backend b) { return is_gibbs(b) ? ModelFamily::Gibbs : ModelFamily::Vb; }

struct PoolEntry {
  ModelFamily family = ModelFamily::Gibbs;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  Model model;
};

/// Pre-trained models. Gibbs entries serve both Gibbs backends. Seeds are
/// matched across families: entry i of a given K uses the same seed in
/// both.
struct ModelPool {
  std::shared_ptr<const Corpus> corpus;
  std::vector<PoolEntry> entries;

  std::vector<std::size_t> candidates(Backend b, std::size_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].family == family_of(b) && entries[i].k == k) out.push_back(i);
    }
    return out;
  }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

using ProgressFn = std::function<void(const std::string&)>;

inline ModelPool train_pool(std::shared_ptr<const Corpus> corpus, const ExperimentConfig& cfg,
                            const ProgressFn& progress = {}) {
  std::vector<ModelFamily> families;
  for (auto b : cfg.backends) {
    if (std::find(families.begin(), families.end(), family_of(b)) == families.end()) families.push_back(family_of(b));
  }
  std::vector<std::size_t> ks{cfg.small_k};
  if (cfg.large_k != cfg.small_k) ks.push_back(cfg.large_k);

  ModelPool pool;
  pool.corpus = corpus;
  for (auto f : families) {
    for (auto k : ks) {
      for (std::size_t i = 0; i < cfg.pool_size; ++i) {
        pool.entries.push_back(PoolEntry{f, k, derive_seed(cfg.master_seed, {0x9001, k, i}), {}});
      }
    }
  }
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  parallel_for(pool.entries.size(), cfg.threads, [&](std::size_t i) {
    auto& e = pool.entries[i];
    const Backend b = e.family == ModelFamily::Gibbs ? Backend::InfoGibbs : Backend::InfoVb;
    e.model = train_model(corpus, b, e.k, e.seed, cfg.training);
    if (progress) {
      std::lock_guard lock(log_mutex);
      progress("trained pool model " + std::to_string(++done) + "/" + std::to_string(pool.entries.size()));
    }
  });
  return pool;
}

/// Pool layout: manifest.json, corpus.cbor and one CBOR file per entry.
inline void save_pool(const ModelPool& pool, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  detail::write_file_atomic(dir / "corpus.cbor", nlohmann::json::to_cbor(corpus_to_json(*pool.corpus)));
  nlohmann::json manifest{{"entries", nlohmann::json::array()}};
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    const auto& e = pool.entries[i];
    const std::string file = "model-" + std::to_string(i) + ".cbor";
    detail::write_file_atomic(dir / file, nlohmann::json::to_cbor(model_state_to_json(e.model)));
    manifest["entries"].push_back({{"family", e.family == ModelFamily::Gibbs ? "gibbs" : "vb"},
                                   {"k", e.k},
                                   {"seed", e.seed},
                                   {"file", file}});
  }
  const auto text = manifest.dump(2);
  detail::write_file_atomic(dir / "manifest.json", {text.begin(), text.end()});
}

inline ModelPool load_pool(const std::filesystem::path& dir) {
  ModelPool pool;
  pool.corpus =
      std::make_shared<const Corpus>(corpus_from_json(nlohmann::json::from_cbor(detail::read_file_bytes(dir / "corpus.cbor"))));
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("no pool manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  for (const auto& m : manifest.at("entries")) {
    PoolEntry e;
    e.family = m.at("family").get<std::string>() == "gibbs" ? ModelFamily::Gibbs : ModelFamily::Vb;
    e.k = m.at("k").get<std::size_t>();
    e.seed = m.at("seed").get<std::uint64_t>();
    const auto bytes = detail::read_file_bytes(dir / m.at("file").get<std::string>());
    e.model = model_state_from_json(nlohmann::json::from_cbor(bytes), pool.corpus);
    pool.entries.push_back(std::move(e));
  }
  return pool;
}

// --- experiment -------------------------------------------------------------

struct ExperimentRecord {
  Backend backend = Backend::InfoGibbs;
  RefinementKind refinement = RefinementKind::RemoveWord;
  UserKind user = UserKind::Random;
  std::size_t run_index = 0;
  double control = std::nan("");
  double coherence_delta = std::nan("");
  std::uint64_t seed = 0;
  std::size_t attempts = 0;
  std::size_t pool_index = 0;
  bool ok = false;
  std::string op;  // wire encoding, empty if no run succeeded
  std::string error;
  double elapsed_ms = 0.0;
};

/// Everything shared by all runs of one experiment.
struct ExperimentContext {
  ExperimentConfig config;
  const ModelPool* pool = nullptr;
  CategoryWordIndex index;
  ReferenceStats reference;
};

inline std::size_t pool_k_for(RefinementKind kind, const ExperimentConfig& cfg) {
  return kind == RefinementKind::CreateTopic || kind == RefinementKind::SplitTopic ? cfg.small_k : cfg.large_k;
}

inline std::size_t backend_ordinal(Backend b) { return static_cast<std::size_t>(b); }

/// One cell entry: draw a pooled model and an op, refine, measure. Redraws
/// on ineligible models and on errors, at most max_retries times.
inline ExperimentRecord run_single(const ExperimentContext& ctx, Backend backend, RefinementKind kind, UserKind user,
                                   std::size_t run_index) {
  const auto& cfg = ctx.config;
  const auto start = std::chrono::steady_clock::now();
  ExperimentRecord rec;
  rec.backend = backend;
  rec.refinement = kind;
  rec.user = user;
  rec.run_index = run_index;
  rec.seed = derive_seed(cfg.master_seed, {backend_ordinal(backend), static_cast<std::uint64_t>(kind),
                                           static_cast<std::uint64_t>(user), run_index});
  Rng rng(rec.seed);
  const auto candidates = ctx.pool->candidates(backend, pool_k_for(kind, cfg));
  if (candidates.empty()) throw Error("model pool has no entries for " + std::string(to_string(backend)));
  const UserContext uctx{ctx.pool->corpus.get(), &ctx.index, cfg.refine.display_n, cfg.representative_n, 10};

  for (std::size_t attempt = 0; attempt <= cfg.max_retries && !rec.ok; ++attempt) {
    rec.attempts = attempt + 1;
    rec.pool_index = pick(candidates, rng);
    Model m = ctx.pool->entries[rec.pool_index].model;
    m.backend = backend;
    if (is_gibbs(backend)) m.gibbs().rng.seed(derive_seed(rec.seed, {attempt}));
    const auto shown = snapshot(m);
    const auto op = user == UserKind::Random ? random_refinement(shown, kind, uctx, rng)
                                             : good_refinement(shown, kind, uctx, rng);
    if (!op) {
      rec.error = "no eligible topic";
      continue;
    }
    try {
      const auto outcome = refine(m, *op, cfg.refine);
      rec.control = control_score(outcome, cfg.refine.display_n).value;
      rec.coherence_delta = coherence_delta(outcome.pre, outcome.post, ctx.reference, cfg.refine.display_n);
      rec.op = op_to_json(*op, &ctx.pool->corpus->vocabulary()).dump();
      rec.ok = true;
      rec.error.clear();
    } catch (const Error& e) {
      rec.error = e.what();
    }
  }
  rec.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

inline std::vector<ExperimentRecord> run_experiment(const ExperimentContext& ctx, const ProgressFn& progress = {}) {
  struct Job {
    Backend b;
    RefinementKind k;
    UserKind u;
    std::size_t run;
  };
  const auto& cfg = ctx.config;
  std::vector<Job> jobs;
  for (auto k : cfg.refinements) {
    for (auto b : cfg.backends) {
      for (auto u : cfg.users) {
        for (std::size_t r = 0; r < cfg.runs_per_cell; ++r) jobs.push_back({b, k, u, r});
      }
    }
  }
  std::vector<ExperimentRecord> out(jobs.size());
  std::atomic<std::size_t> done{0};
  std::mutex log_mutex;
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t i) {
    out[i] = run_single(ctx, jobs[i].b, jobs[i].k, jobs[i].u, jobs[i].run);
    const auto n = ++done;
    if (progress && (n % 50 == 0 || n == jobs.size())) {
      std::lock_guard lock(log_mutex);
      progress("completed " + std::to_string(n) + "/" + std::to_string(jobs.size()) + " runs");
    }
  });
  return out;
}

/// Loads or trains everything an experiment needs.
inline ExperimentContext prepare_experiment(const ExperimentConfig& cfg, ModelPool& pool_storage,
                                            const ProgressFn& progress = {}) {
  if (!cfg.pool_dir.empty() && std::filesystem::exists(std::filesystem::path(cfg.pool_dir) / "manifest.json")) {
    if (progress) progress("loading model pool from " + cfg.pool_dir);
    pool_storage = load_pool(cfg.pool_dir);
  } else {
    pool_storage = train_pool(load_experiment_corpus(cfg), cfg, progress);
    if (!cfg.pool_dir.empty()) save_pool(pool_storage, cfg.pool_dir);
  }
  ExperimentContext ctx;
  ctx.config = cfg;
  ctx.pool = &pool_storage;
  if (progress) progress("training category classifier");
  ctx.index = representative_words(*pool_storage.corpus, cfg.logreg);
  ctx.reference = ReferenceStats::from_corpus(*pool_storage.corpus);
  return ctx;
}

// --- tables -----------------------------------------------------------------

inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

inline const char* kRecordsHeader = "backend,refinement,user,run,control,coherence_delta,seed,attempts,pool_index,status,op";

inline void write_records_csv(const std::vector<ExperimentRecord>& recs, std::ostream& out) {
  out << kRecordsHeader << '\n';
  for (const auto& r : recs) {
    out << to_string(r.backend) << ',' << to_string(r.refinement) << ',' << to_string(r.user) << ',' << r.run_index
        << ',' << format_real(r.control) << ',' << format_real(r.coherence_delta) << ',' << r.seed << ','
        << r.attempts << ',' << r.pool_index << ',' << (r.ok ? "ok" : csv_field("failed: " + r.error)) << ','
        << csv_field(r.op) << '\n';
  }
}

inline void write_timings_csv(const std::vector<ExperimentRecord>& recs, std::ostream& out) {
  out << "backend,refinement,user,run,elapsed_ms\n";
  for (const auto& r : recs) {
    out << to_string(r.backend) << ',' << to_string(r.refinement) << ',' << to_string(r.user) << ',' << r.run_index
        << ',' << format_real(r.elapsed_ms) << '\n';
  }
}

inline std::vector<ExperimentRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kRecordsHeader) throw Error("records file has an unexpected header");
  std::vector<ExperimentRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = parse_csv_line(line);
    if (f.size() != 11) throw Error("records line " + std::to_string(lineno) + ": expected 11 fields");
    ExperimentRecord r;
    try {
      r.backend = parse_backend(f[0]);
      r.refinement = parse_refinement_kind(f[1]);
      r.user = parse_user_kind(f[2]);
      r.run_index = std::stoull(f[3]);
      r.control = f[4] == "nan" ? std::nan("") : std::stod(f[4]);
      r.coherence_delta = f[5] == "nan" ? std::nan("") : std::stod(f[5]);
      r.seed = std::stoull(f[6]);
      r.attempts = std::stoull(f[7]);
      r.pool_index = std::stoull(f[8]);
      r.ok = f[9] == "ok";
      if (!r.ok && f[9].rfind("failed: ", 0) == 0) r.error = f[9].substr(8);
      r.op = f[10];
    } catch (const std::logic_error&) {
      throw Error("records line " + std::to_string(lineno) + ": malformed value");
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct CellSummary {
  RefinementKind refinement;
  Backend backend;
  std::vector<double> control[2];    // by user kind
  std::vector<double> coherence[2];  // by user kind
};

inline std::vector<CellSummary> group_cells(const std::vector<ExperimentRecord>& recs) {
  std::map<std::pair<int, int>, CellSummary> cells;
  for (const auto& r : recs) {
    auto key = std::make_pair(static_cast<int>(r.refinement), static_cast<int>(r.backend));
    auto [it, fresh] = cells.try_emplace(key, CellSummary{r.refinement, r.backend, {}, {}});
    if (!r.ok) continue;
    const int u = static_cast<int>(r.user);
    it->second.control[u].push_back(r.control);
    it->second.coherence[u].push_back(r.coherence_delta);
  }
  std::vector<CellSummary> out;
  for (auto& [k, v] : cells) out.push_back(std::move(v));
  return out;
}

/// Mean (SD) per refinement x backend, one column pair per user kind and
/// measure.
inline void write_summary_csv(const std::vector<ExperimentRecord>& recs, std::ostream& out) {
  out << "refinement,backend,control_random_mean,control_random_sd,control_good_mean,control_good_sd,"
         "coherence_random_mean,coherence_random_sd,coherence_good_mean,coherence_good_sd,n_random,n_good\n";
  for (const auto& c : group_cells(recs)) {
    out << to_string(c.refinement) << ',' << to_string(c.backend);
    for (const auto* v : {&c.control[0], &c.control[1], &c.coherence[0], &c.coherence[1]}) {
      out << ',' << format_real(mean(*v)) << ',' << format_real(stddev(*v));
    }
    out << ',' << c.control[0].size() << ',' << c.control[1].size() << '\n';
  }
}

struct KwRow {
  RefinementKind refinement;
  UserKind user;
  std::string measure;
  KruskalWallisResult result;
  std::size_t n = 0;
};

/// One omnibus test per refinement, user kind and measure, across backends.
inline std::vector<KwRow> kw_tests(const std::vector<ExperimentRecord>& recs) {
  const auto cells = group_cells(recs);
  std::vector<KwRow> rows;
  std::map<int, std::vector<const CellSummary*>> by_kind;
  for (const auto& c : cells) by_kind[static_cast<int>(c.refinement)].push_back(&c);
  for (const auto& [kind, group] : by_kind) {
    for (int u = 0; u < 2; ++u) {
      for (int measure = 0; measure < 2; ++measure) {
        std::vector<std::vector<double>> samples;
        std::size_t n = 0;
        for (const auto* c : group) {
          const auto& v = measure == 0 ? c->control[u] : c->coherence[u];
          if (!v.empty()) {
            samples.push_back(v);
            n += v.size();
          }
        }
        if (samples.size() < 2) continue;
        rows.push_back({static_cast<RefinementKind>(kind), static_cast<UserKind>(u),
                        measure == 0 ? "control" : "coherence", kruskal_wallis(samples), n});
      }
    }
  }
  return rows;
}

inline void write_kw_csv(const std::vector<ExperimentRecord>& recs, std::ostream& out) {
  out << "refinement,user,measure,chi2,df,p,n\n";
  for (const auto& r : kw_tests(recs)) {
    out << to_string(r.refinement) << ',' << to_string(r.user) << ',' << r.measure << ',' << format_real(r.result.h)
        << ',' << r.result.df << ',' << format_real(r.result.p) << ',' << r.n << '\n';
  }
}

inline void write_experiment_outputs(const std::vector<ExperimentRecord>& recs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const char* name, auto writer) {
    std::ostringstream s;
    writer(recs, s);
    const auto text = s.str();
    detail::write_file_atomic(dir / name, {text.begin(), text.end()});
  };
  emit("records.csv", write_records_csv);
  emit("timings.csv", write_timings_csv);
  emit("summary.csv", write_summary_csv);
  emit("kw.csv", write_kw_csv);
}

}  // namespace hltm
