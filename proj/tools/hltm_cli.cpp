#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hltm/guardian.hpp"
#include "hltm/hltm.hpp"
#include "hltm/service.hpp"

namespace {

void log_line(const std::string& msg) { std::cerr << "[hltm] " << msg << std::endl; }

std::string cell(double m, double sd) {
  if (std::isnan(m)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f (%.2f)", m, sd);
  return buf;
}

void print_summary(const std::vector<hltm::ExperimentRecord>& recs) {
  std::printf("%-18s %-12s %-14s %-14s %-16s %-16s\n", "refinement", "backend", "control:random", "control:good",
              "coherence:random", "coherence:good");
  for (const auto& c : hltm::group_cells(recs)) {
    std::printf("%-18s %-12s %-14s %-14s %-16s %-16s\n", std::string(hltm::to_string(c.refinement)).c_str(),
                std::string(hltm::to_string(c.backend)).c_str(),
                cell(hltm::mean(c.control[0]), hltm::stddev(c.control[0])).c_str(),
                cell(hltm::mean(c.control[1]), hltm::stddev(c.control[1])).c_str(),
                cell(hltm::mean(c.coherence[0]), hltm::stddev(c.coherence[0])).c_str(),
                cell(hltm::mean(c.coherence[1]), hltm::stddev(c.coherence[1])).c_str());
  }
}

std::vector<hltm::ExperimentRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hltm::Error("cannot open " + path);
  return hltm::read_records_csv(in);
}

std::vector<double> parse_group(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw hltm::Error("not a number: '" + item + "'");
    }
  }
  return out;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-in-the-loop topic modeling workbench"};
  app.require_subcommand(1);

  std::string config_path, pool_dir, output_dir, records_path;
  std::size_t threads = 0, runs = 0;
  std::uint64_t seed = 0;

  auto* train_cmd = app.add_subcommand("train-pool", "Train and store the pre-trained model pool");
  train_cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--pool-dir", pool_dir, "Where to store the pool (overrides config)");
  train_cmd->add_option("-j,--threads", threads, "Worker threads (0 = all cores)");

  auto* sim_cmd = app.add_subcommand("simulate", "Run the simulated-user experiment matrix");
  sim_cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("-o,--output", output_dir, "Output directory (overrides config)");
  sim_cmd->add_option("--pool-dir", pool_dir, "Pool directory (overrides config)");
  sim_cmd->add_option("-j,--threads", threads, "Worker threads (0 = all cores)");
  sim_cmd->add_option("--runs", runs, "Runs per cell (overrides config)");
  sim_cmd->add_option("--seed", seed, "Master seed (overrides config)");
  bool quiet = false;
  sim_cmd->add_flag("-q,--quiet", quiet, "Do not print the summary table");

  auto* report_cmd = app.add_subcommand("report", "Rebuild summary.csv and kw.csv from records.csv");
  report_cmd->add_option("records", records_path, "records.csv")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("-o,--output", output_dir, "Write summary.csv and kw.csv here");

  auto* kw_cmd = app.add_subcommand("kw-test", "Kruskal-Wallis test on literal groups or on a records file");
  std::vector<std::string> groups;
  kw_cmd->add_option("--group", groups, "Comma-separated sample; repeat for each group");
  kw_cmd->add_option("--records", records_path, "records.csv; runs one test per refinement/user/measure");

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
  std::string host = "127.0.0.1", workspace, ui_dir;
  int port = 8080;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("-p,--port", port, "Port");
  serve_cmd->add_option("--workspace", workspace, "Session storage (default: $HLTM_WORKSPACE)");
  serve_cmd->add_option("--ui-dir", ui_dir, "Static UI assets (default: $HLTM_UI_DIR)");

  auto* fetch_cmd = app.add_subcommand("fetch", "Download Guardian articles into the JSONL cache");
  hltm::GuardianConfig gcfg;
  fetch_cmd->add_option("--api-key", gcfg.api_key, "API key (default: $GUARDIAN_API_KEY)");
  fetch_cmd->add_option("--sections", gcfg.sections, "Section names")->required()->delimiter(',');
  fetch_cmd->add_option("--per-category", gcfg.per_category, "Articles per section");
  fetch_cmd->add_option("--base-url", gcfg.base_url, "API base URL");
  fetch_cmd->add_option("--cache-dir", gcfg.cache_dir, "Cache directory (default: $HLTM_CACHE_DIR)");

  auto* synth_cmd = app.add_subcommand("synthesize", "Write a synthetic labeled corpus as JSONL");
  hltm::SyntheticConfig scfg;
  std::string synth_out;
  synth_cmd->add_option("-o,--output", synth_out, "Output file")->required();
  synth_cmd->add_option("--categories", scfg.n_categories, "Number of categories");
  synth_cmd->add_option("--docs-per-category", scfg.docs_per_category, "Documents per category");
  synth_cmd->add_option("--vocab-size", scfg.vocab_size, "Vocabulary size");
  synth_cmd->add_option("--doc-length", scfg.doc_length, "Mean document length");
  synth_cmd->add_option("--seed", scfg.seed, "Generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd || *sim_cmd) {
      auto cfg = hltm::load_experiment_config(config_path);
      if (!pool_dir.empty()) cfg.pool_dir = pool_dir;
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      if (threads) cfg.threads = threads;
      if (runs) cfg.runs_per_cell = runs;
      if (seed) cfg.master_seed = seed;
      if (*train_cmd) {
        if (cfg.pool_dir.empty()) throw hltm::Error("no pool directory given");
        auto pool = hltm::train_pool(hltm::load_experiment_corpus(cfg), cfg, log_line);
        hltm::save_pool(pool, cfg.pool_dir);
        log_line("pool of " + std::to_string(pool.entries.size()) + " models written to " + cfg.pool_dir);
        return 0;
      }
      hltm::ModelPool pool;
      const auto ctx = hltm::prepare_experiment(cfg, pool, log_line);
      const auto recs = hltm::run_experiment(ctx, log_line);
      hltm::write_experiment_outputs(recs, cfg.output_dir);
      log_line("outputs written to " + cfg.output_dir);
      if (!quiet) print_summary(recs);
      return 0;
    }
    if (*report_cmd) {
      const auto recs = read_records(records_path);
      if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::ofstream summary(std::filesystem::path(output_dir) / "summary.csv");
        hltm::write_summary_csv(recs, summary);
        std::ofstream kw(std::filesystem::path(output_dir) / "kw.csv");
        hltm::write_kw_csv(recs, kw);
      }
      print_summary(recs);
      return 0;
    }
    if (*kw_cmd) {
      if (!records_path.empty()) {
        hltm::write_kw_csv(read_records(records_path), std::cout);
        return 0;
      }
      std::vector<std::vector<double>> samples;
      for (const auto& g : groups) samples.push_back(parse_group(g));
      const auto r = hltm::kruskal_wallis(samples);
      std::printf("H=%.6g df=%zu p=%.6g\n", r.h, r.df, r.p);
      return 0;
    }
    if (*serve_cmd) {
      auto scfg_env = hltm::service_config_from_env();
      if (!workspace.empty()) scfg_env.workspace = workspace;
      if (!ui_dir.empty()) scfg_env.ui_dir = ui_dir;
      hltm::Service service(scfg_env);
      httplib::Server server;
      service.attach(server);
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      log_line("listening on http://" + host + ":" + std::to_string(port) + " (workspace " +
               scfg_env.workspace.string() + ")");
      if (!server.listen(host, port)) throw hltm::Error("cannot listen on " + host + ":" + std::to_string(port));
      return 0;
    }
    if (*fetch_cmd) {
      if (gcfg.api_key.empty()) {
        if (const char* k = std::getenv("GUARDIAN_API_KEY")) gcfg.api_key = k;
      }
      const auto path = hltm::fetch_guardian_jsonl(gcfg);
      std::cout << path.string() << '\n';
      return 0;
    }
    if (*synth_cmd) {
      const auto corpus = hltm::generate_synthetic(scfg);
      std::ofstream out(synth_out);
      if (!out) throw hltm::Error("cannot write " + synth_out);
      for (const auto& d : corpus.documents()) {
        std::string text;
        for (auto w : d.tokens) {
          if (!text.empty()) text += ' ';
          text += corpus.vocabulary().words()[w];
        }
        out << nlohmann::json{{"id", d.id}, {"text", text}, {"category", d.category}}.dump() << '\n';
      }
      return 0;
    }
  } catch (const hltm::GuardianError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (!e.completed().empty()) {
      std::cerr << "completed sections:";
      for (const auto& s : e.completed()) std::cerr << ' ' << s;
      std::cerr << '\n';
    }
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
