#pragma once

#include <memory>
#include <variant>

#include <nlohmann/json.hpp>

#include "hltm/common.hpp"
#include "hltm/gibbs.hpp"
#include "hltm/model.hpp"
#include "hltm/vb.hpp"

namespace hltm {

struct TrainingConfig {
  double alpha = 0.1;
  double beta = 0.01;
  std::size_t gibbs_sweeps = 500;
  std::size_t vb_iterations = 100;
  double vb_tolerance = 1e-5;
  EStepOptions e_step;
};

/// Caps and stopping rules for inference after a refinement.
struct InferenceConfig {
  std::size_t max_sweeps = 20;
  double gibbs_tolerance = 1e-4;
  std::size_t max_em_iterations = 3;
  double vb_tolerance = 1e-5;
  EStepOptions e_step;
};

/// A topic model under one of the three backends. info-gibbs and
/// const-gibbs share the Gibbs state and differ only in how refinements
/// inject feedback.
struct Model {
  Backend backend = Backend::InfoGibbs;
  std::variant<GibbsState, VbState> state;

  GibbsState& gibbs() { return std::get<GibbsState>(state); }
  const GibbsState& gibbs() const { return std::get<GibbsState>(state); }
  VbState& vb() { return std::get<VbState>(state); }
  const VbState& vb() const { return std::get<VbState>(state); }

  std::size_t topics() const {
    return std::visit([](const auto& s) { return s.topics(); }, state);
  }
  const Corpus& corpus() const {
    return std::visit([](const auto& s) -> const Corpus& { return *s.corpus; }, state);
  }
  std::shared_ptr<const Corpus> corpus_ptr() const {
    return std::visit([](const auto& s) { return s.corpus; }, state);
  }
  const PriorSet& priors() const {
    return std::visit([](const auto& s) -> const PriorSet& { return s.priors; }, state);
  }
};

inline Model train_model(std::shared_ptr<const Corpus> corpus, Backend backend, std::size_t topics,
                         std::uint64_t seed, const TrainingConfig& cfg = {}) {
  if (is_gibbs(backend)) {
    auto s = init_gibbs(std::move(corpus), topics, cfg.alpha, cfg.beta, seed);
    sweep(s, cfg.gibbs_sweeps);
    return Model{backend, std::move(s)};
  }
  auto s = init_vb(std::move(corpus), topics, cfg.alpha, cfg.beta, seed);
  run_em(s, cfg.vb_iterations, cfg.vb_tolerance, cfg.e_step);
  return Model{backend, std::move(s)};
}

struct InferenceReport {
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;  // log-likelihood or ELBO
};

inline InferenceReport run_capped_inference(Model& m, const InferenceConfig& cfg = {}) {
  if (is_gibbs(m.backend)) {
    auto r = run_gibbs(m.gibbs(), cfg.max_sweeps, cfg.gibbs_tolerance);
    return {r.sweeps, r.converged, r.log_likelihood};
  }
  auto r = run_em(m.vb(), cfg.max_em_iterations, cfg.vb_tolerance, cfg.e_step);
  return {r.iterations, r.converged, r.elbo};
}

/// Unnormalized-but-proportional word scores of topic t.
inline std::vector<double> word_scores(const Model& m, std::size_t t) {
  if (t >= m.topics()) throw Error("topic out of range: " + std::to_string(t));
  return is_gibbs(m.backend) ? gibbs_word_scores(m.gibbs(), t) : vb_word_scores(m.vb(), t);
}

inline std::vector<double> doc_scores(const Model& m, std::size_t t) {
  if (t >= m.topics()) throw Error("topic out of range: " + std::to_string(t));
  return is_gibbs(m.backend) ? gibbs_doc_scores(m.gibbs(), t) : vb_doc_scores(m.vb(), t);
}

inline std::vector<std::uint32_t> rank_words(const Model& m, std::size_t t) {
  return rank_descending(word_scores(m, t));
}

inline std::vector<std::uint32_t> rank_documents(const Model& m, std::size_t t) {
  return rank_descending(doc_scores(m, t));
}

inline TopicSnapshot snapshot(const Model& m) {
  TopicSnapshot s;
  s.backend = m.backend;
  const auto& corpus = m.corpus();
  s.vocabulary = corpus.vocabulary().words();
  s.priors = m.priors();
  if (is_gibbs(m.backend)) s.constraints = m.gibbs().constraints;
  const std::size_t k = m.topics();
  s.word_probs = Matrix<double>(k, corpus.vocab_size());
  s.doc_probs = Matrix<double>(corpus.num_documents(), k);
  for (std::size_t t = 0; t < k; ++t) {
    auto ws = word_scores(m, t);
    std::copy(ws.begin(), ws.end(), s.word_probs.row(t).begin());
    auto ds = doc_scores(m, t);
    for (std::size_t d = 0; d < ds.size(); ++d) s.doc_probs(d, t) = ds[d];
  }
  rebuild_rankings(s);
  return s;
}

// --- full state persistence (pool files, sessions) -------------------------

inline nlohmann::json model_state_to_json(const Model& m) {
  nlohmann::json j{{"backend", to_string(m.backend)}, {"priors", priors_to_json(m.priors())}};
  if (is_gibbs(m.backend)) {
    const auto& g = m.gibbs();
    j["z"] = g.z;
    j["constraints"] = constraints_to_json(g.constraints);
    std::ostringstream rng;
    rng << g.rng;
    j["rng"] = rng.str();
  } else {
    j["lambda"] = detail::matrix_to_json(m.vb().lambda);
    j["gamma"] = detail::matrix_to_json(m.vb().gamma);
  }
  return j;
}

inline Model model_state_from_json(const nlohmann::json& j, std::shared_ptr<const Corpus> corpus) {
  const auto backend = parse_backend(j.at("backend").get<std::string>());
  auto priors = priors_from_json(j.at("priors"));
  if (is_gibbs(backend)) {
    auto s = make_gibbs_state(std::move(corpus), std::move(priors), j.at("z").get<std::vector<std::int32_t>>(), 0);
    s.constraints = constraints_from_json(j.at("constraints"));
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    return Model{backend, std::move(s)};
  }
  VbState s;
  s.bags = std::make_shared<const BagOfWords>(BagOfWords::from_corpus(*corpus));
  s.corpus = std::move(corpus);
  s.priors = std::move(priors);
  s.lambda = detail::matrix_from_json(j.at("lambda"));
  s.gamma = detail::matrix_from_json(j.at("gamma"));
  if (s.lambda.cols() != s.corpus->vocab_size() || s.gamma.rows() != s.corpus->num_documents()) {
    throw Error("stored VB state does not match corpus");
  }
  return Model{backend, std::move(s)};
}

}  // namespace hltm
