#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/gibbs.hpp"
#include "hltm/model.hpp"

namespace hltm {

/// Digamma by upward recurrence to x >= 6 followed by the asymptotic
/// series through x^-14. Absolute error is below 1e-12 for x >= 1e-3.
inline double digamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw Error("digamma: argument must be positive and finite");
  double shift = 0.0;
  while (x < 6.0) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli terms B_2k / (2k)
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12.0))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

/// Per-document word-type counts, the form the E-step works on.
struct BagOfWords {
  std::vector<std::vector<std::pair<WordId, double>>> docs;
  std::vector<double> lengths;

  static BagOfWords from_corpus(const Corpus& c) {
    BagOfWords b;
    b.docs.resize(c.num_documents());
    b.lengths.resize(c.num_documents());
    std::vector<std::uint32_t> counts(c.vocab_size(), 0);
    for (std::size_t d = 0; d < c.num_documents(); ++d) {
      const auto& toks = c.document(d).tokens;
      for (auto w : toks) ++counts[w];
      for (auto w : toks) {
        if (counts[w] == 0) continue;
        b.docs[d].emplace_back(w, counts[w]);
        counts[w] = 0;
      }
      std::sort(b.docs[d].begin(), b.docs[d].end());
      b.lengths[d] = static_cast<double>(toks.size());
    }
    return b;
  }
};

/// Mean-field state: lambda (topics x words) and gamma (documents x
/// topics). Word responsibilities are recomputed inside each E-step and
/// never stored.
struct VbState {
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const BagOfWords> bags;
  Matrix<double> lambda;
  Matrix<double> gamma;
  PriorSet priors;

  std::size_t topics() const { return lambda.rows(); }
  std::size_t docs() const { return gamma.rows(); }
  std::size_t words() const { return lambda.cols(); }
};

struct EStepOptions {
  double tolerance = 1e-3;          // mean absolute gamma change
  std::size_t max_iterations = 100;
};

/// exp(E[log phi_{t,w}]) stored word-major, each word column scaled so
/// its largest entry is 1 (the scale cancels when responsibilities are
/// normalized).
struct TopicWordExpectations {
  std::size_t topics = 0;
  std::vector<double> scaled_exp;  // V x K
  std::vector<double> log_values;  // V x K, unscaled E[log phi]
};

inline TopicWordExpectations topic_word_expectations(const VbState& s) {
  const std::size_t k = s.topics();
  const std::size_t v = s.words();
  TopicWordExpectations e;
  e.topics = k;
  e.scaled_exp.resize(v * k);
  e.log_values.resize(v * k);
  for (std::size_t t = 0; t < k; ++t) {
    const double row_total = digamma(sum(s.lambda.row(t)));
    for (std::size_t w = 0; w < v; ++w) e.log_values[w * k + t] = digamma(s.lambda(t, w)) - row_total;
  }
  for (std::size_t w = 0; w < v; ++w) {
    const double* lv = &e.log_values[w * k];
    const double mx = *std::max_element(lv, lv + k);
    for (std::size_t t = 0; t < k; ++t) e.scaled_exp[w * k + t] = std::exp(lv[t] - mx);
  }
  return e;
}

struct EStepResult {
  std::vector<double> gamma;
  std::size_t iterations = 0;
};

namespace detail {

// Responsibilities of one word type given exp(E[log theta]) (scaled) and
// E[log theta] itself. Falls back to log space if the scaled products all
// underflow.
inline void word_responsibilities(const TopicWordExpectations& ew, WordId w, const std::vector<double>& exp_theta,
                                  const std::vector<double>& log_theta, std::vector<double>& out) {
  const std::size_t k = ew.topics;
  const double* eb = &ew.scaled_exp[static_cast<std::size_t>(w) * k];
  double norm = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    out[t] = exp_theta[t] * eb[t];
    norm += out[t];
  }
  if (norm > 1e-280) {
    for (std::size_t t = 0; t < k; ++t) out[t] /= norm;
    return;
  }
  const double* lb = &ew.log_values[static_cast<std::size_t>(w) * k];
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < k; ++t) mx = std::max(mx, log_theta[t] + lb[t]);
  norm = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    out[t] = std::exp(log_theta[t] + lb[t] - mx);
    norm += out[t];
  }
  for (std::size_t t = 0; t < k; ++t) out[t] /= norm;
}

inline void theta_expectations(std::span<const double> gamma, std::vector<double>& log_theta,
                               std::vector<double>& exp_theta) {
  const std::size_t k = gamma.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < k; ++t) {
    log_theta[t] = digamma(gamma[t]);
    mx = std::max(mx, log_theta[t]);
  }
  for (std::size_t t = 0; t < k; ++t) exp_theta[t] = std::exp(log_theta[t] - mx);
}

}  // namespace detail

/// Coordinate ascent on one document's gamma and responsibilities, warm
/// started from the stored gamma row. When `stats` is given, the final
/// responsibilities (weighted by counts) are added to it (K x V).
inline EStepResult e_step(const VbState& s, std::size_t d, const TopicWordExpectations& ew,
                          const EStepOptions& opt = {}, Matrix<double>* stats = nullptr) {
  const std::size_t k = s.topics();
  const auto& bag = s.bags->docs.at(d);
  const auto alpha = s.priors.alpha.row(d);
  EStepResult r;
  r.gamma.assign(s.gamma.row(d).begin(), s.gamma.row(d).end());
  std::vector<double> log_theta(k), exp_theta(k), pi(k), next(k);
  std::vector<double> doc_pi(bag.size() * k);

  if (bag.empty()) {
    std::copy(alpha.begin(), alpha.end(), r.gamma.begin());
    return r;
  }
  for (std::size_t it = 0; it < std::max<std::size_t>(1, opt.max_iterations); ++it) {
    detail::theta_expectations(r.gamma, log_theta, exp_theta);
    std::copy(alpha.begin(), alpha.end(), next.begin());
    for (std::size_t j = 0; j < bag.size(); ++j) {
      const auto [w, count] = bag[j];
      detail::word_responsibilities(ew, w, exp_theta, log_theta, pi);
      std::copy(pi.begin(), pi.end(), doc_pi.begin() + static_cast<std::ptrdiff_t>(j * k));
      for (std::size_t t = 0; t < k; ++t) next[t] += count * pi[t];
    }
    double change = 0.0;
    for (std::size_t t = 0; t < k; ++t) change += std::abs(next[t] - r.gamma[t]);
    r.gamma.swap(next);
    ++r.iterations;
    if (change / static_cast<double>(k) < opt.tolerance) break;
  }
  // the responsibilities of the last pass are exactly the ones behind r.gamma
  if (stats) {
    for (std::size_t j = 0; j < bag.size(); ++j) {
      const auto [w, count] = bag[j];
      for (std::size_t t = 0; t < k; ++t) (*stats)(t, w) += count * doc_pi[j * k + t];
    }
  }
  return r;
}

/// lambda = beta + expected topic-word counts.
inline void m_step(VbState& s, const Matrix<double>& stats) {
  if (stats.rows() != s.topics() || stats.cols() != s.words()) throw Error("m_step: statistics shape mismatch");
  for (std::size_t t = 0; t < s.topics(); ++t) {
    for (std::size_t w = 0; w < s.words(); ++w) s.lambda(t, w) = s.priors.beta(t, w) + stats(t, w);
  }
}

/// One full EM iteration: every document's E-step against the current
/// lambda, then the M-step.
inline void em_iteration(VbState& s, const EStepOptions& opt = {}) {
  const auto ew = topic_word_expectations(s);
  Matrix<double> stats(s.topics(), s.words(), 0.0);
  for (std::size_t d = 0; d < s.docs(); ++d) {
    auto r = e_step(s, d, ew, opt, &stats);
    std::copy(r.gamma.begin(), r.gamma.end(), s.gamma.row(d).begin());
  }
  m_step(s, stats);
}

/// Evidence lower bound for smoothed LDA with asymmetric Dirichlet priors,
/// with responsibilities at their optimum for the current gamma/lambda.
inline double elbo(const VbState& s) {
  const std::size_t k = s.topics();
  const auto ew = topic_word_expectations(s);
  double bound = 0.0;
  std::vector<double> log_theta(k);
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const auto gamma = s.gamma.row(d);
    const auto alpha = s.priors.alpha.row(d);
    const double gsum = sum(gamma);
    const double dg_sum = digamma(gsum);
    for (std::size_t t = 0; t < k; ++t) log_theta[t] = digamma(gamma[t]) - dg_sum;
    // sum_n sum_t pi (E log theta + E log phi - log pi) = log sum_t exp(...)
    for (const auto& [w, count] : s.bags->docs[d]) {
      const double* lb = &ew.log_values[static_cast<std::size_t>(w) * k];
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < k; ++t) mx = std::max(mx, log_theta[t] + lb[t]);
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += std::exp(log_theta[t] + lb[t] - mx);
      bound += count * (mx + std::log(acc));
    }
    bound += log_gamma(sum(alpha)) - log_gamma(gsum);
    for (std::size_t t = 0; t < k; ++t) {
      bound += (alpha[t] - gamma[t]) * log_theta[t] - log_gamma(alpha[t]) + log_gamma(gamma[t]);
    }
  }
  for (std::size_t t = 0; t < k; ++t) {
    const auto beta = s.priors.beta.row(t);
    const auto lam = s.lambda.row(t);
    bound += log_gamma(sum(beta)) - log_gamma(sum(lam));
    for (std::size_t w = 0; w < s.words(); ++w) {
      if (beta[w] == lam[w]) continue;  // term vanishes
      bound += (beta[w] - lam[w]) * ew.log_values[w * k + t] - log_gamma(beta[w]) + log_gamma(lam[w]);
    }
  }
  return bound;
}

/// lambda_{t,w} := beta_{t,w}.
inline void forget_lambda(VbState& s, WordId w, std::size_t t) { s.lambda(t, w) = s.priors.beta(t, w); }

/// Resets a document's gamma to the uninformed starting point.
inline void forget_gamma(VbState& s, std::size_t d) {
  const double share = s.bags->lengths.at(d) / static_cast<double>(s.topics());
  for (std::size_t t = 0; t < s.topics(); ++t) s.gamma(d, t) = s.priors.alpha(d, t) + share;
}

struct EmReport {
  std::size_t iterations = 0;
  double elbo = 0.0;
  bool converged = false;
  std::vector<double> trace;  // bound after each iteration
};

/// Alternates E and M steps until the relative bound change is below tol
/// or max_iterations is reached.
inline EmReport run_em(VbState& s, std::size_t max_iterations, double tol = 1e-5, const EStepOptions& opt = {}) {
  EmReport r;
  double previous = elbo(s);
  for (std::size_t i = 0; i < max_iterations; ++i) {
    em_iteration(s, opt);
    ++r.iterations;
    r.elbo = elbo(s);
    r.trace.push_back(r.elbo);
    if (std::abs(r.elbo - previous) < tol * std::abs(previous)) {
      r.converged = true;
      break;
    }
    previous = r.elbo;
  }
  return r;
}

/// lambda = beta + U[0,1) noise, gamma = alpha + N_d / K.
inline VbState init_vb(std::shared_ptr<const Corpus> corpus, std::size_t topics, double alpha0, double beta0,
                       std::uint64_t seed) {
  if (topics < 1) throw Error("topic count must be >= 1");
  VbState s;
  s.bags = std::make_shared<const BagOfWords>(BagOfWords::from_corpus(*corpus));
  s.priors = PriorSet::symmetric(corpus->num_documents(), topics, corpus->vocab_size(), alpha0, beta0);
  s.corpus = std::move(corpus);
  Rng rng(seed);
  s.lambda = s.priors.beta;
  for (auto& x : s.lambda.data()) x += uniform01(rng);
  s.gamma = Matrix<double>(s.corpus->num_documents(), topics);
  for (std::size_t d = 0; d < s.docs(); ++d) forget_gamma(s, d);
  return s;
}

inline std::vector<double> vb_word_scores(const VbState& s, std::size_t t) {
  const auto row = s.lambda.row(t);
  const double total = sum(row);
  std::vector<double> out(row.begin(), row.end());
  for (auto& x : out) x /= total;
  return out;
}

inline std::vector<double> vb_doc_scores(const VbState& s, std::size_t t) {
  std::vector<double> out(s.docs());
  for (std::size_t d = 0; d < s.docs(); ++d) out[d] = s.gamma(d, t) / sum(s.gamma.row(d));
  return out;
}

// --- topic structure edits used by refinements ----------------------------

/// Appends a topic whose lambda row equals its prior row and whose gamma
/// column equals its alpha column.
inline std::size_t vb_append_topic(VbState& s) {
  s.priors.append_topic();
  const std::size_t t = s.priors.topics() - 1;
  s.lambda.append_row(0.0);
  for (std::size_t w = 0; w < s.words(); ++w) s.lambda(t, w) = s.priors.beta(t, w);
  s.gamma.append_col(0.0);
  for (std::size_t d = 0; d < s.docs(); ++d) s.gamma(d, t) = s.priors.alpha(d, t);
  return t;
}

/// Adds `from`'s accumulated excess over its priors into `into`, then
/// deletes `from`.
inline void vb_merge_topics(VbState& s, std::size_t into, std::size_t from) {
  for (std::size_t w = 0; w < s.words(); ++w) s.lambda(into, w) += s.lambda(from, w) - s.priors.beta(from, w);
  for (std::size_t d = 0; d < s.docs(); ++d) s.gamma(d, into) += s.gamma(d, from) - s.priors.alpha(d, from);
  s.lambda.erase_row(from);
  s.gamma.erase_col(from);
  s.priors.erase_topic(from);
}

}  // namespace hltm
