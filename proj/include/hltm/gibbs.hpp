#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/model.hpp"

namespace hltm {

inline double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

inline constexpr std::int32_t kUnassigned = -1;

/// Collapsed Gibbs sampler state. Token assignments are stored
/// document-major; tallies always equal the counts implied by z, with
/// unassigned (forgotten) tokens excluded everywhere.
struct GibbsState {
  std::shared_ptr<const Corpus> corpus;
  std::vector<std::size_t> doc_offset;  // D + 1 offsets into z
  std::vector<std::int32_t> z;
  Matrix<std::int32_t> n_dt;  // D x K
  Matrix<std::int32_t> n_wt;  // V x K
  std::vector<std::int64_t> n_t;
  PriorSet priors;
  ConstraintSet constraints;
  Rng rng;

  std::size_t topics() const { return n_t.size(); }
  std::size_t docs() const { return corpus->num_documents(); }
  std::size_t words() const { return corpus->vocab_size(); }
  std::int32_t& assignment(std::size_t d, std::size_t i) { return z[doc_offset[d] + i]; }
  std::int32_t assignment(std::size_t d, std::size_t i) const { return z[doc_offset[d] + i]; }

  void assign(std::size_t d, WordId w, std::int32_t& slot, std::int32_t t) {
    slot = t;
    ++n_dt(d, static_cast<std::size_t>(t));
    ++n_wt(w, static_cast<std::size_t>(t));
    ++n_t[static_cast<std::size_t>(t)];
  }
  void unassign(std::size_t d, WordId w, std::int32_t& slot) {
    const auto t = static_cast<std::size_t>(slot);
    --n_dt(d, t);
    --n_wt(w, t);
    --n_t[t];
    slot = kUnassigned;
  }
};

namespace detail {

inline std::vector<std::size_t> offsets_of(const Corpus& c) {
  std::vector<std::size_t> off(c.num_documents() + 1, 0);
  for (std::size_t d = 0; d < c.num_documents(); ++d) off[d + 1] = off[d] + c.document(d).tokens.size();
  return off;
}

}  // namespace detail

/// Recomputes tallies from z.
inline void rebuild_counts(GibbsState& s) {
  const std::size_t k = s.priors.topics();
  s.n_dt = Matrix<std::int32_t>(s.docs(), k, 0);
  s.n_wt = Matrix<std::int32_t>(s.words(), k, 0);
  s.n_t.assign(k, 0);
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const auto& toks = s.corpus->document(d).tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      const auto t = s.assignment(d, i);
      if (t == kUnassigned) continue;
      if (t < 0 || static_cast<std::size_t>(t) >= k) throw Error("assignment out of topic range");
      ++s.n_dt(d, static_cast<std::size_t>(t));
      ++s.n_wt(toks[i], static_cast<std::size_t>(t));
      ++s.n_t[static_cast<std::size_t>(t)];
    }
  }
}

/// Builds a state from explicit assignments (kUnassigned allowed).
inline GibbsState make_gibbs_state(std::shared_ptr<const Corpus> corpus, PriorSet priors,
                                   std::vector<std::int32_t> z, std::uint64_t seed) {
  GibbsState s;
  s.corpus = std::move(corpus);
  s.doc_offset = detail::offsets_of(*s.corpus);
  if (z.size() != s.doc_offset.back()) throw Error("assignment vector does not match corpus size");
  if (priors.alpha.rows() != s.docs() || priors.beta.cols() != s.words() ||
      priors.alpha.cols() != priors.beta.rows()) {
    throw Error("prior dimensions do not match corpus");
  }
  s.z = std::move(z);
  s.priors = std::move(priors);
  s.rng.seed(seed);
  rebuild_counts(s);
  return s;
}

/// Random uniform initial assignment with symmetric priors.
inline GibbsState init_gibbs(std::shared_ptr<const Corpus> corpus, std::size_t topics, double alpha0,
                             double beta0, std::uint64_t seed) {
  if (topics < 1) throw Error("topic count must be >= 1");
  auto priors = PriorSet::symmetric(corpus->num_documents(), topics, corpus->vocab_size(), alpha0, beta0);
  Rng rng(seed);
  std::vector<std::int32_t> z(corpus->token_count());
  for (auto& t : z) t = static_cast<std::int32_t>(uniform_index(rng, topics));
  return make_gibbs_state(std::move(corpus), std::move(priors), std::move(z), mix_seed(seed));
}

/// Throws if the stored tallies differ from a recount of z.
inline void audit_counts(const GibbsState& s) {
  GibbsState copy;
  copy.corpus = s.corpus;
  copy.doc_offset = s.doc_offset;
  copy.z = s.z;
  copy.priors = s.priors;
  rebuild_counts(copy);
  if (!(copy.n_dt == s.n_dt) || !(copy.n_wt == s.n_wt) || copy.n_t != s.n_t) {
    throw Error("count audit failed: tallies differ from assignments");
  }
}

/// Unnormalized Gibbs score for one topic.
inline double topic_score(double n_dt, double alpha_dt, double n_wt, double beta_tw, double n_t,
                          double beta_sum_t) {
  return (n_dt + alpha_dt) * (n_wt + beta_tw) / (n_t + beta_sum_t);
}

/// Normalized conditional for an unassigned token (d, i).
inline std::vector<double> conditional_distribution(const GibbsState& s, std::size_t d, std::size_t i) {
  if (s.assignment(d, i) != kUnassigned) {
    throw Error("conditional_distribution: token must be unassigned first");
  }
  const WordId w = s.corpus->document(d).tokens[i];
  const std::size_t k = s.topics();
  std::vector<double> p(k);
  double total = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    double score = topic_score(s.n_dt(d, t), s.priors.alpha(d, t), s.n_wt(w, t), s.priors.beta(t, w),
                               static_cast<double>(s.n_t[t]), s.priors.beta_sum(t));
    if (!s.constraints.empty()) score *= std::exp(s.constraints.potential(t, w, static_cast<std::uint32_t>(d)));
    p[t] = score;
    total += score;
  }
  if (!(total > 0.0)) throw Error("conditional_distribution: all topic scores are zero");
  for (auto& x : p) x /= total;
  return p;
}

/// Runs n full sweeps in document order. Forgotten tokens are drawn fresh
/// and rejoin the tallies.
inline void sweep(GibbsState& s, std::size_t n_iterations) {
  const std::size_t k = s.topics();
  const std::size_t v = s.words();
  const std::size_t docs = s.docs();

  // word-major copy of beta for contiguous access inside the token loop
  std::vector<double> beta_t(v * k);
  std::vector<double> beta_sum(k);
  for (std::size_t t = 0; t < k; ++t) {
    beta_sum[t] = s.priors.beta_sum(t);
    for (std::size_t w = 0; w < v; ++w) beta_t[w * k + t] = s.priors.beta(t, w);
  }

  // dense exp(potential) tables per constrained word / document
  std::vector<std::int32_t> word_entry(v, -1);
  std::vector<std::int32_t> doc_entry(docs, -1);
  std::vector<std::vector<double>> factors;
  for (const auto& e : s.constraints.entries()) {
    std::vector<double> f(k);
    for (std::size_t t = 0; t < k; ++t) f[t] = std::exp(e.value(t));
    auto& slot = e.scope == ConstraintScope::Word ? word_entry.at(e.target) : doc_entry.at(e.target);
    slot = static_cast<std::int32_t>(factors.size());
    factors.push_back(std::move(f));
  }

  std::vector<double> cumulative(k);
  std::vector<double> inv_denominator(k);
  for (std::size_t it = 0; it < n_iterations; ++it) {
    for (std::size_t t = 0; t < k; ++t) inv_denominator[t] = 1.0 / (static_cast<double>(s.n_t[t]) + beta_sum[t]);
    for (std::size_t d = 0; d < docs; ++d) {
      const auto& toks = s.corpus->document(d).tokens;
      const double* alpha = &s.priors.alpha(d, 0);
      std::int32_t* ndt = &s.n_dt(d, 0);
      const std::int32_t de = doc_entry[d];
      for (std::size_t i = 0; i < toks.size(); ++i) {
        const WordId w = toks[i];
        std::int32_t& slot = s.z[s.doc_offset[d] + i];
        if (slot != kUnassigned) {
          const auto old = static_cast<std::size_t>(slot);
          s.unassign(d, w, slot);
          inv_denominator[old] = 1.0 / (static_cast<double>(s.n_t[old]) + beta_sum[old]);
        }
        const std::int32_t* nwt = &s.n_wt(w, 0);
        const double* bw = &beta_t[w * k];
        const std::int32_t we = word_entry[w];
        double total = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          double score = (ndt[t] + alpha[t]) * (nwt[t] + bw[t]) * inv_denominator[t];
          if (we >= 0) score *= factors[static_cast<std::size_t>(we)][t];
          if (de >= 0) score *= factors[static_cast<std::size_t>(de)][t];
          total += score;
          cumulative[t] = total;
        }
        if (!(total > 0.0)) throw Error("sweep: all topic scores are zero");
        const double u = uniform01(s.rng) * total;
        std::size_t pick = 0;
        while (pick + 1 < k && cumulative[pick] <= u) ++pick;
        s.assign(d, w, slot, static_cast<std::int32_t>(pick));
        inv_denominator[pick] = 1.0 / (static_cast<double>(s.n_t[pick]) + beta_sum[pick]);
      }
    }
  }
}

/// Unassigns every token of w currently in `topic` (or in any topic).
inline std::size_t forget_word_topic(GibbsState& s, WordId w, std::optional<std::size_t> topic) {
  std::size_t forgotten = 0;
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const auto& toks = s.corpus->document(d).tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i] != w) continue;
      auto& slot = s.assignment(d, i);
      if (slot == kUnassigned) continue;
      if (topic && static_cast<std::size_t>(slot) != *topic) continue;
      s.unassign(d, w, slot);
      ++forgotten;
    }
  }
  return forgotten;
}

/// Unassigns every token of w except those currently in `keep`.
inline std::size_t forget_word_except(GibbsState& s, WordId w, std::size_t keep) {
  std::size_t forgotten = 0;
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const auto& toks = s.corpus->document(d).tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i] != w) continue;
      auto& slot = s.assignment(d, i);
      if (slot == kUnassigned || static_cast<std::size_t>(slot) == keep) continue;
      s.unassign(d, w, slot);
      ++forgotten;
    }
  }
  return forgotten;
}

inline std::size_t forget_document(GibbsState& s, std::size_t d) {
  const auto& toks = s.corpus->document(d).tokens;
  std::size_t forgotten = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    auto& slot = s.assignment(d, i);
    if (slot == kUnassigned) continue;
    s.unassign(d, toks[i], slot);
    ++forgotten;
  }
  return forgotten;
}

/// Collapsed joint log p(w, z | alpha, beta) over assigned tokens.
inline double log_likelihood(const GibbsState& s) {
  const std::size_t k = s.topics();
  double ll = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    const double bsum = s.priors.beta_sum(t);
    ll += log_gamma(bsum) - log_gamma(static_cast<double>(s.n_t[t]) + bsum);
    for (std::size_t w = 0; w < s.words(); ++w) {
      const int n = s.n_wt(w, t);
      if (n == 0) continue;  // lgamma(beta) - lgamma(beta) cancels
      const double b = s.priors.beta(t, w);
      ll += log_gamma(n + b) - log_gamma(b);
    }
  }
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const double asum = s.priors.alpha_sum(d);
    double n_d = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      const int n = s.n_dt(d, t);
      if (n == 0) continue;
      n_d += n;
      const double a = s.priors.alpha(d, t);
      ll += log_gamma(n + a) - log_gamma(a);
    }
    ll += log_gamma(asum) - log_gamma(n_d + asum);
  }
  return ll;
}

struct GibbsRunReport {
  std::size_t sweeps = 0;
  double log_likelihood = 0.0;
  bool converged = false;
};

/// Sweeps until the relative change in log-likelihood between consecutive
/// sweeps drops below tol, or max_sweeps is reached.
inline GibbsRunReport run_gibbs(GibbsState& s, std::size_t max_sweeps, double tol) {
  GibbsRunReport r;
  std::optional<double> previous;
  for (std::size_t i = 0; i < max_sweeps; ++i) {
    sweep(s, 1);
    ++r.sweeps;
    r.log_likelihood = log_likelihood(s);
    if (previous && std::abs(r.log_likelihood - *previous) < tol * std::abs(*previous)) {
      r.converged = true;
      break;
    }
    previous = r.log_likelihood;
  }
  return r;
}

// --- topic structure edits used by refinements ----------------------------

inline std::size_t gibbs_append_topic(GibbsState& s) {
  s.priors.append_topic();
  s.n_dt.append_col(0);
  s.n_wt.append_col(0);
  s.n_t.push_back(0);
  return s.topics() - 1;
}

/// Reassigns every token of `from` to `into`, then deletes topic `from`.
inline void gibbs_merge_topics(GibbsState& s, std::size_t into, std::size_t from) {
  for (auto& t : s.z) {
    if (t == static_cast<std::int32_t>(from)) t = static_cast<std::int32_t>(into);
  }
  for (auto& t : s.z) {
    if (t > static_cast<std::int32_t>(from)) --t;
  }
  s.priors.erase_topic(from);
  s.constraints.erase_topic(from);
  rebuild_counts(s);
}

/// Moves one token's assignment to `to`.
inline void gibbs_move_token(GibbsState& s, std::size_t d, std::size_t i, std::size_t to) {
  const WordId w = s.corpus->document(d).tokens[i];
  auto& slot = s.assignment(d, i);
  if (slot != kUnassigned) s.unassign(d, w, slot);
  s.assign(d, w, slot, static_cast<std::int32_t>(to));
}

/// Point estimate of phi for topic t (unnormalized smoothed counts).
inline std::vector<double> gibbs_word_scores(const GibbsState& s, std::size_t t) {
  std::vector<double> out(s.words());
  const double denom = static_cast<double>(s.n_t[t]) + s.priors.beta_sum(t);
  for (std::size_t w = 0; w < s.words(); ++w) out[w] = (s.n_wt(w, t) + s.priors.beta(t, w)) / denom;
  return out;
}

inline std::vector<double> gibbs_doc_scores(const GibbsState& s, std::size_t t) {
  std::vector<double> out(s.docs());
  for (std::size_t d = 0; d < s.docs(); ++d) {
    double n_d = 0.0;
    for (std::size_t j = 0; j < s.topics(); ++j) n_d += s.n_dt(d, j);
    out[d] = (s.n_dt(d, t) + s.priors.alpha(d, t)) / (n_d + s.priors.alpha_sum(d));
  }
  return out;
}

}  // namespace hltm
