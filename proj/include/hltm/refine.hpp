#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <variant>

#include "hltm/backend.hpp"
#include "hltm/common.hpp"
#include "hltm/gibbs.hpp"
#include "hltm/model.hpp"
#include "hltm/vb.hpp"

namespace hltm {

struct RefineConfig {
  std::size_t display_n = kDefaultDisplayN;
  double epsilon = kEpsilon;
  double high_prior = kHighPrior;
  /// Use -inf instead of log(epsilon) for const-gibbs penalties.
  bool hard_constraints = false;
  /// Share of a split topic's non-seed mass moved to the new topic.
  double split_fraction = 0.5;
  InferenceConfig inference;

  double penalty() const {
    return hard_constraints ? -std::numeric_limits<double>::infinity() : std::log(epsilon);
  }
};

struct RefinementOutcome {
  TopicSnapshot pre;
  TopicSnapshot post;
  RefinementOp op;
  Backend backend = Backend::InfoGibbs;
  InferenceReport inference;
};

/// Prior increment for add_word: the gap to the topic's top word, never
/// negative.
inline double add_word_increment(double top_word_mass, double word_mass) {
  return std::max(0.0, top_word_mass - word_mass);
}

/// const-gibbs change_word_order penalty for w2 outside t. r is the count
/// gap divided by w2's tokens outside t; no outside tokens means r = +inf.
inline double reorder_delta(double n_w1_t, double n_w2_t, double n_w2_elsewhere, double penalty) {
  if (n_w2_elsewhere <= 0.0) return penalty;
  const double r = (n_w1_t - n_w2_t) / n_w2_elsewhere;
  return r > 1.0 ? penalty : 1.0 - r;
}

namespace detail {

inline ConstraintEntry word_constraint(WordId w, std::map<std::size_t, double> values, double otherwise) {
  return ConstraintEntry{ConstraintScope::Word, w, std::move(values), otherwise};
}

inline void check_preconditions(const Model& m, const RefinementOp& op, const RefineConfig& cfg) {
  const auto& corpus = m.corpus();
  validate(op, m.topics(), corpus.vocab_size(), corpus.num_documents());
  if (auto* o = std::get_if<RemoveWord>(&op)) {
    const auto ranked = rank_words(m, o->topic);
    if (rank_of(ranked, o->word) > cfg.display_n) {
      throw Error("remove_word: word is not among the topic's top " + std::to_string(cfg.display_n));
    }
  } else if (auto* o = std::get_if<AddWord>(&op)) {
    if (rank_words(m, o->topic).front() == o->word) throw Error("add_word: word is already the top word");
  } else if (auto* o = std::get_if<ChangeWordOrder>(&op)) {
    const auto ranked = rank_words(m, o->topic);
    if (rank_of(ranked, o->word2) <= rank_of(ranked, o->word1)) {
      throw Error("change_word_order: word2 must currently rank below word1");
    }
  }
}

inline std::set<WordId> seed_set(const std::vector<WordId>& seeds) { return {seeds.begin(), seeds.end()}; }

// --- Gibbs backends ---------------------------------------------------------

inline void gibbs_split(GibbsState& g, std::size_t t, const std::set<WordId>& seeds, double fraction) {
  const std::size_t tn = gibbs_append_topic(g);
  for (std::size_t d = 0; d < g.docs(); ++d) {
    const auto& toks = g.corpus->document(d).tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (g.assignment(d, i) != static_cast<std::int32_t>(t)) continue;
      const bool move = seeds.contains(toks[i]) || uniform01(g.rng) < fraction;
      if (move) gibbs_move_token(g, d, i, tn);
    }
  }
}

inline void apply_gibbs(Model& m, const RefinementOp& op, const RefineConfig& cfg) {
  auto& g = m.gibbs();
  const bool info = m.backend == Backend::InfoGibbs;
  const double penalty = cfg.penalty();
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RemoveWord>) {
          forget_word_topic(g, o.word, o.topic);
          if (info) {
            g.priors.beta(o.topic, o.word) = cfg.epsilon;
          } else {
            g.constraints.set(word_constraint(o.word, {{o.topic, penalty}}, 0.0));
          }
        } else if constexpr (std::is_same_v<T, AddWord>) {
          const WordId top = rank_words(m, o.topic).front();
          const double inc = add_word_increment(g.n_wt(top, o.topic), g.n_wt(o.word, o.topic));
          forget_word_except(g, o.word, o.topic);
          if (info) {
            g.priors.beta(o.topic, o.word) += inc;
          } else {
            g.constraints.set(word_constraint(o.word, {{o.topic, 0.0}}, penalty));
          }
        } else if constexpr (std::is_same_v<T, RemoveDocument>) {
          forget_document(g, o.document);
          if (info) {
            g.priors.alpha(o.document, o.topic) = cfg.epsilon;
          } else {
            g.constraints.set(ConstraintEntry{ConstraintScope::Document, static_cast<std::uint32_t>(o.document),
                                              {{o.topic, penalty}}, 0.0});
          }
        } else if constexpr (std::is_same_v<T, MergeTopics>) {
          gibbs_merge_topics(g, o.topic1, o.topic2);
        } else if constexpr (std::is_same_v<T, SplitTopic>) {
          const auto seeds = seed_set(o.seeds);
          gibbs_split(g, o.topic, seeds, cfg.split_fraction);
          const std::size_t tn = g.topics() - 1;
          for (auto s : seeds) {
            if (info) {
              g.priors.beta(tn, s) = cfg.high_prior;
            } else {
              g.constraints.set(word_constraint(s, {{tn, 0.0}}, penalty));
            }
          }
        } else if constexpr (std::is_same_v<T, ChangeWordOrder>) {
          const double n1 = g.n_wt(o.word1, o.topic);
          const double n2 = g.n_wt(o.word2, o.topic);
          if (info) {
            g.priors.beta(o.topic, o.word2) += std::max(0.0, n1 - n2);
          } else {
            double total = 0.0;
            for (std::size_t t = 0; t < g.topics(); ++t) total += g.n_wt(o.word2, t);
            const double delta = reorder_delta(n1, n2, total - n2, penalty);
            g.constraints.set(word_constraint(o.word2, {{o.topic, 0.0}}, delta));
          }
        } else {
          const auto seeds = seed_set(o.seeds);
          const std::size_t tn = gibbs_append_topic(g);
          for (auto s : seeds) {
            forget_word_topic(g, s, std::nullopt);
            if (info) {
              g.priors.beta(tn, s) = cfg.high_prior;
            } else {
              g.constraints.set(word_constraint(s, {{tn, 0.0}}, penalty));
            }
          }
        }
      },
      op);
}

// --- variational backend ----------------------------------------------------

inline void vb_split(VbState& s, std::size_t t, const std::set<WordId>& seeds, double fraction, double high_prior) {
  const std::size_t tn = vb_append_topic(s);
  for (auto w : seeds) s.priors.beta(tn, w) = high_prior;
  for (std::size_t w = 0; w < s.words(); ++w) {
    const double excess = s.lambda(t, w) - s.priors.beta(t, w);
    const double moved = seeds.contains(static_cast<WordId>(w)) ? excess : fraction * excess;
    s.lambda(t, w) -= moved;
    s.lambda(tn, w) = s.priors.beta(tn, w) + moved;
  }
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const double moved = fraction * (s.gamma(d, t) - s.priors.alpha(d, t));
    s.gamma(d, t) -= moved;
    s.gamma(d, tn) = s.priors.alpha(d, tn) + moved;
  }
}

inline void apply_vb(Model& m, const RefinementOp& op, const RefineConfig& cfg) {
  auto& s = m.vb();
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RemoveWord>) {
          s.priors.beta(o.topic, o.word) = cfg.epsilon;
          forget_lambda(s, o.word, o.topic);
        } else if constexpr (std::is_same_v<T, AddWord>) {
          const WordId top = rank_words(m, o.topic).front();
          const double inc = add_word_increment(s.lambda(o.topic, top), s.lambda(o.topic, o.word));
          for (std::size_t t = 0; t < s.topics(); ++t) {
            if (t != o.topic) forget_lambda(s, o.word, t);
          }
          s.priors.beta(o.topic, o.word) += inc;
        } else if constexpr (std::is_same_v<T, RemoveDocument>) {
          s.priors.alpha(o.document, o.topic) = cfg.epsilon;
          forget_gamma(s, o.document);
        } else if constexpr (std::is_same_v<T, MergeTopics>) {
          vb_merge_topics(s, o.topic1, o.topic2);
        } else if constexpr (std::is_same_v<T, SplitTopic>) {
          vb_split(s, o.topic, seed_set(o.seeds), cfg.split_fraction, cfg.high_prior);
        } else if constexpr (std::is_same_v<T, ChangeWordOrder>) {
          s.priors.beta(o.topic, o.word2) += std::max(0.0, s.lambda(o.topic, o.word1) - s.lambda(o.topic, o.word2));
        } else {
          const auto seeds = seed_set(o.seeds);
          const std::size_t old_k = s.topics();
          for (auto w : seeds) {
            for (std::size_t t = 0; t < old_k; ++t) forget_lambda(s, w, t);
          }
          const std::size_t tn = vb_append_topic(s);
          for (auto w : seeds) {
            s.priors.beta(tn, w) = cfg.high_prior;
            s.lambda(tn, w) = cfg.high_prior;
          }
        }
      },
      op);
}

}  // namespace detail

/// Applies the injection step of a refinement without running inference.
inline void inject(Model& m, const RefinementOp& op, const RefineConfig& cfg = {}) {
  detail::check_preconditions(m, op, cfg);
  if (is_gibbs(m.backend)) {
    detail::apply_gibbs(m, op, cfg);
  } else {
    detail::apply_vb(m, op, cfg);
  }
}

/// Snapshot, inject, run capped inference, snapshot again.
inline RefinementOutcome refine(Model& m, const RefinementOp& op, const RefineConfig& cfg = {}) {
  detail::check_preconditions(m, op, cfg);
  RefinementOutcome out;
  out.op = op;
  out.backend = m.backend;
  out.pre = snapshot(m);
  if (is_gibbs(m.backend)) {
    detail::apply_gibbs(m, op, cfg);
  } else {
    detail::apply_vb(m, op, cfg);
  }
  out.inference = run_capped_inference(m, cfg.inference);
  out.post = snapshot(m);
  return out;
}

}  // namespace hltm
