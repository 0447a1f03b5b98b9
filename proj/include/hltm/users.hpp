#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/logreg.hpp"
#include "hltm/model.hpp"

namespace hltm {

enum class UserKind { Random, Good };

inline std::string_view to_string(UserKind u) { return u == UserKind::Random ? "random" : "good"; }

inline UserKind parse_user_kind(std::string_view s) {
  if (s == "random") return UserKind::Random;
  if (s == "good") return UserKind::Good;
  throw Error("unknown user kind '" + std::string(s) + "'");
}

/// What a simulated user can see and know.
struct UserContext {
  const Corpus* corpus = nullptr;
  const CategoryWordIndex* index = nullptr;
  std::size_t display_n = kDefaultDisplayN;
  /// Words of a category list counted as "representative" of it.
  std::size_t representative_n = 50;
  std::size_t seed_count = 10;
};

template <class T>
const T& pick(const std::vector<T>& xs, Rng& rng) {
  return xs.at(uniform_index(rng, xs.size()));
}

inline std::vector<WordId> sample_distinct(std::size_t universe, std::size_t n, Rng& rng) {
  n = std::min(n, universe);
  std::set<WordId> chosen;
  std::vector<WordId> out;
  while (out.size() < n) {
    const auto w = static_cast<WordId>(uniform_index(rng, universe));
    if (chosen.insert(w).second) out.push_back(w);
  }
  return out;
}

/// Uniformly random parameters for the requested refinement.
inline std::optional<RefinementOp> random_refinement(const TopicSnapshot& s, RefinementKind kind,
                                                     const UserContext& ctx, Rng& rng) {
  const std::size_t k = s.topic_count();
  const std::size_t v = s.vocabulary.size();
  const std::size_t t = uniform_index(rng, k);
  const auto top = s.top_words(t, ctx.display_n);
  switch (kind) {
    case RefinementKind::RemoveWord: return RemoveWord{t, pick(top, rng)};
    case RefinementKind::AddWord: {
      WordId w = 0;
      do {
        w = static_cast<WordId>(uniform_index(rng, v));
      } while (w == top.front() && v > 1);
      return AddWord{t, w};
    }
    case RefinementKind::RemoveDocument: return RemoveDocument{t, pick(s.top_docs(t, ctx.display_n), rng)};
    case RefinementKind::MergeTopics: {
      if (k < 2) return std::nullopt;
      std::size_t t2 = uniform_index(rng, k - 1);
      if (t2 >= t) ++t2;
      return MergeTopics{t, t2};
    }
    case RefinementKind::SplitTopic: {
      std::vector<WordId> pool(top.begin(), top.end());
      shuffle_in_place(pool, rng);
      pool.resize(std::min(ctx.seed_count, pool.size() > 1 ? pool.size() - 1 : pool.size()));
      return SplitTopic{t, pool};
    }
    case RefinementKind::ChangeWordOrder: {
      if (top.size() < 2) return std::nullopt;
      std::size_t i = uniform_index(rng, top.size());
      std::size_t j = uniform_index(rng, top.size() - 1);
      if (j >= i) ++j;
      if (i > j) std::swap(i, j);
      return ChangeWordOrder{t, top[i], top[j]};
    }
    case RefinementKind::CreateTopic: return CreateTopic{sample_distinct(v, ctx.seed_count, rng)};
  }
  return std::nullopt;
}

/// Category make-up of a topic's top documents.
struct TopicLabels {
  std::map<std::size_t, std::size_t> counts;  // category index -> documents
  std::size_t dominant = 0;
  std::size_t runner_up = 0;  // valid when mixed()
  bool mixed() const { return counts.size() > 1; }
};

/// Plurality label of the top documents; ties go to the category that
/// sorts first by name.
inline TopicLabels topic_labels(const TopicSnapshot& s, std::size_t t, const Corpus& corpus, std::size_t n) {
  TopicLabels l;
  for (auto d : s.top_docs(t, n)) ++l.counts[corpus.category_index(d)];
  std::vector<std::pair<std::size_t, std::size_t>> order(l.counts.begin(), l.counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  l.dominant = order.front().first;
  if (order.size() > 1) l.runner_up = order[1].first;
  return l;
}

/// Parameters a well-intentioned user would choose: focus a topic on its
/// dominant category. Returns nullopt when no topic qualifies.
inline std::optional<RefinementOp> good_refinement(const TopicSnapshot& s, RefinementKind kind, const UserContext& ctx,
                                                   Rng& rng) {
  const Corpus& corpus = *ctx.corpus;
  const CategoryWordIndex& idx = *ctx.index;
  const std::size_t k = s.topic_count();
  const std::size_t n = ctx.display_n;
  std::vector<TopicLabels> labels;
  for (std::size_t t = 0; t < k; ++t) labels.push_back(topic_labels(s, t, corpus, n));

  auto representative = [&](std::size_t c) {
    const auto top = idx.top(c, ctx.representative_n);
    return std::set<std::uint32_t>(top.begin(), top.end());
  };

  switch (kind) {
    case RefinementKind::AddWord: {
      std::vector<std::pair<std::size_t, std::vector<WordId>>> eligible;
      for (std::size_t t = 0; t < k; ++t) {
        if (!labels[t].mixed()) continue;
        const auto shown_v = s.top_words(t, n);
        const std::set<std::uint32_t> shown(shown_v.begin(), shown_v.end());
        std::vector<WordId> cands;
        for (auto w : idx.ranked[labels[t].dominant]) {
          if (cands.size() == 5) break;
          if (!shown.contains(w)) cands.push_back(w);
        }
        if (!cands.empty()) eligible.emplace_back(t, std::move(cands));
      }
      if (eligible.empty()) return std::nullopt;
      const auto& [t, cands] = pick(eligible, rng);
      return AddWord{t, pick(cands, rng)};
    }
    case RefinementKind::RemoveWord: {
      std::vector<std::pair<std::size_t, std::vector<WordId>>> eligible;
      for (std::size_t t = 0; t < k; ++t) {
        if (!labels[t].mixed()) continue;
        const auto rep = representative(labels[t].dominant);
        std::vector<WordId> cands;
        for (auto w : s.top_words(t, std::min<std::size_t>(10, n))) {
          if (cands.size() == 5) break;
          if (!rep.contains(w)) cands.push_back(w);
        }
        if (!cands.empty()) eligible.emplace_back(t, std::move(cands));
      }
      if (eligible.empty()) return std::nullopt;
      const auto& [t, cands] = pick(eligible, rng);
      return RemoveWord{t, pick(cands, rng)};
    }
    case RefinementKind::ChangeWordOrder: {
      // promote a word from ranks 11..20 that its category ranks above the
      // rank-10 word
      std::vector<std::pair<std::size_t, std::vector<WordId>>> eligible;
      for (std::size_t t = 0; t < k; ++t) {
        const auto top = s.top_words(t, n);
        if (top.size() < 11) continue;
        const std::size_t c = labels[t].dominant;
        const WordId anchor = top[9];
        const auto anchor_pos = idx.position(c, anchor);
        std::vector<WordId> cands;
        for (std::size_t i = 10; i < top.size(); ++i) {
          if (idx.position(c, top[i]) < anchor_pos) cands.push_back(top[i]);
        }
        if (!cands.empty()) eligible.emplace_back(t, std::move(cands));
      }
      if (eligible.empty()) return std::nullopt;
      const auto& [t, cands] = pick(eligible, rng);
      return ChangeWordOrder{t, s.top_words(t, n)[9], pick(cands, rng)};
    }
    case RefinementKind::RemoveDocument: {
      std::vector<std::pair<std::size_t, std::vector<std::size_t>>> eligible;
      for (std::size_t t = 0; t < k; ++t) {
        if (!labels[t].mixed()) continue;
        std::vector<std::size_t> cands;
        for (auto d : s.top_docs(t, n)) {
          if (cands.size() == 5) break;
          if (corpus.category_index(d) != labels[t].dominant) cands.push_back(d);
        }
        if (!cands.empty()) eligible.emplace_back(t, std::move(cands));
      }
      if (eligible.empty()) return std::nullopt;
      const auto& [t, cands] = pick(eligible, rng);
      return RemoveDocument{t, pick(cands, rng)};
    }
    case RefinementKind::MergeTopics: {
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a + 1; b < k; ++b) {
          if (labels[a].dominant == labels[b].dominant) pairs.emplace_back(a, b);
        }
      }
      if (pairs.empty()) return std::nullopt;
      auto [a, b] = pick(pairs, rng);
      if (uniform01(rng) < 0.5) std::swap(a, b);
      return MergeTopics{a, b};
    }
    case RefinementKind::CreateTopic: {
      std::set<std::size_t> dominant;
      for (const auto& l : labels) dominant.insert(l.dominant);
      std::vector<std::size_t> absent;
      for (std::size_t c = 0; c < corpus.categories().size(); ++c) {
        if (!dominant.contains(c)) absent.push_back(c);
      }
      if (absent.empty()) return std::nullopt;
      const auto c = pick(absent, rng);
      const auto seeds = idx.top(c, ctx.seed_count);
      return CreateTopic{{seeds.begin(), seeds.end()}};
    }
    case RefinementKind::SplitTopic: {
      std::vector<std::pair<std::size_t, std::vector<WordId>>> eligible;
      for (std::size_t t = 0; t < k; ++t) {
        if (!labels[t].mixed()) continue;
        const std::size_t c1 = labels[t].dominant, c2 = labels[t].runner_up;
        const auto top = s.top_words(t, n);
        std::vector<WordId> second;
        for (auto w : top) {
          if (idx.position(c2, w) < idx.position(c1, w)) second.push_back(w);
        }
        if (!second.empty() && second.size() < top.size()) eligible.emplace_back(t, std::move(second));
      }
      if (eligible.empty()) return std::nullopt;
      const auto& [t, seeds] = pick(eligible, rng);
      return SplitTopic{t, seeds};
    }
  }
  return std::nullopt;
}

}  // namespace hltm
