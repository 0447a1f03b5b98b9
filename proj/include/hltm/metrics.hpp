#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/model.hpp"
#include "hltm/refine.hpp"

namespace hltm {

struct ControlScore {
  double value = 0.0;
  RefinementKind kind = RefinementKind::RemoveWord;
  nlohmann::json details;
};

// Rank-based control. Ranks are 1-based.

/// (r1 - r2) / (r1 - 1); a word already at rank 1 counts as full control.
inline double control_add(std::size_t r1, std::size_t r2) {
  if (r1 == 1) return 1.0;
  return (static_cast<double>(r1) - static_cast<double>(r2)) / (static_cast<double>(r1) - 1.0);
}

/// min(1, (r2 - r1) / ((display_n + 1) - r1)); an item already beyond the
/// display counts as full control.
inline double control_remove(std::size_t r1, std::size_t r2, std::size_t display_n) {
  if (r1 > display_n) return 1.0;
  const double expected = static_cast<double>(display_n + 1) - static_cast<double>(r1);
  return std::min(1.0, (static_cast<double>(r2) - static_cast<double>(r1)) / expected);
}

/// (r_w2_before - r_w2_after) / (r_w2_before - r_w1_before); unclipped.
inline double control_reorder(std::size_t w2_before, std::size_t w2_after, std::size_t w1_before) {
  if (w2_before == w1_before) throw Error("control_reorder: both words share one rank");
  return (static_cast<double>(w2_before) - static_cast<double>(w2_after)) /
         (static_cast<double>(w2_before) - static_cast<double>(w1_before));
}

/// Fraction of seeds present in the created topic's top words.
inline double control_create(std::span<const WordId> seeds, std::span<const std::uint32_t> top) {
  const std::set<WordId> uniq(seeds.begin(), seeds.end());
  if (uniq.empty()) throw Error("control_create: no seeds");
  const std::set<std::uint32_t> shown(top.begin(), top.end());
  std::size_t hit = 0;
  for (auto s : uniq) hit += shown.contains(s);
  return static_cast<double>(hit) / static_cast<double>(uniq.size());
}

/// Fraction of the merged topic's shown words that came from either parent.
inline double control_merge(std::span<const std::uint32_t> parent1_top, std::span<const std::uint32_t> parent2_top,
                            std::span<const std::uint32_t> merged_top) {
  if (merged_top.empty()) throw Error("control_merge: empty merged list");
  std::set<std::uint32_t> parents(parent1_top.begin(), parent1_top.end());
  parents.insert(parent2_top.begin(), parent2_top.end());
  std::size_t hit = 0;
  for (auto w : merged_top) hit += parents.contains(w);
  return static_cast<double>(hit) / static_cast<double>(merged_top.size());
}

/// Mean of the child score (seed coverage) and the parent score (share
/// of the original non-seed words still shown in the parent).
inline double control_split(std::span<const std::uint32_t> before_top, std::span<const WordId> seeds,
                            std::span<const std::uint32_t> parent_after_top,
                            std::span<const std::uint32_t> child_after_top) {
  const double child = control_create(seeds, child_after_top);
  const std::set<WordId> seed_set(seeds.begin(), seeds.end());
  const std::set<std::uint32_t> parent_shown(parent_after_top.begin(), parent_after_top.end());
  std::size_t kept = 0, total = 0;
  for (auto w : before_top) {
    if (seed_set.contains(w)) continue;
    ++total;
    kept += parent_shown.contains(w);
  }
  const double parent = total == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(total);
  return 0.5 * (child + parent);
}

/// Topic index in the post-refinement model that carries the refined
/// topic (the merged topic, the new child, ...).
inline std::size_t merged_topic_index(const MergeTopics& m) {
  return m.topic1 < m.topic2 ? m.topic1 : m.topic1 - 1;
}

inline ControlScore control_score(const TopicSnapshot& pre, const TopicSnapshot& post, const RefinementOp& op,
                                  std::size_t display_n = kDefaultDisplayN) {
  ControlScore c;
  c.kind = kind_of(op);
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RemoveWord>) {
          const auto r1 = pre.word_rank(o.topic, o.word), r2 = post.word_rank(o.topic, o.word);
          c.value = control_remove(r1, r2, display_n);
          c.details = {{"rank_before", r1}, {"rank_after", r2}};
        } else if constexpr (std::is_same_v<T, AddWord>) {
          const auto r1 = pre.word_rank(o.topic, o.word), r2 = post.word_rank(o.topic, o.word);
          c.value = control_add(r1, r2);
          c.details = {{"rank_before", r1}, {"rank_after", r2}};
        } else if constexpr (std::is_same_v<T, RemoveDocument>) {
          const auto r1 = pre.doc_rank(o.topic, o.document), r2 = post.doc_rank(o.topic, o.document);
          c.value = control_remove(r1, r2, display_n);
          c.details = {{"rank_before", r1}, {"rank_after", r2}};
        } else if constexpr (std::is_same_v<T, ChangeWordOrder>) {
          const auto w1 = pre.word_rank(o.topic, o.word1);
          const auto w2 = pre.word_rank(o.topic, o.word2);
          const auto w2_after = post.word_rank(o.topic, o.word2);
          c.value = control_reorder(w2, w2_after, w1);
          c.details = {{"word1_rank_before", w1}, {"word2_rank_before", w2}, {"word2_rank_after", w2_after}};
        } else if constexpr (std::is_same_v<T, MergeTopics>) {
          const auto merged = merged_topic_index(o);
          c.value = control_merge(pre.top_words(o.topic1, display_n), pre.top_words(o.topic2, display_n),
                                  post.top_words(merged, display_n));
          c.details = {{"merged_topic", merged}};
        } else if constexpr (std::is_same_v<T, SplitTopic>) {
          const std::size_t child = pre.topic_count();
          c.value = control_split(pre.top_words(o.topic, display_n), o.seeds, post.top_words(o.topic, display_n),
                                  post.top_words(child, display_n));
          c.details = {{"child_topic", child}};
        } else {
          const std::size_t created = pre.topic_count();
          c.value = control_create(o.seeds, post.top_words(created, display_n));
          c.details = {{"created_topic", created}};
        }
      },
      op);
  return c;
}

inline ControlScore control_score(const RefinementOutcome& o, std::size_t display_n = kDefaultDisplayN) {
  return control_score(o.pre, o.post, o.op, display_n);
}

// --- NPMI coherence -----------------------------------------------------------

/// Document-level (co-)occurrence statistics of a reference corpus.
/// Pair counts come from an explicit sparse table when loaded from a file
/// and from posting-list intersection when built from a corpus.
class ReferenceStats {
 public:
  ReferenceStats() = default;

  static ReferenceStats from_corpus(const Corpus& c) {
    ReferenceStats r;
    r.words_ = c.vocabulary().words();
    r.total_docs_ = c.num_documents();
    r.postings_.resize(c.vocab_size());
    for (std::size_t d = 0; d < c.num_documents(); ++d) {
      std::vector<WordId> toks = c.document(d).tokens;
      std::sort(toks.begin(), toks.end());
      toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
      for (auto w : toks) r.postings_[w].push_back(static_cast<std::uint32_t>(d));
    }
    r.df_.resize(c.vocab_size());
    for (std::size_t w = 0; w < r.df_.size(); ++w) r.df_[w] = r.postings_[w].size();
    return r;
  }

  /// Direct construction for fixtures and files.
  static ReferenceStats from_counts(std::vector<std::string> words, std::vector<std::size_t> df,
                                    std::size_t total_docs,
                                    const std::vector<std::tuple<std::uint32_t, std::uint32_t, std::size_t>>& pairs) {
    if (df.size() != words.size()) throw Error("reference stats: df/vocabulary size mismatch");
    ReferenceStats r;
    r.words_ = std::move(words);
    r.df_ = std::move(df);
    r.total_docs_ = total_docs;
    r.explicit_pairs_ = true;
    for (auto [i, j, n] : pairs) r.pairs_[key(i, j)] = n;
    return r;
  }

  std::size_t total_documents() const { return total_docs_; }
  std::size_t vocab_size() const { return df_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t df(std::uint32_t w) const { return w < df_.size() ? df_[w] : 0; }

  std::size_t co_df(std::uint32_t a, std::uint32_t b) const {
    if (a == b) return df(a);
    if (explicit_pairs_) {
      auto it = pairs_.find(key(a, b));
      return it == pairs_.end() ? 0 : it->second;
    }
    if (a >= postings_.size() || b >= postings_.size()) return 0;
    const auto& pa = postings_[a];
    const auto& pb = postings_[b];
    std::size_t n = 0;
    auto i = pa.begin(), j = pb.begin();
    while (i != pa.end() && j != pb.end()) {
      if (*i < *j) {
        ++i;
      } else if (*j < *i) {
        ++j;
      } else {
        ++n, ++i, ++j;
      }
    }
    return n;
  }

  /// Text format: header, vocabulary with document counts, nonzero pairs.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write reference stats: " + path);
    out << "hltm-reference 1\n" << "total_documents " << total_docs_ << "\n" << "vocabulary " << words_.size() << "\n";
    for (std::size_t w = 0; w < words_.size(); ++w) out << words_[w] << ' ' << df_[w] << '\n';
    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::size_t>> rows;
    if (explicit_pairs_) {
      for (auto [k, n] : pairs_) rows.emplace_back(static_cast<std::uint32_t>(k >> 32), static_cast<std::uint32_t>(k), n);
    } else {
      for (std::uint32_t a = 0; a < df_.size(); ++a) {
        for (std::uint32_t b = a + 1; b < df_.size(); ++b) {
          if (df_[a] == 0 || df_[b] == 0) continue;
          if (auto n = co_df(a, b)) rows.emplace_back(a, b, n);
        }
      }
    }
    std::sort(rows.begin(), rows.end());
    out << "pairs " << rows.size() << "\n";
    for (auto [a, b, n] : rows) out << a << ' ' << b << ' ' << n << '\n';
  }

  static ReferenceStats load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open reference stats: " + path);
    std::string tag;
    int version = 0;
    std::size_t total = 0, v = 0, p = 0;
    in >> tag >> version;
    if (tag != "hltm-reference" || version != 1) throw Error("not a reference stats file: " + path);
    in >> tag >> total >> tag >> v;
    std::vector<std::string> words(v);
    std::vector<std::size_t> df(v);
    for (std::size_t w = 0; w < v; ++w) in >> words[w] >> df[w];
    in >> tag >> p;
    std::vector<std::tuple<std::uint32_t, std::uint32_t, std::size_t>> pairs(p);
    for (auto& [a, b, n] : pairs) in >> a >> b >> n;
    if (!in) throw Error("truncated reference stats file: " + path);
    return from_counts(std::move(words), std::move(df), total, pairs);
  }

 private:
  static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::vector<std::string> words_;
  std::vector<std::size_t> df_;
  std::size_t total_docs_ = 0;
  std::vector<std::vector<std::uint32_t>> postings_;
  bool explicit_pairs_ = false;
  std::unordered_map<std::uint64_t, std::size_t> pairs_;
};

/// Normalized PMI of two words from document co-occurrence. `smoothing`
/// is added to the joint count (and stands in for a zero marginal).
inline double npmi(const ReferenceStats& ref, std::uint32_t a, std::uint32_t b, double smoothing = 1.0) {
  const double n = static_cast<double>(ref.total_documents());
  if (n <= 0.0) throw Error("npmi: reference has no documents");
  const double joint = static_cast<double>(ref.co_df(a, b)) + smoothing;
  if (joint <= 0.0) return -1.0;
  auto marginal = [&](std::uint32_t w) {
    const double c = static_cast<double>(ref.df(w));
    return (c > 0.0 ? c : smoothing) / n;
  };
  const double p_ab = std::min(1.0, joint / n);
  const double pa = marginal(a), pb = marginal(b);
  if (pa <= 0.0 || pb <= 0.0) return -1.0;
  const double denom = -std::log(p_ab);
  if (denom <= 0.0) return 1.0;
  return std::clamp(std::log(p_ab / (pa * pb)) / denom, -1.0, 1.0);
}

struct CoherenceReport {
  std::vector<double> per_topic;
  double model_mean = 0.0;
};

inline double topic_coherence(const ReferenceStats& ref, std::span<const std::uint32_t> top, double smoothing = 1.0) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < top.size(); ++i) {
    for (std::size_t j = i + 1; j < top.size(); ++j) {
      total += npmi(ref, top[i], top[j], smoothing);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

inline CoherenceReport npmi_coherence(const TopicSnapshot& s, const ReferenceStats& ref, std::size_t top_n = 20,
                                      double smoothing = 1.0) {
  CoherenceReport r;
  for (std::size_t t = 0; t < s.topic_count(); ++t) {
    r.per_topic.push_back(topic_coherence(ref, s.top_words(t, top_n), smoothing));
  }
  r.model_mean = r.per_topic.empty() ? 0.0 : sum(r.per_topic) / static_cast<double>(r.per_topic.size());
  return r;
}

inline double coherence_delta(const TopicSnapshot& pre, const TopicSnapshot& post, const ReferenceStats& ref,
                              std::size_t top_n = 20, double smoothing = 1.0) {
  return npmi_coherence(post, ref, top_n, smoothing).model_mean - npmi_coherence(pre, ref, top_n, smoothing).model_mean;
}

}  // namespace hltm
