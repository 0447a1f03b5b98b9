#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"

namespace hltm {

enum class Backend { InfoGibbs, ConstGibbs, InfoVb };

inline constexpr Backend kAllBackends[] = {Backend::ConstGibbs, Backend::InfoGibbs, Backend::InfoVb};

inline std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::InfoGibbs: return "info-gibbs";
    case Backend::ConstGibbs: return "const-gibbs";
    case Backend::InfoVb: return "info-vb";
  }
  return "?";
}

inline Backend parse_backend(std::string_view s) {
  for (auto b : kAllBackends) {
    if (to_string(b) == s) return b;
  }
  throw Error("unknown backend '" + std::string(s) + "'");
}

inline bool is_gibbs(Backend b) { return b != Backend::InfoVb; }

/// Asymmetric Dirichlet parameters: alpha is documents x topics, beta is
/// topics x words. The symmetric defaults are kept so new topics and
/// resets can use them.
struct PriorSet {
  Matrix<double> alpha;
  Matrix<double> beta;
  double default_alpha = 0.1;
  double default_beta = 0.01;

  static PriorSet symmetric(std::size_t docs, std::size_t topics, std::size_t words,
                            double alpha0, double beta0) {
    return PriorSet{Matrix<double>(docs, topics, alpha0), Matrix<double>(topics, words, beta0), alpha0,
                    beta0};
  }

  std::size_t topics() const { return beta.rows(); }
  double beta_sum(std::size_t t) const { return sum(beta.row(t)); }
  double alpha_sum(std::size_t d) const { return sum(alpha.row(d)); }

  void append_topic() {
    alpha.append_col(default_alpha);
    beta.append_row(default_beta);
  }
  void erase_topic(std::size_t t) {
    alpha.erase_col(t);
    beta.erase_row(t);
  }
};

enum class ConstraintScope { Word, Document };

/// One potential function. For tokens in scope (a given word type, or any
/// token of a given document) the log-scale adjustment for topic z is
/// topic_values[z] if present, otherwise `otherwise`.
struct ConstraintEntry {
  ConstraintScope scope = ConstraintScope::Word;
  std::uint32_t target = 0;
  std::map<std::size_t, double> topic_values;
  double otherwise = 0.0;

  double value(std::size_t topic) const {
    auto it = topic_values.find(topic);
    return it == topic_values.end() ? otherwise : it->second;
  }
  bool operator==(const ConstraintEntry&) const = default;
};

/// At most one entry per word and one per document; newer entries replace
/// older ones with the same scope key.
class ConstraintSet {
 public:
  void set(ConstraintEntry e) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ConstraintEntry& x) {
      return x.scope == e.scope && x.target == e.target;
    });
    if (it != entries_.end()) {
      *it = std::move(e);
    } else {
      entries_.push_back(std::move(e));
    }
  }

  const std::vector<ConstraintEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  const ConstraintEntry* find(ConstraintScope scope, std::uint32_t target) const {
    for (const auto& e : entries_) {
      if (e.scope == scope && e.target == target) return &e;
    }
    return nullptr;
  }

  /// Sum of matching potentials for a token of word w in document d.
  double potential(std::size_t topic, std::uint32_t w, std::uint32_t d) const {
    double p = 0.0;
    if (auto* e = find(ConstraintScope::Word, w)) p += e->value(topic);
    if (auto* e = find(ConstraintScope::Document, d)) p += e->value(topic);
    return p;
  }

  /// Topic t was deleted: entries naming it are dropped, higher indices
  /// shift down by one.
  void erase_topic(std::size_t t) {
    std::erase_if(entries_, [t](const ConstraintEntry& e) { return e.topic_values.contains(t); });
    for (auto& e : entries_) {
      std::map<std::size_t, double> shifted;
      for (auto [k, v] : e.topic_values) shifted.emplace(k > t ? k - 1 : k, v);
      e.topic_values = std::move(shifted);
    }
  }

  bool operator==(const ConstraintSet&) const = default;

 private:
  std::vector<ConstraintEntry> entries_;
};

// --- refinement operations -------------------------------------------------

struct RemoveWord {
  std::size_t topic;
  WordId word;
  bool operator==(const RemoveWord&) const = default;
};
struct AddWord {
  std::size_t topic;
  WordId word;
  bool operator==(const AddWord&) const = default;
};
struct RemoveDocument {
  std::size_t topic;
  std::size_t document;
  bool operator==(const RemoveDocument&) const = default;
};
struct MergeTopics {
  std::size_t topic1;
  std::size_t topic2;
  bool operator==(const MergeTopics&) const = default;
};
struct SplitTopic {
  std::size_t topic;
  std::vector<WordId> seeds;
  bool operator==(const SplitTopic&) const = default;
};
struct ChangeWordOrder {
  std::size_t topic;
  WordId word1;  // currently higher
  WordId word2;  // to be promoted above word1
  bool operator==(const ChangeWordOrder&) const = default;
};
struct CreateTopic {
  std::vector<WordId> seeds;
  bool operator==(const CreateTopic&) const = default;
};

using RefinementOp =
    std::variant<RemoveWord, AddWord, RemoveDocument, MergeTopics, SplitTopic, ChangeWordOrder, CreateTopic>;

enum class RefinementKind { RemoveWord, AddWord, RemoveDocument, MergeTopics, SplitTopic, ChangeWordOrder, CreateTopic };

inline constexpr RefinementKind kAllRefinements[] = {
    RefinementKind::RemoveWord,  RefinementKind::RemoveDocument, RefinementKind::MergeTopics,
    RefinementKind::AddWord,     RefinementKind::CreateTopic,    RefinementKind::SplitTopic,
    RefinementKind::ChangeWordOrder};

inline RefinementKind kind_of(const RefinementOp& op) { return static_cast<RefinementKind>(op.index()); }

inline std::string_view to_string(RefinementKind k) {
  switch (k) {
    case RefinementKind::RemoveWord: return "remove_word";
    case RefinementKind::AddWord: return "add_word";
    case RefinementKind::RemoveDocument: return "remove_document";
    case RefinementKind::MergeTopics: return "merge_topics";
    case RefinementKind::SplitTopic: return "split_topic";
    case RefinementKind::ChangeWordOrder: return "change_word_order";
    case RefinementKind::CreateTopic: return "create_topic";
  }
  return "?";
}

inline RefinementKind parse_refinement_kind(std::string_view s) {
  for (auto k : kAllRefinements) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown refinement type '" + std::string(s) + "'");
}

/// Topic count after applying op to a model with k topics.
inline std::size_t topics_after(const RefinementOp& op, std::size_t k) {
  switch (kind_of(op)) {
    case RefinementKind::MergeTopics: return k - 1;
    case RefinementKind::SplitTopic:
    case RefinementKind::CreateTopic: return k + 1;
    default: return k;
  }
}

/// Structural validation against model dimensions.
inline void validate(const RefinementOp& op, std::size_t topics, std::size_t words, std::size_t docs) {
  auto topic_ok = [&](std::size_t t, const char* what) {
    if (t >= topics) throw Error(std::string(what) + " out of range: " + std::to_string(t));
  };
  auto word_ok = [&](WordId w) {
    if (w >= words) throw Error("word index out of range: " + std::to_string(w));
  };
  auto seeds_ok = [&](const std::vector<WordId>& seeds) {
    if (seeds.empty()) throw Error("seed list is empty");
    for (auto s : seeds) word_ok(s);
  };
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RemoveWord> || std::is_same_v<T, AddWord>) {
          topic_ok(o.topic, "topic");
          word_ok(o.word);
        } else if constexpr (std::is_same_v<T, RemoveDocument>) {
          topic_ok(o.topic, "topic");
          if (o.document >= docs) throw Error("document index out of range: " + std::to_string(o.document));
        } else if constexpr (std::is_same_v<T, MergeTopics>) {
          topic_ok(o.topic1, "topic1");
          topic_ok(o.topic2, "topic2");
          if (o.topic1 == o.topic2) throw Error("cannot merge a topic with itself");
        } else if constexpr (std::is_same_v<T, SplitTopic>) {
          topic_ok(o.topic, "topic");
          seeds_ok(o.seeds);
        } else if constexpr (std::is_same_v<T, ChangeWordOrder>) {
          topic_ok(o.topic, "topic");
          word_ok(o.word1);
          word_ok(o.word2);
          if (o.word1 == o.word2) throw Error("change_word_order needs two distinct words");
        } else {
          seeds_ok(o.seeds);
        }
      },
      op);
}

namespace detail {

inline WordId word_from_json(const nlohmann::json& j, const Vocabulary* vocab) {
  if (j.is_number_unsigned() || j.is_number_integer()) return j.get<WordId>();
  if (j.is_string()) {
    if (!vocab) throw Error("word given by name but no vocabulary is available");
    return vocab->at(j.get<std::string>());
  }
  throw Error("word must be a string or an index");
}

inline nlohmann::json word_to_json(WordId w, const Vocabulary* vocab) {
  if (vocab) return vocab->word(w);
  return w;
}

inline std::size_t doc_from_json(const nlohmann::json& j, const Corpus* corpus) {
  if (j.is_number_unsigned() || j.is_number_integer()) return j.get<std::size_t>();
  if (j.is_string() && corpus) {
    const auto id = j.get<std::string>();
    for (std::size_t d = 0; d < corpus->num_documents(); ++d) {
      if (corpus->document(d).id == id) return d;
    }
    throw Error("unknown document id '" + id + "'");
  }
  throw Error("document must be an index or a known document id");
}

}  // namespace detail

/// Wire encoding: {"type": "...", <params by name>}. Words are written by
/// name when a vocabulary is supplied; both names and indices are accepted
/// when reading.
inline nlohmann::json op_to_json(const RefinementOp& op, const Vocabulary* vocab = nullptr) {
  using detail::word_to_json;
  nlohmann::json j{{"type", to_string(kind_of(op))}};
  auto seeds = [&](const std::vector<WordId>& s) {
    nlohmann::json a = nlohmann::json::array();
    for (auto w : s) a.push_back(word_to_json(w, vocab));
    return a;
  };
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RemoveWord> || std::is_same_v<T, AddWord>) {
          j["topic"] = o.topic;
          j["word"] = word_to_json(o.word, vocab);
        } else if constexpr (std::is_same_v<T, RemoveDocument>) {
          j["topic"] = o.topic;
          j["document"] = o.document;
        } else if constexpr (std::is_same_v<T, MergeTopics>) {
          j["topic1"] = o.topic1;
          j["topic2"] = o.topic2;
        } else if constexpr (std::is_same_v<T, SplitTopic>) {
          j["topic"] = o.topic;
          j["seeds"] = seeds(o.seeds);
        } else if constexpr (std::is_same_v<T, ChangeWordOrder>) {
          j["topic"] = o.topic;
          j["word1"] = word_to_json(o.word1, vocab);
          j["word2"] = word_to_json(o.word2, vocab);
        } else {
          j["seeds"] = seeds(o.seeds);
        }
      },
      op);
  return j;
}

inline RefinementOp op_from_json(const nlohmann::json& j, const Vocabulary* vocab = nullptr,
                                 const Corpus* corpus = nullptr) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw Error("refinement must be an object with a string 'type'");
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.contains(name)) throw Error(std::string("refinement is missing field '") + name + "'");
    return j[name];
  };
  auto index = [&](const char* name) {
    const auto& f = field(name);
    if (!f.is_number_integer() || f.get<long long>() < 0) {
      throw Error(std::string("field '") + name + "' must be a non-negative integer");
    }
    return f.get<std::size_t>();
  };
  auto word = [&](const char* name) { return detail::word_from_json(field(name), vocab); };
  auto seeds = [&] {
    const auto& f = field("seeds");
    if (!f.is_array()) throw Error("field 'seeds' must be an array");
    std::vector<WordId> out;
    for (const auto& s : f) out.push_back(detail::word_from_json(s, vocab));
    return out;
  };
  switch (parse_refinement_kind(j["type"].get<std::string>())) {
    case RefinementKind::RemoveWord: return RemoveWord{index("topic"), word("word")};
    case RefinementKind::AddWord: return AddWord{index("topic"), word("word")};
    case RefinementKind::RemoveDocument:
      return RemoveDocument{index("topic"), detail::doc_from_json(field("document"), corpus)};
    case RefinementKind::MergeTopics: return MergeTopics{index("topic1"), index("topic2")};
    case RefinementKind::SplitTopic: return SplitTopic{index("topic"), seeds()};
    case RefinementKind::ChangeWordOrder: return ChangeWordOrder{index("topic"), word("word1"), word("word2")};
    case RefinementKind::CreateTopic: return CreateTopic{seeds()};
  }
  throw Error("unreachable refinement type");
}

// --- ranking ---------------------------------------------------------------

/// Indices ordered by descending score; equal scores keep ascending index.
inline std::vector<std::uint32_t> rank_descending(std::span<const double> scores) {
  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
  return order;
}

/// 1-based position of item in a ranked list.
inline std::size_t rank_of(std::span<const std::uint32_t> order, std::size_t item) {
  auto it = std::find(order.begin(), order.end(), static_cast<std::uint32_t>(item));
  if (it == order.end()) throw Error("item " + std::to_string(item) + " not in ranking");
  return static_cast<std::size_t>(it - order.begin()) + 1;
}

inline std::vector<std::uint32_t> top_n(std::span<const std::uint32_t> order, std::size_t n) {
  n = std::min(n, order.size());
  return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n)};
}

// --- snapshots -------------------------------------------------------------

/// Immutable read-out of a model: point estimates plus per-topic rankings.
struct TopicSnapshot {
  Backend backend = Backend::InfoGibbs;
  std::vector<std::string> vocabulary;
  PriorSet priors;
  ConstraintSet constraints;
  Matrix<double> word_probs;  // K x V
  Matrix<double> doc_probs;   // D x K
  std::vector<std::vector<std::uint32_t>> ranked_words;
  std::vector<std::vector<std::uint32_t>> ranked_docs;

  std::size_t topic_count() const { return word_probs.rows(); }

  std::size_t word_rank(std::size_t topic, std::size_t w) const { return rank_of(ranked_words.at(topic), w); }
  std::size_t doc_rank(std::size_t topic, std::size_t d) const { return rank_of(ranked_docs.at(topic), d); }
  std::vector<std::uint32_t> top_words(std::size_t topic, std::size_t n) const {
    return top_n(ranked_words.at(topic), n);
  }
  std::vector<std::uint32_t> top_docs(std::size_t topic, std::size_t n) const {
    return top_n(ranked_docs.at(topic), n);
  }
};

/// Fills the ranked lists from word_probs / doc_probs.
inline void rebuild_rankings(TopicSnapshot& s) {
  const std::size_t k = s.word_probs.rows();
  s.ranked_words.assign(k, {});
  s.ranked_docs.assign(k, {});
  std::vector<double> col(s.doc_probs.rows());
  for (std::size_t t = 0; t < k; ++t) {
    s.ranked_words[t] = rank_descending(s.word_probs.row(t));
    for (std::size_t d = 0; d < col.size(); ++d) col[d] = s.doc_probs(d, t);
    s.ranked_docs[t] = rank_descending(col);
  }
}

namespace detail {

// Infinite log-potentials (hard constraints) are not representable in JSON.
inline nlohmann::json real_to_json(double x) {
  if (std::isinf(x)) return x < 0 ? "-inf" : "inf";
  return x;
}
inline double real_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    throw Error("bad real value '" + s + "'");
  }
  return j.get<double>();
}

inline nlohmann::json matrix_to_json(const Matrix<double>& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}
inline Matrix<double> matrix_from_json(const nlohmann::json& j) {
  Matrix<double> m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  m.data() = j.at("data").get<std::vector<double>>();
  if (m.data().size() != m.rows() * m.cols()) throw Error("matrix payload size mismatch");
  return m;
}

}  // namespace detail

inline nlohmann::json priors_to_json(const PriorSet& p) {
  return {{"alpha", detail::matrix_to_json(p.alpha)},
          {"beta", detail::matrix_to_json(p.beta)},
          {"default_alpha", p.default_alpha},
          {"default_beta", p.default_beta}};
}

inline PriorSet priors_from_json(const nlohmann::json& j) {
  return PriorSet{detail::matrix_from_json(j.at("alpha")), detail::matrix_from_json(j.at("beta")),
                  j.at("default_alpha").get<double>(), j.at("default_beta").get<double>()};
}

inline nlohmann::json constraints_to_json(const ConstraintSet& c) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : c.entries()) {
    nlohmann::json values = nlohmann::json::object();
    for (auto [t, v] : e.topic_values) values[std::to_string(t)] = detail::real_to_json(v);
    out.push_back({{"scope", e.scope == ConstraintScope::Word ? "word" : "document"},
                   {"target", e.target},
                   {"values", values},
                   {"otherwise", detail::real_to_json(e.otherwise)}});
  }
  return out;
}

inline ConstraintSet constraints_from_json(const nlohmann::json& j) {
  ConstraintSet c;
  for (const auto& e : j) {
    ConstraintEntry entry;
    const auto scope = e.at("scope").get<std::string>();
    if (scope != "word" && scope != "document") throw Error("bad constraint scope '" + scope + "'");
    entry.scope = scope == "word" ? ConstraintScope::Word : ConstraintScope::Document;
    entry.target = e.at("target").get<std::uint32_t>();
    for (const auto& [k, v] : e.at("values").items()) {
      entry.topic_values.emplace(std::stoul(k), detail::real_from_json(v));
    }
    entry.otherwise = detail::real_from_json(e.at("otherwise"));
    c.set(std::move(entry));
  }
  return c;
}

/// Snapshot file record. Reals are written in shortest round-trip decimal
/// form, so reading back reproduces every double bit for bit.
inline nlohmann::json snapshot_to_json(const TopicSnapshot& s) {
  return {{"backend", to_string(s.backend)},
          {"K", s.topic_count()},
          {"vocabulary", s.vocabulary},
          {"alpha", detail::matrix_to_json(s.priors.alpha)},
          {"beta", detail::matrix_to_json(s.priors.beta)},
          {"default_alpha", s.priors.default_alpha},
          {"default_beta", s.priors.default_beta},
          {"constraints", constraints_to_json(s.constraints)},
          {"word_probs", detail::matrix_to_json(s.word_probs)},
          {"doc_probs", detail::matrix_to_json(s.doc_probs)}};
}

inline TopicSnapshot snapshot_from_json(const nlohmann::json& j) {
  TopicSnapshot s;
  s.backend = parse_backend(j.at("backend").get<std::string>());
  s.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  s.priors.alpha = detail::matrix_from_json(j.at("alpha"));
  s.priors.beta = detail::matrix_from_json(j.at("beta"));
  s.priors.default_alpha = j.value("default_alpha", 0.1);
  s.priors.default_beta = j.value("default_beta", 0.01);
  s.constraints = constraints_from_json(j.at("constraints"));
  s.word_probs = detail::matrix_from_json(j.at("word_probs"));
  s.doc_probs = detail::matrix_from_json(j.at("doc_probs"));
  if (s.word_probs.rows() != j.at("K").get<std::size_t>()) throw Error("snapshot: K does not match word_probs");
  rebuild_rankings(s);
  return s;
}

}  // namespace hltm
