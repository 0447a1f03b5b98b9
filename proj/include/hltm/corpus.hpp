#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "hltm/common.hpp"
#include "hltm/stopwords.hpp"

namespace hltm {

using WordId = std::uint32_t;

struct Document {
  std::string id;
  std::vector<WordId> tokens;
  std::string category;
  std::string raw_text;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    index_.reserve(words_.size());
    for (std::size_t i = 0; i < words_.size(); ++i) {
      if (!index_.emplace(words_[i], static_cast<WordId>(i)).second) {
        throw Error("vocabulary: duplicate word '" + words_[i] + "'");
      }
    }
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(WordId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  std::optional<WordId> find(std::string_view w) const {
    auto it = index_.find(std::string(w));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  WordId at(std::string_view w) const {
    auto id = find(w);
    if (!id) throw Error("word not in vocabulary: '" + std::string(w) + "'");
    return *id;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
};

/// Immutable once built; share through std::shared_ptr<const Corpus>.
class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<Document> docs, Vocabulary vocab)
      : documents_(std::move(docs)), vocabulary_(std::move(vocab)) {
    std::set<std::string> cats;
    std::unordered_set<std::string> ids;
    for (const auto& d : documents_) {
      if (!ids.insert(d.id).second) throw Error("corpus: duplicate document id '" + d.id + "'");
      if (d.tokens.empty()) throw Error("corpus: document '" + d.id + "' has no tokens");
      for (WordId w : d.tokens) {
        if (w >= vocabulary_.size()) throw Error("corpus: token index out of range in '" + d.id + "'");
      }
      cats.insert(d.category);
      token_count_ += d.tokens.size();
    }
    categories_.assign(cats.begin(), cats.end());
    category_of_.reserve(documents_.size());
    for (const auto& d : documents_) {
      auto it = std::lower_bound(categories_.begin(), categories_.end(), d.category);
      category_of_.push_back(static_cast<std::size_t>(it - categories_.begin()));
    }
  }

  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(std::size_t d) const { return documents_.at(d); }
  std::size_t num_documents() const { return documents_.size(); }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  std::size_t vocab_size() const { return vocabulary_.size(); }
  /// Sorted, distinct labels.
  const std::vector<std::string>& categories() const { return categories_; }
  /// Index into categories() for document d.
  std::size_t category_index(std::size_t d) const { return category_of_.at(d); }
  std::size_t token_count() const { return token_count_; }

 private:
  std::vector<Document> documents_;
  Vocabulary vocabulary_;
  std::vector<std::string> categories_;
  std::vector<std::size_t> category_of_;
  std::size_t token_count_ = 0;
};

struct PreprocessConfig {
  std::size_t min_df = 5;
  double max_df_fraction = 0.5;
  std::size_t min_token_length = 3;
  bool keep_raw_text = true;
};

struct RawRecord {
  std::string id;
  std::string text;
  std::string category;
};

/// Lowercase, split on non-alphanumerics, drop short tokens and stopwords.
inline std::vector<std::string> tokenize(std::string_view text, std::size_t min_len = 3) {
  static const std::unordered_set<std::string_view> stop(std::begin(kEnglishStopwords),
                                                         std::end(kEnglishStopwords));
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= min_len && !stop.contains(cur)) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

/// Builds a corpus from raw records: document-frequency filtering, then a
/// vocabulary ordered by descending corpus frequency with alphabetical ties.
inline Corpus build_corpus(const std::vector<RawRecord>& records, const PreprocessConfig& cfg) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(records.size());
  std::map<std::string, std::size_t> df;
  std::map<std::string, std::size_t> tf;
  for (const auto& r : records) {
    tokenized.push_back(tokenize(r.text, cfg.min_token_length));
    std::set<std::string_view> seen;
    for (const auto& t : tokenized.back()) {
      ++tf[t];
      if (seen.insert(t).second) ++df[t];
    }
  }
  const std::size_t n_docs = records.size();
  const auto df_ceiling = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.max_df_fraction * static_cast<double>(n_docs))));

  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, count] : df) {
    if (count >= cfg.min_df && count <= df_ceiling) kept.emplace_back(w, tf[w]);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(kept.size());
  for (auto& [w, _] : kept) words.push_back(w);
  Vocabulary vocab(std::move(words));

  std::vector<Document> docs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Document d{records[i].id, {}, records[i].category, cfg.keep_raw_text ? records[i].text : ""};
    for (const auto& t : tokenized[i]) {
      if (auto id = vocab.find(t)) d.tokens.push_back(*id);
    }
    if (!d.tokens.empty()) docs.push_back(std::move(d));
  }
  if (docs.empty()) throw Error("corpus is empty after preprocessing");
  return Corpus(std::move(docs), std::move(vocab));
}

inline std::vector<RawRecord> read_jsonl_records(std::istream& in, const std::string& origin) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw Error(where + ": record is not an object");
    RawRecord r;
    for (auto [key, field] : {std::pair{"id", &r.id}, std::pair{"text", &r.text},
                              std::pair{"category", &r.category}}) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw Error(where + ": missing or non-string field '" + key + "'");
      }
      *field = j[key].get<std::string>();
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline Corpus ingest_jsonl(const std::string& path, const PreprocessConfig& cfg = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path);
  return build_corpus(read_jsonl_records(in, path), cfg);
}

struct SyntheticConfig {
  std::size_t n_categories = 14;
  std::size_t docs_per_category = 100;
  std::size_t vocab_size = 2000;
  /// Mean document length; actual lengths are uniform in [L/2, 3L/2].
  std::size_t doc_length = 150;
  std::uint64_t seed = 1;
  /// Share of each document's tokens drawn from its category block.
  double signature_weight = 0.7;
  /// Within-block word frequencies follow 1/(rank+1)^exponent.
  double zipf_exponent = 1.0;
};

/// Word layout of a synthetic corpus: one disjoint block per category,
/// then the shared background block.
struct SyntheticLayout {
  std::size_t block_size = 0;
  std::size_t background_begin = 0;
  std::size_t background_size = 0;

  std::size_t block_begin(std::size_t category) const { return category * block_size; }
};

inline SyntheticLayout synthetic_layout(const SyntheticConfig& cfg) {
  SyntheticLayout l;
  l.block_size = cfg.vocab_size / (cfg.n_categories + 1);
  l.background_begin = l.block_size * cfg.n_categories;
  l.background_size = cfg.vocab_size - l.background_begin;
  return l;
}

inline std::string synthetic_category_name(std::size_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "cat%02zu", c);
  return buf;
}

inline Corpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_categories < 1 || cfg.docs_per_category < 1 || cfg.vocab_size < 1 || cfg.doc_length < 1) {
    throw Error("generate_synthetic: all counts must be >= 1");
  }
  if (cfg.vocab_size < 10 * cfg.n_categories) {
    throw Error("generate_synthetic: vocab_size must be >= 10 x n_categories");
  }
  if (!(cfg.signature_weight >= 0.0 && cfg.signature_weight <= 1.0)) {
    throw Error("generate_synthetic: signature_weight must lie in [0, 1]");
  }
  const auto layout = synthetic_layout(cfg);

  std::vector<std::string> words;
  words.reserve(cfg.vocab_size);
  char buf[32];
  for (std::size_t c = 0; c < cfg.n_categories; ++c) {
    for (std::size_t i = 0; i < layout.block_size; ++i) {
      std::snprintf(buf, sizeof buf, "c%02zuw%03zu", c, i);
      words.emplace_back(buf);
    }
  }
  for (std::size_t i = 0; i < layout.background_size; ++i) {
    std::snprintf(buf, sizeof buf, "bg%04zu", i);
    words.emplace_back(buf);
  }

  auto zipf_cdf = [&](std::size_t n) {
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
      cdf[r] = acc;
    }
    for (auto& x : cdf) x /= acc;
    return cdf;
  };
  const auto block_cdf = zipf_cdf(layout.block_size);
  const auto bg_cdf = zipf_cdf(layout.background_size);
  auto draw = [](const std::vector<double>& cdf, Rng& rng) {
    const double u = uniform01(rng);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cdf.begin(),
                                                             static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  Rng rng(cfg.seed);
  std::vector<Document> docs;
  docs.reserve(cfg.n_categories * cfg.docs_per_category);
  for (std::size_t c = 0; c < cfg.n_categories; ++c) {
    const auto name = synthetic_category_name(c);
    for (std::size_t i = 0; i < cfg.docs_per_category; ++i) {
      Document d;
      std::snprintf(buf, sizeof buf, "%s-%04zu", name.c_str(), i);
      d.id = buf;
      d.category = name;
      const std::size_t half = cfg.doc_length / 2;
      const std::size_t length = std::max<std::size_t>(1, cfg.doc_length - half + uniform_index(rng, 2 * half + 1));
      d.tokens.reserve(length);
      for (std::size_t n = 0; n < length; ++n) {
        const bool signature = layout.background_size == 0 || uniform01(rng) < cfg.signature_weight;
        const std::size_t w = signature ? layout.block_begin(c) + draw(block_cdf, rng)
                                        : layout.background_begin + draw(bg_cdf, rng);
        d.tokens.push_back(static_cast<WordId>(w));
      }
      docs.push_back(std::move(d));
    }
  }
  return Corpus(std::move(docs), Vocabulary(std::move(words)));
}

inline nlohmann::json corpus_to_json(const Corpus& corpus) {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& d : corpus.documents()) {
    docs.push_back({{"id", d.id}, {"category", d.category}, {"tokens", d.tokens}, {"raw_text", d.raw_text}});
  }
  return {{"vocabulary", corpus.vocabulary().words()}, {"documents", std::move(docs)}};
}

inline Corpus corpus_from_json(const nlohmann::json& j) {
  Vocabulary vocab(j.at("vocabulary").get<std::vector<std::string>>());
  std::vector<Document> docs;
  for (const auto& d : j.at("documents")) {
    docs.push_back(Document{d.at("id").get<std::string>(), d.at("tokens").get<std::vector<WordId>>(),
                            d.at("category").get<std::string>(), d.value("raw_text", std::string{})});
  }
  return Corpus(std::move(docs), std::move(vocab));
}

}  // namespace hltm
