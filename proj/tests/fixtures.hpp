#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hltm/hltm.hpp"

namespace fixtures {

/// Corpus straight from token-index lists; words are named w0, w1, ...
inline std::shared_ptr<const hltm::Corpus> tiny_corpus(const std::vector<std::vector<hltm::WordId>>& docs,
                                                       std::size_t vocab,
                                                       const std::vector<std::string>& categories = {}) {
  std::vector<std::string> words;
  for (std::size_t w = 0; w < vocab; ++w) words.push_back("w" + std::to_string(w));
  std::vector<hltm::Document> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const std::string cat = categories.empty() ? "c" : categories[d];
    out.push_back(hltm::Document{"d" + std::to_string(d), docs[d], cat, ""});
  }
  return std::make_shared<const hltm::Corpus>(std::move(out), hltm::Vocabulary(std::move(words)));
}

inline hltm::SyntheticConfig small_synthetic(std::uint64_t seed = 5) {
  hltm::SyntheticConfig c;
  c.n_categories = 4;
  c.docs_per_category = 20;
  c.vocab_size = 300;
  c.doc_length = 50;
  c.seed = seed;
  return c;
}

inline std::shared_ptr<const hltm::Corpus> small_corpus(std::uint64_t seed = 5) {
  return std::make_shared<const hltm::Corpus>(hltm::generate_synthetic(small_synthetic(seed)));
}

inline hltm::TrainingConfig quick_training() {
  hltm::TrainingConfig t;
  t.gibbs_sweeps = 80;
  t.vb_iterations = 25;
  return t;
}

/// Snapshot whose word and document scores are given directly.
inline hltm::TopicSnapshot snapshot_from_scores(const std::vector<std::vector<double>>& word_scores,
                                                const std::vector<std::vector<double>>& doc_scores = {}) {
  hltm::TopicSnapshot s;
  const std::size_t k = word_scores.size();
  const std::size_t v = word_scores.front().size();
  for (std::size_t w = 0; w < v; ++w) s.vocabulary.push_back("w" + std::to_string(w));
  s.word_probs = hltm::Matrix<double>(k, v, 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    double total = 0.0;
    for (double x : word_scores[t]) total += x;
    for (std::size_t w = 0; w < v; ++w) s.word_probs(t, w) = word_scores[t][w] / total;
  }
  const std::size_t docs = doc_scores.empty() ? 1 : doc_scores.size();
  s.doc_probs = hltm::Matrix<double>(docs, k, 1.0 / static_cast<double>(k));
  for (std::size_t d = 0; d < doc_scores.size(); ++d) {
    for (std::size_t t = 0; t < k; ++t) s.doc_probs(d, t) = doc_scores[d][t];
  }
  hltm::rebuild_rankings(s);
  return s;
}

}  // namespace fixtures
