#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hltm/common.hpp"
#include "hltm/corpus.hpp"
#include "hltm/model.hpp"

namespace hltm {

struct LogisticRegressionConfig {
  double l2 = 0.01;
  double learning_rate = 0.5;
  std::size_t epochs = 200;
};

/// Per category: every vocabulary word ordered by descending classifier
/// weight for that category.
struct CategoryWordIndex {
  std::vector<std::string> categories;
  std::vector<std::vector<std::uint32_t>> ranked;  // categories x V
  std::vector<double> loss_trace;

  /// 0-based position of w in category c's list.
  std::size_t position(std::size_t c, std::uint32_t w) const { return rank_of(ranked.at(c), w) - 1; }
  std::vector<std::uint32_t> top(std::size_t c, std::size_t n) const { return top_n(ranked.at(c), n); }
};

/// Multinomial logistic regression on length-normalized bags of words,
/// trained by full-batch gradient descent from zero weights. A step that
/// would raise the penalized loss is retried at half the rate.
class SoftmaxClassifier {
 public:
  SoftmaxClassifier(const Corpus& corpus, LogisticRegressionConfig cfg)
      : cfg_(cfg), classes_(corpus.categories().size()), features_(corpus.vocab_size()) {
    rows_.resize(corpus.num_documents());
    labels_.resize(corpus.num_documents());
    for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
      const auto& toks = corpus.document(d).tokens;
      std::vector<WordId> sorted = toks;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        rows_[d].emplace_back(sorted[i], static_cast<double>(j - i) / static_cast<double>(toks.size()));
        i = j;
      }
      labels_[d] = corpus.category_index(d);
    }
    weights_ = Matrix<double>(classes_, features_, 0.0);
    bias_.assign(classes_, 0.0);
  }

  const Matrix<double>& weights() const { return weights_; }

  std::vector<double> probabilities(std::size_t d) const { return probabilities(d, weights_, bias_); }

  double loss() const { return loss(weights_, bias_); }

  std::vector<double> train() {
    std::vector<double> trace{loss()};
    double rate = cfg_.learning_rate;
    Matrix<double> grad_w(classes_, features_);
    std::vector<double> grad_b(classes_);
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
      gradient(grad_w, grad_b);
      for (int attempt = 0; attempt < 30; ++attempt) {
        Matrix<double> w = weights_;
        std::vector<double> b = bias_;
        for (std::size_t i = 0; i < w.data().size(); ++i) w.data()[i] -= rate * grad_w.data()[i];
        for (std::size_t c = 0; c < classes_; ++c) b[c] -= rate * grad_b[c];
        const double next = loss(w, b);
        if (next <= trace.back() + 1e-12) {
          weights_ = std::move(w);
          bias_ = std::move(b);
          trace.push_back(next);
          break;
        }
        rate *= 0.5;
      }
    }
    return trace;
  }

 private:
  std::vector<double> probabilities(std::size_t d, const Matrix<double>& w, const std::vector<double>& b) const {
    std::vector<double> z(b);
    for (auto [f, x] : rows_[d]) {
      for (std::size_t c = 0; c < classes_; ++c) z[c] += w(c, f) * x;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (auto& v : z) total += (v = std::exp(v - mx));
    for (auto& v : z) v /= total;
    return z;
  }

  double loss(const Matrix<double>& w, const std::vector<double>& b) const {
    double nll = 0.0;
    for (std::size_t d = 0; d < rows_.size(); ++d) {
      nll -= std::log(std::max(probabilities(d, w, b)[labels_[d]], 1e-300));
    }
    double reg = 0.0;
    for (double x : w.data()) reg += x * x;
    return nll / static_cast<double>(rows_.size()) + 0.5 * cfg_.l2 * reg;
  }

  void gradient(Matrix<double>& gw, std::vector<double>& gb) const {
    const double inv_n = 1.0 / static_cast<double>(rows_.size());
    for (std::size_t i = 0; i < gw.data().size(); ++i) gw.data()[i] = cfg_.l2 * weights_.data()[i];
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t d = 0; d < rows_.size(); ++d) {
      auto p = probabilities(d);
      p[labels_[d]] -= 1.0;
      for (std::size_t c = 0; c < classes_; ++c) {
        gb[c] += p[c] * inv_n;
        for (auto [f, x] : rows_[d]) gw(c, f) += p[c] * x * inv_n;
      }
    }
  }

  LogisticRegressionConfig cfg_;
  std::size_t classes_;
  std::size_t features_;
  std::vector<std::vector<std::pair<WordId, double>>> rows_;
  std::vector<std::size_t> labels_;
  Matrix<double> weights_;
  std::vector<double> bias_;
};

inline CategoryWordIndex representative_words(const Corpus& corpus, const LogisticRegressionConfig& cfg = {}) {
  std::vector<std::size_t> per_class(corpus.categories().size(), 0);
  for (std::size_t d = 0; d < corpus.num_documents(); ++d) ++per_class[corpus.category_index(d)];
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] < 2) throw Error("category '" + corpus.categories()[c] + "' has fewer than 2 documents");
  }
  SoftmaxClassifier clf(corpus, cfg);
  CategoryWordIndex idx;
  idx.categories = corpus.categories();
  idx.loss_trace = clf.train();
  for (std::size_t c = 0; c < idx.categories.size(); ++c) idx.ranked.push_back(rank_descending(clf.weights().row(c)));
  return idx;
}

}  // namespace hltm
