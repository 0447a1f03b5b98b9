#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace hltm;

namespace {

// Words ranked by Pearson chi-square of (word present, category == c),
// keeping only words positively associated with c.
std::vector<std::uint32_t> chi_square_top(const Corpus& c, std::size_t cat, std::size_t n) {
  const double docs = static_cast<double>(c.num_documents());
  std::vector<double> score(c.vocab_size(), -1.0);
  for (std::uint32_t w = 0; w < c.vocab_size(); ++w) {
    double a = 0, b = 0, cc = 0, dd = 0;
    for (std::size_t d = 0; d < c.num_documents(); ++d) {
      const auto& t = c.document(d).tokens;
      const bool has = std::find(t.begin(), t.end(), w) != t.end();
      const bool in = c.category_index(d) == cat;
      (has ? (in ? a : b) : (in ? cc : dd)) += 1;
    }
    if (a * dd <= b * cc) continue;
    const double num = docs * (a * dd - b * cc) * (a * dd - b * cc);
    const double den = (a + b) * (cc + dd) * (a + cc) * (b + dd);
    score[w] = den > 0 ? num / den : 0;
  }
  return top_n(rank_descending(score), n);
}

}  // namespace

TEST(Classifier, ZeroWeightsGiveUniformProbabilities) {
  auto c = fixtures::small_corpus();
  SoftmaxClassifier clf(*c, {});
  const auto p = clf.probabilities(0);
  ASSERT_EQ(p.size(), 4u);
  for (double x : p) EXPECT_NEAR(x, 0.25, 1e-15);
  EXPECT_NEAR(clf.loss(), std::log(4.0), 1e-12);
}

TEST(Classifier, LossNeverIncreases) {
  auto c = fixtures::small_corpus();
  SoftmaxClassifier clf(*c, {0.01, 0.5, 50});
  const auto trace = clf.train();
  ASSERT_EQ(trace.size(), 51u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12);
  EXPECT_LT(trace.back(), trace.front());
}

TEST(RepresentativeWords, ExclusiveWordRanksFirst) {
  // "x" (w0) appears only in category A; other words are shared.
  std::vector<std::vector<WordId>> docs;
  std::vector<std::string> cats;
  for (int i = 0; i < 6; ++i) {
    docs.push_back({0, 1, 2, static_cast<WordId>(3 + i % 2)});
    cats.push_back("A");
    docs.push_back({1, 2, static_cast<WordId>(3 + i % 2), 5});
    cats.push_back("B");
  }
  auto c = fixtures::tiny_corpus(docs, 6, cats);
  const auto idx = representative_words(*c);
  EXPECT_EQ(idx.categories, (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(idx.ranked[0].front(), 0u);
  EXPECT_EQ(idx.ranked[1].front(), 5u);
  EXPECT_EQ(idx.position(0, 0), 0u);
  EXPECT_EQ(chi_square_top(*c, 0, 1).front(), idx.ranked[0].front());
}

TEST(RepresentativeWords, AgreeWithChiSquareOnSignatureWords) {
  auto c = fixtures::small_corpus();
  const auto idx = representative_words(*c);
  const auto layout = synthetic_layout(fixtures::small_synthetic());
  for (std::size_t cat = 0; cat < 4; ++cat) {
    const auto lr = idx.top(cat, 10);
    const auto chi = chi_square_top(*c, cat, 10);
    std::size_t overlap = 0;
    for (auto w : lr) {
      EXPECT_EQ(w / layout.block_size, cat) << "top word outside the category block";
      overlap += std::find(chi.begin(), chi.end(), w) != chi.end();
    }
    EXPECT_GE(overlap, 5u);
  }
}

TEST(RepresentativeWords, TinyCategoryIsAnError) {
  auto c = fixtures::tiny_corpus({{0}, {1}, {0}}, 2, {"A", "B", "A"});
  EXPECT_THROW(representative_words(*c), Error);
}
