#include <gtest/gtest.h>

#include <map>

#include "fixtures.hpp"

using namespace hltm;

namespace {

// doc0 = [w0, w1, w1, w2] with token 0 unassigned and the rest at t0, t0, t1;
// doc1 = w0 x3 (t0), w1 x5 (t0), w2 x4 (t1).
GibbsState conditional_fixture() {
  std::vector<WordId> doc1;
  std::vector<std::int32_t> z1;
  for (int i = 0; i < 3; ++i) doc1.push_back(0), z1.push_back(0);
  for (int i = 0; i < 5; ++i) doc1.push_back(1), z1.push_back(0);
  for (int i = 0; i < 4; ++i) doc1.push_back(2), z1.push_back(1);
  auto c = fixtures::tiny_corpus({{0, 1, 1, 2}, doc1}, 3);
  std::vector<std::int32_t> z = {kUnassigned, 0, 0, 1};
  z.insert(z.end(), z1.begin(), z1.end());
  return make_gibbs_state(c, PriorSet::symmetric(2, 2, 3, 0.1, 0.01), z, 1);
}

// Collapsed joint p(w, z) by the Polya-urn chain rule: tokens are added one
// at a time and each contributes its predictive probability.
double chain_rule_log_joint(const Corpus& c, const std::vector<std::int32_t>& z, std::size_t k, double alpha,
                            double beta) {
  const std::size_t v = c.vocab_size();
  std::vector<std::vector<double>> nwt(k, std::vector<double>(v, 0.0));
  std::vector<double> nt(k, 0.0);
  double lp = 0.0;
  std::size_t pos = 0;
  for (const auto& doc : c.documents()) {
    std::vector<double> ndt(k, 0.0);
    double nd = 0.0;
    for (WordId w : doc.tokens) {
      const auto t = static_cast<std::size_t>(z[pos++]);
      lp += std::log((ndt[t] + alpha) / (nd + static_cast<double>(k) * alpha));
      lp += std::log((nwt[t][w] + beta) / (nt[t] + static_cast<double>(v) * beta));
      ndt[t] += 1;
      nd += 1;
      nwt[t][w] += 1;
      nt[t] += 1;
    }
  }
  return lp;
}

}  // namespace

TEST(Conditional, MatchesHandComputation) {
  auto s = conditional_fixture();
  const auto p = conditional_distribution(s, 0, 0);
  // t0: n_dt=2, n_wt=3, n_t=10; t1: n_dt=1, n_wt=0, n_t=5
  const double a = (2 + 0.1) * (3 + 0.01) / (10 + 0.03);
  const double b = (1 + 0.1) * (0 + 0.01) / (5 + 0.03);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_NEAR(p[0], a / (a + b), 1e-9);
  EXPECT_NEAR(p[1], b / (a + b), 1e-9);
  EXPECT_NEAR(p[0], 0.99654, 1e-5);
}

TEST(Conditional, ConstraintPotentialMultipliesScore) {
  auto s = conditional_fixture();
  s.constraints.set(ConstraintEntry{ConstraintScope::Word, 0, {{0, std::log(1e-8)}}, 0.0});
  const auto p = conditional_distribution(s, 0, 0);
  const double a = (2 + 0.1) * (3 + 0.01) / (10 + 0.03) * 1e-8;
  const double b = (1 + 0.1) * (0 + 0.01) / (5 + 0.03);
  EXPECT_NEAR(p[0] / (a / (a + b)), 1.0, 1e-9);
  EXPECT_NEAR(p[0], 2.88e-6, 0.01e-6);
}

TEST(Conditional, ZeroPotentialsChangeNothing) {
  auto plain = conditional_fixture();
  auto constrained = conditional_fixture();
  constrained.constraints.set(ConstraintEntry{ConstraintScope::Word, 0, {{0, 0.0}, {1, 0.0}}, 0.0});
  constrained.constraints.set(ConstraintEntry{ConstraintScope::Document, 0, {}, 0.0});
  const auto a = conditional_distribution(plain, 0, 0);
  const auto b = conditional_distribution(constrained, 0, 0);
  for (std::size_t t = 0; t < 2; ++t) EXPECT_NEAR(a[t], b[t], 1e-15);
}

TEST(Conditional, SingleTopicIsCertain) {
  auto c = fixtures::tiny_corpus({{0, 1}}, 2);
  auto s = make_gibbs_state(c, PriorSet::symmetric(1, 1, 2, 0.1, 0.01), {kUnassigned, 0}, 1);
  EXPECT_EQ(conditional_distribution(s, 0, 0), std::vector<double>{1.0});
}

TEST(Conditional, LargerPriorRaisesProbability) {
  auto s = conditional_fixture();
  const double before = conditional_distribution(s, 0, 0)[1];
  s.priors.beta(1, 0) = 0.5;
  const double after = conditional_distribution(s, 0, 0)[1];
  EXPECT_GT(after, before);
  s.priors.alpha(0, 1) = 3.0;
  EXPECT_GT(conditional_distribution(s, 0, 0)[1], after);
}

TEST(Conditional, RequiresUnassignedToken) {
  auto s = conditional_fixture();
  EXPECT_THROW(conditional_distribution(s, 0, 1), Error);
}

TEST(Sweeps, CountsStayConsistent) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 6, 0.1, 0.01, 4);
  EXPECT_NO_THROW(audit_counts(s));
  for (int i = 0; i < 5; ++i) {
    sweep(s, 3);
    ASSERT_NO_THROW(audit_counts(s));
  }
  std::int64_t total = 0;
  for (auto n : s.n_t) total += n;
  EXPECT_EQ(static_cast<std::size_t>(total), c->token_count());
}

TEST(Sweeps, SameSeedSameAssignments) {
  auto c = fixtures::small_corpus();
  auto a = init_gibbs(c, 5, 0.1, 0.01, 99);
  auto b = init_gibbs(c, 5, 0.1, 0.01, 99);
  sweep(a, 10);
  sweep(b, 10);
  EXPECT_EQ(a.z, b.z);
  auto other = init_gibbs(c, 5, 0.1, 0.01, 100);
  sweep(other, 10);
  EXPECT_NE(a.z, other.z);
}

TEST(Sweeps, HardConstraintIsNeverViolated) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 4, 0.1, 0.01, 4);
  const WordId w = 0;
  forget_word_topic(s, w, std::nullopt);
  s.constraints.set(ConstraintEntry{ConstraintScope::Word, w, {{2, 0.0}}, -std::numeric_limits<double>::infinity()});
  sweep(s, 5);
  std::size_t seen = 0;
  for (std::size_t d = 0; d < s.docs(); ++d) {
    const auto& toks = c->document(d).tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i] != w) continue;
      ++seen;
      EXPECT_EQ(s.assignment(d, i), 2);
    }
  }
  EXPECT_GT(seen, 0u);
}

TEST(Forgetting, WordTopicOnlyTouchesThatTopic) {
  auto s = conditional_fixture();
  EXPECT_EQ(forget_word_topic(s, 1, 0), 7u);
  EXPECT_EQ(s.n_wt(1, 0), 0);
  EXPECT_EQ(s.n_wt(2, 1), 5);
  EXPECT_NO_THROW(audit_counts(s));
  EXPECT_EQ(forget_word_topic(s, 2, std::nullopt), 5u);
  EXPECT_EQ(s.n_t[1], 0);
}

TEST(Forgetting, WordExceptKeepsOneTopic) {
  auto s = conditional_fixture();
  EXPECT_EQ(forget_word_except(s, 2, 0), 5u);
  EXPECT_EQ(forget_word_except(s, 1, 0), 0u);
  EXPECT_NO_THROW(audit_counts(s));
}

TEST(Forgetting, DocumentRowIsZeroedThenRestoredBySweep) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 4, 0.1, 0.01, 1);
  sweep(s, 2);
  EXPECT_EQ(forget_document(s, 3), c->document(3).tokens.size());
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(s.n_dt(3, t), 0);
  sweep(s, 1);
  std::int64_t total = 0;
  for (auto n : s.n_t) total += n;
  EXPECT_EQ(static_cast<std::size_t>(total), c->token_count());
  EXPECT_NO_THROW(audit_counts(s));
}

TEST(LogLikelihood, SingleTokenSingleTopicIsZero) {
  auto c = fixtures::tiny_corpus({{0}}, 1);
  auto s = make_gibbs_state(c, PriorSet::symmetric(1, 1, 1, 0.1, 0.01), {0}, 1);
  EXPECT_NEAR(log_likelihood(s), 0.0, 1e-12);
}

TEST(LogLikelihood, MatchesChainRuleOracle) {
  auto c = fixtures::small_corpus(21);
  auto s = init_gibbs(c, 3, 0.3, 0.05, 2);
  sweep(s, 3);
  const double expected = chain_rule_log_joint(*c, s.z, 3, 0.3, 0.05);
  EXPECT_NEAR(log_likelihood(s), expected, 1e-8 * std::abs(expected));
}

TEST(LogLikelihood, TrainedStateBeatsShuffledAssignments) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 4, 0.1, 0.01, 6);
  sweep(s, 100);
  const double trained = log_likelihood(s);
  Rng rng(1);
  for (int rep = 0; rep < 5; ++rep) {
    auto z = s.z;
    shuffle_in_place(z, rng);
    auto shuffled = make_gibbs_state(c, s.priors, z, 1);
    EXPECT_LT(log_likelihood(shuffled), trained);
  }
}

TEST(RunGibbs, StopsOnToleranceOrCap) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 4, 0.1, 0.01, 6);
  const auto capped = run_gibbs(s, 3, 0.0);
  EXPECT_EQ(capped.sweeps, 3u);
  EXPECT_FALSE(capped.converged);
  const auto loose = run_gibbs(s, 50, 1.0);
  EXPECT_EQ(loose.sweeps, 2u);
  EXPECT_TRUE(loose.converged);
  EXPECT_NEAR(loose.log_likelihood, log_likelihood(s), 1e-9);
}

TEST(TopicEdits, MergeKeepsTokensAndShiftsIndices) {
  auto c = fixtures::small_corpus();
  auto s = init_gibbs(c, 5, 0.1, 0.01, 6);
  sweep(s, 5);
  const auto n1 = s.n_t[1], n3 = s.n_t[3], n4 = s.n_t[4];
  s.priors.beta(4, 7) = 2.5;
  gibbs_merge_topics(s, 1, 3);
  ASSERT_EQ(s.topics(), 4u);
  EXPECT_EQ(s.n_t[1], n1 + n3);
  EXPECT_EQ(s.n_t[3], n4);
  EXPECT_DOUBLE_EQ(s.priors.beta(3, 7), 2.5);
  EXPECT_NO_THROW(audit_counts(s));
}

TEST(TopicEdits, AppendAddsEmptyTopic) {
  auto s = conditional_fixture();
  EXPECT_EQ(gibbs_append_topic(s), 2u);
  EXPECT_EQ(s.n_t[2], 0);
  EXPECT_EQ(s.priors.alpha.cols(), 3u);
  const auto p = conditional_distribution(s, 0, 0);
  EXPECT_EQ(p.size(), 3u);
  EXPECT_GT(p[2], 0.0);
}

TEST(Enumeration, SamplerMatchesExactPosterior) {
  // Six tokens, two topics: all 64 assignments can be enumerated.
  auto c = fixtures::tiny_corpus({{0, 0, 1}, {2, 2, 1}}, 3);
  const double alpha = 0.5, beta = 0.5;
  std::vector<double> exact(64);
  double norm = 0.0;
  for (std::size_t code = 0; code < 64; ++code) {
    std::vector<std::int32_t> z(6);
    for (std::size_t i = 0; i < 6; ++i) z[i] = static_cast<std::int32_t>((code >> i) & 1);
    exact[code] = std::exp(chain_rule_log_joint(*c, z, 2, alpha, beta));
    norm += exact[code];
  }
  for (auto& p : exact) p /= norm;

  auto s = make_gibbs_state(c, PriorSet::symmetric(2, 2, 3, alpha, beta), std::vector<std::int32_t>(6, 0), 17);
  sweep(s, 500);
  std::vector<double> freq(64, 0.0);
  const int n = 100000;
  for (int it = 0; it < n; ++it) {
    sweep(s, 1);
    std::size_t code = 0;
    for (std::size_t i = 0; i < 6; ++i) code |= static_cast<std::size_t>(s.z[i]) << i;
    freq[code] += 1.0 / n;
  }
  double tv = 0.0;
  for (std::size_t i = 0; i < 64; ++i) tv += 0.5 * std::abs(freq[i] - exact[i]);
  EXPECT_LE(tv, 0.02);
}
