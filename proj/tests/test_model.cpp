#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace hltm;

namespace {

Model gibbs_model(std::shared_ptr<const Corpus> c, std::size_t k, std::vector<std::int32_t> z, double alpha = 0.1,
                  double beta = 0.01) {
  auto priors = PriorSet::symmetric(c->num_documents(), k, c->vocab_size(), alpha, beta);
  return Model{Backend::InfoGibbs, make_gibbs_state(c, std::move(priors), std::move(z), 1)};
}

}  // namespace

TEST(Ranking, WordsOrderedByCount) {
  auto c = fixtures::tiny_corpus({{0, 0, 0, 1}}, 3);
  auto m = gibbs_model(c, 1, {0, 0, 0, 0});
  EXPECT_EQ(rank_words(m, 0), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Ranking, TiesKeepLowerIndexFirst) {
  auto c = fixtures::tiny_corpus({{0, 0, 1, 1}}, 2);
  auto m = gibbs_model(c, 1, {0, 0, 0, 0});
  EXPECT_EQ(rank_words(m, 0), (std::vector<std::uint32_t>{0, 1}));
}

TEST(Ranking, PriorMassCountsTowardWordScore) {
  auto c = fixtures::tiny_corpus({{1, 1, 1, 1, 1}}, 2);
  auto m = gibbs_model(c, 1, {0, 0, 0, 0, 0});
  m.gibbs().priors.beta(0, 0) = 10.0;
  EXPECT_EQ(rank_words(m, 0), (std::vector<std::uint32_t>{0, 1}));
}

TEST(Ranking, DocumentsOrderedBySmoothedShare) {
  std::vector<WordId> ten(10, 0);
  auto c = fixtures::tiny_corpus({ten, ten}, 1);
  std::vector<std::int32_t> z(20, 1);
  for (int i = 0; i < 5; ++i) z[i] = 0;
  for (int i = 10; i < 13; ++i) z[i] = 0;
  auto m = gibbs_model(c, 2, z);
  EXPECT_EQ(rank_documents(m, 0), (std::vector<std::uint32_t>{0, 1}));
  const auto s = snapshot(m);
  EXPECT_NEAR(s.doc_probs(0, 0), 5.1 / 10.2, 1e-12);
  EXPECT_NEAR(s.doc_probs(1, 0), 3.1 / 10.2, 1e-12);
}

TEST(Ranking, AllZeroCountsFallBackToDocumentOrder) {
  auto c = fixtures::tiny_corpus({{0}, {0}, {0}}, 1);
  auto m = gibbs_model(c, 2, {1, 1, 1});
  EXPECT_EQ(rank_documents(m, 0), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Ranking, RankOfAndTopN) {
  std::vector<double> scores{0.1, 0.5, 0.3, 0.5};
  const auto order = rank_descending(scores);
  EXPECT_EQ(order, (std::vector<std::uint32_t>{1, 3, 2, 0}));
  EXPECT_EQ(rank_of(order, 2), 3u);
  EXPECT_EQ(top_n(order, 2), (std::vector<std::uint32_t>{1, 3}));
  EXPECT_EQ(top_n(order, 10).size(), 4u);
  EXPECT_THROW(rank_of(order, 9), Error);
}

TEST(Snapshot, WordDistributionsAreNormalized) {
  auto c = fixtures::small_corpus();
  for (auto b : kAllBackends) {
    auto m = train_model(c, b, 5, 3, fixtures::quick_training());
    const auto s = snapshot(m);
    ASSERT_EQ(s.topic_count(), 5u);
    for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(sum(s.word_probs.row(t)), 1.0, 1e-9) << to_string(b);
    for (std::size_t d = 0; d < c->num_documents(); ++d) EXPECT_NEAR(sum(s.doc_probs.row(d)), 1.0, 1e-9);
  }
}

TEST(Snapshot, JsonRoundTripPreservesEverything) {
  auto c = fixtures::small_corpus();
  auto m = train_model(c, Backend::ConstGibbs, 4, 8, fixtures::quick_training());
  inject(m, RemoveWord{0, rank_words(m, 0)[2]});
  const auto s = snapshot(m);
  const auto back = snapshot_from_json(nlohmann::json::parse(snapshot_to_json(s).dump()));
  EXPECT_EQ(back.backend, s.backend);
  EXPECT_EQ(back.vocabulary, s.vocabulary);
  EXPECT_EQ(back.ranked_words, s.ranked_words);
  EXPECT_EQ(back.ranked_docs, s.ranked_docs);
  EXPECT_EQ(back.constraints, s.constraints);
  EXPECT_EQ(back.priors.beta, s.priors.beta);
  for (std::size_t i = 0; i < s.word_probs.data().size(); ++i) {
    EXPECT_NEAR(back.word_probs.data()[i], s.word_probs.data()[i], 1e-12);
  }
}

TEST(Snapshot, InfinitePenaltiesSurviveJson) {
  ConstraintSet c;
  c.set(ConstraintEntry{ConstraintScope::Word, 3, {{1, 0.0}}, -std::numeric_limits<double>::infinity()});
  const auto back = constraints_from_json(nlohmann::json::parse(constraints_to_json(c).dump()));
  EXPECT_EQ(back, c);
}

TEST(Constraints, NewerEntryReplacesOlderForSameTarget) {
  ConstraintSet c;
  c.set(ConstraintEntry{ConstraintScope::Word, 4, {{0, -1.0}}, 0.0});
  c.set(ConstraintEntry{ConstraintScope::Word, 4, {{1, -2.0}}, 0.5});
  c.set(ConstraintEntry{ConstraintScope::Document, 4, {{0, -3.0}}, 0.0});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c.potential(1, 4, 0), -2.0);
  EXPECT_DOUBLE_EQ(c.potential(0, 4, 0), 0.5);
  EXPECT_DOUBLE_EQ(c.potential(0, 4, 4), 0.5 - 3.0);
  EXPECT_DOUBLE_EQ(c.potential(0, 9, 9), 0.0);
}

TEST(Constraints, ErasingATopicDropsAndRenumbers) {
  ConstraintSet c;
  c.set(ConstraintEntry{ConstraintScope::Word, 1, {{2, -1.0}}, 0.0});
  c.set(ConstraintEntry{ConstraintScope::Word, 2, {{4, -2.0}}, 0.0});
  c.set(ConstraintEntry{ConstraintScope::Word, 3, {{0, -3.0}}, 0.0});
  c.erase_topic(2);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.find(ConstraintScope::Word, 1), nullptr);
  EXPECT_DOUBLE_EQ(c.find(ConstraintScope::Word, 2)->value(3), -2.0);
  EXPECT_DOUBLE_EQ(c.find(ConstraintScope::Word, 3)->value(0), -3.0);
}

TEST(Priors, TopicsAppendAndErase) {
  auto p = PriorSet::symmetric(3, 2, 4, 0.1, 0.01);
  p.beta(1, 2) = 5.0;
  p.append_topic();
  EXPECT_EQ(p.topics(), 3u);
  EXPECT_EQ(p.alpha.cols(), 3u);
  EXPECT_DOUBLE_EQ(p.beta(2, 0), 0.01);
  p.erase_topic(0);
  EXPECT_DOUBLE_EQ(p.beta(0, 2), 5.0);
  EXPECT_NEAR(p.beta_sum(0), 5.03, 1e-12);
  EXPECT_NEAR(p.alpha_sum(1), 0.2, 1e-12);
}

TEST(WireFormat, EveryOperationRoundTrips) {
  Vocabulary vocab({"apple", "banana", "cherry", "date"});
  const std::vector<RefinementOp> ops = {RemoveWord{1, 2},       AddWord{0, 3},        RemoveDocument{2, 7},
                                         MergeTopics{0, 3},      SplitTopic{1, {0, 2}}, ChangeWordOrder{2, 1, 3},
                                         CreateTopic{{3, 2, 1}}};
  for (const auto& op : ops) {
    EXPECT_EQ(op_from_json(op_to_json(op)), op);
    const auto named = op_to_json(op, &vocab);
    EXPECT_EQ(op_from_json(named, &vocab), op) << named.dump();
  }
  EXPECT_EQ(op_to_json(AddWord{0, 3}, &vocab), (nlohmann::json{{"type", "add_word"}, {"topic", 0}, {"word", "date"}}));
}

TEST(WireFormat, NamesMatchOperationKinds) {
  EXPECT_EQ(op_to_json(SplitTopic{0, {1}})["type"], "split_topic");
  EXPECT_EQ(op_to_json(ChangeWordOrder{0, 1, 2})["type"], "change_word_order");
  EXPECT_EQ(op_to_json(CreateTopic{{1}})["type"], "create_topic");
  EXPECT_EQ(op_to_json(RemoveDocument{0, 1})["type"], "remove_document");
}

TEST(WireFormat, MalformedPayloadsAreRejected) {
  EXPECT_THROW(op_from_json(nlohmann::json{{"type", "rotate_topic"}}), Error);
  EXPECT_THROW(op_from_json(nlohmann::json{{"type", "remove_word"}, {"topic", 0}}), Error);
  EXPECT_THROW(op_from_json(nlohmann::json{{"type", "remove_word"}, {"topic", -1}, {"word", 0}}), Error);
  EXPECT_THROW(op_from_json(nlohmann::json::array()), Error);
  EXPECT_THROW(op_from_json(nlohmann::json{{"type", "add_word"}, {"topic", 0}, {"word", "nope"}}), Error);
  Vocabulary vocab({"a"});
  EXPECT_THROW(op_from_json(nlohmann::json{{"type", "add_word"}, {"topic", 0}, {"word", "zzz"}}, &vocab), Error);
}

TEST(WireFormat, DocumentsMayBeNamedById) {
  auto c = fixtures::tiny_corpus({{0}, {0}}, 1);
  const auto op = op_from_json(nlohmann::json{{"type", "remove_document"}, {"topic", 0}, {"document", "d1"}},
                               &c->vocabulary(), c.get());
  EXPECT_EQ(op, RefinementOp(RemoveDocument{0, 1}));
}

TEST(Validation, StructuralErrorsAreCaught) {
  EXPECT_THROW(validate(ChangeWordOrder{0, 2, 2}, 3, 5, 5), Error);
  EXPECT_THROW(validate(SplitTopic{0, {}}, 3, 5, 5), Error);
  EXPECT_THROW(validate(CreateTopic{{}}, 3, 5, 5), Error);
  EXPECT_THROW(validate(MergeTopics{1, 1}, 3, 5, 5), Error);
  EXPECT_THROW(validate(RemoveWord{3, 0}, 3, 5, 5), Error);
  EXPECT_THROW(validate(AddWord{0, 5}, 3, 5, 5), Error);
  EXPECT_THROW(validate(RemoveDocument{0, 5}, 3, 5, 5), Error);
  EXPECT_NO_THROW(validate(CreateTopic{{4}}, 3, 5, 5));
}

TEST(Validation, TopicCountsAfterOperations) {
  EXPECT_EQ(topics_after(MergeTopics{0, 1}, 20), 19u);
  EXPECT_EQ(topics_after(SplitTopic{0, {1}}, 20), 21u);
  EXPECT_EQ(topics_after(CreateTopic{{1}}, 20), 21u);
  EXPECT_EQ(topics_after(RemoveWord{0, 1}, 20), 20u);
}

TEST(Backends, NamesRoundTrip) {
  for (auto b : kAllBackends) EXPECT_EQ(parse_backend(to_string(b)), b);
  for (auto k : kAllRefinements) EXPECT_EQ(parse_refinement_kind(to_string(k)), k);
  EXPECT_THROW(parse_backend("lda"), Error);
}

TEST(ModelState, JsonRoundTripReproducesFutureSampling) {
  auto c = fixtures::small_corpus();
  for (auto b : kAllBackends) {
    auto m = train_model(c, b, 4, 2, fixtures::quick_training());
    auto copy = model_state_from_json(nlohmann::json::parse(model_state_to_json(m).dump()), c);
    run_capped_inference(m);
    run_capped_inference(copy);
    const auto a = snapshot(m), z = snapshot(copy);
    EXPECT_EQ(a.ranked_words, z.ranked_words) << to_string(b);
    for (std::size_t i = 0; i < a.word_probs.data().size(); ++i) {
      ASSERT_NEAR(a.word_probs.data()[i], z.word_probs.data()[i], 1e-12) << to_string(b);
    }
  }
}
