#include <gtest/gtest.h>

#include <random>

#include "krone/decompose.hpp"
#include "krone/json_io.hpp"
#include "krone/knowledge_base.hpp"
#include "support/testing.hpp"

using namespace krone;
using testing_support::seq;
using testing_support::ThreeTemplates;

namespace {

std::vector<std::string> labels(const KroneTree& tree, const std::vector<NodeId>& ids) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(tree.label(id));
  return out;
}

oracle::Decomposition to_oracle(const KroneSeqSet& set, const KroneTree& tree) {
  oracle::Decomposition d;
  auto conv = [&](const KroneSeq& s) {
    return oracle::Unit{to_string(s.level)[0], util::join(tree.label_path(s.parent), "/"), labels(tree, s.nodes),
                        s.span.begin, s.span.end};
  };
  for (const auto& s : set.s_seqs) d.s.push_back(conv(s));
  for (const auto& s : set.a_seqs) d.a.push_back(conv(s));
  for (const auto& s : set.e_seqs) d.e.push_back(conv(s));
  return d;
}

}  // namespace

TEST(Annotate, PathsInEventOrder) {
  ThreeTemplates t;
  auto paths = annotate(seq("s", "T3 T1 T2"), t.tree);
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(t.tree.label(paths[0].entity), "block");
  EXPECT_EQ(t.tree.label(paths[2].status), "succeeded");
  EXPECT_THROW(annotate(seq("s", "T1 T9"), t.tree), Error);
}

TEST(Decompose, ThreeTemplateExample) {
  ThreeTemplates t;
  auto set = decompose(seq("s", "T1 T2 T3"), t.tree);
  ASSERT_EQ(set.s_seqs.size(), 2u);
  EXPECT_EQ(t.tree.label(set.s_seqs[0].parent), "open");
  EXPECT_EQ(labels(t.tree, set.s_seqs[0].nodes), (std::vector<std::string>{"started", "succeeded"}));
  EXPECT_EQ(set.s_seqs[0].span, (Span{0, 2}));
  EXPECT_EQ(t.tree.label(set.s_seqs[1].parent), "write");
  EXPECT_EQ(set.s_seqs[1].span, (Span{2, 3}));

  ASSERT_EQ(set.a_seqs.size(), 2u);
  EXPECT_EQ(t.tree.label(set.a_seqs[0].parent), "session");
  EXPECT_EQ(labels(t.tree, set.a_seqs[0].nodes), (std::vector<std::string>{"open"}));
  EXPECT_EQ(set.a_seqs[0].span, (Span{0, 2}));
  EXPECT_EQ(set.a_seqs[1].span, (Span{2, 3}));

  ASSERT_EQ(set.e_seqs.size(), 1u);
  EXPECT_EQ(set.e_seqs[0].parent, t.tree.root().id);
  EXPECT_EQ(labels(t.tree, set.e_seqs[0].nodes), (std::vector<std::string>{"session", "block"}));
  EXPECT_EQ(set.e_seqs[0].span, (Span{0, 3}));

  EXPECT_EQ(render(set.s_seqs[0], t.tree), "open → started succeeded");
  EXPECT_EQ(render(set.e_seqs[0], t.tree), "root → session block");
}

TEST(Decompose, SingleEvent) {
  ThreeTemplates t;
  auto set = decompose(seq("s", "T2"), t.tree);
  for (auto level : {SeqLevel::S, SeqLevel::A, SeqLevel::E}) {
    ASSERT_EQ(set.at(level).size(), 1u);
    EXPECT_EQ(set.at(level)[0].span, (Span{0, 1}));
    EXPECT_EQ(set.at(level)[0].nodes.size(), 1u);
  }
}

TEST(Decompose, AlternatingEntitiesRepeatInTheESeq) {
  ThreeTemplates t;
  auto set = decompose(seq("s", "T1 T3 T1"), t.tree);
  EXPECT_EQ(labels(t.tree, set.e_seqs[0].nodes), (std::vector<std::string>{"session", "block", "session"}));
  EXPECT_EQ(set.a_seqs.size(), 3u);
  EXPECT_EQ(set.s_seqs.size(), 3u);
}

TEST(Decompose, EmptySequence) {
  ThreeTemplates t;
  try {
    decompose(LogSequence{"empty", {}, std::nullopt}, t.tree);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySequence);
  }
}

TEST(SegmentEvents, Slices) {
  ThreeTemplates t;
  auto s = seq("s", "T1 T2 T3");
  auto set = decompose(s, t.tree);
  EXPECT_EQ(segment_events(set.s_seqs[0], s), (std::vector<TemplateId>{"T1", "T2"}));
  EXPECT_EQ(segment_events(set.s_seqs[1], s), (std::vector<TemplateId>{"T3"}));
  EXPECT_EQ(segment_events(set.e_seqs[0], s), s.events);
  KroneSeq bad = set.s_seqs[1];
  bad.span = {2, 4};
  EXPECT_THROW(segment_events(bad, s), Error);
  bad.span = {1, 1};
  EXPECT_THROW(segment_events(bad, s), Error);
}

TEST(Decompose, MatchesBruteForceOracleOnRandomTrees) {
  std::mt19937_64 rng(2024);
  for (int round = 0; round < 300; ++round) {
    auto rt = oracle::random_tree(rng, 3, 3);
    auto built = testing_support::build(rt);
    for (int k = 0; k < 10; ++k) {
      auto events = oracle::random_sequence(rng, rt, 10);
      std::vector<oracle::Labels> paths;
      for (const auto& e : events) paths.push_back(rt.labels.at(e));
      auto got = to_oracle(decompose({"s", events, std::nullopt}, built.tree), built.tree);
      ASSERT_EQ(got, oracle::brute_force(paths));
    }
  }
}

TEST(Decompose, RunMaximalityAndCompositionProperties) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 300; ++round) {
    auto rt = oracle::random_tree(rng, 5, 4);
    auto built = testing_support::build(rt);
    const auto& tree = built.tree;
    LogSequence s{"s", oracle::random_sequence(rng, rt, 50), std::nullopt};
    auto set = decompose(s, tree);
    for (std::size_t i = 1; i < set.a_seqs.size(); ++i) {
      EXPECT_NE(set.a_seqs[i].parent, set.a_seqs[i - 1].parent);
    }
    std::size_t si = 0;
    for (const auto& a : set.a_seqs) {
      std::size_t begin = a.span.begin;
      for (std::size_t j = 0; j < a.nodes.size(); ++j, ++si) {
        const auto& sq = set.s_seqs[si];
        EXPECT_EQ(sq.parent, a.nodes[j]);
        EXPECT_EQ(tree.node(sq.parent).parent, a.parent);
        EXPECT_EQ(sq.span.begin, begin);
        if (j > 0) EXPECT_NE(sq.parent, set.s_seqs[si - 1].parent);
        for (auto n : sq.nodes) EXPECT_EQ(tree.node(n).parent, sq.parent);
        begin = sq.span.end;
      }
      EXPECT_EQ(begin, a.span.end);
    }
    EXPECT_EQ(si, set.s_seqs.size());
    EXPECT_EQ(set.e_seqs[0].nodes.size(), set.a_seqs.size());
    EXPECT_EQ(decompose(s, tree), set);
  }
}

TEST(DecompositionExport, SpansKeysAndRenderedForms) {
  ThreeTemplates t;
  auto s = seq("blk", "T1 T2 T3");
  auto j = io::to_json(decompose(s, t.tree), s, t.tree);
  EXPECT_EQ(j["sequence_id"], "blk");
  EXPECT_EQ(j["s_seqs"][0]["span"], io::Json::array({0, 2}));
  EXPECT_EQ(j["s_seqs"][0]["parent"], "root/session/open");
  EXPECT_EQ(j["s_seqs"][0]["key"], "S|root/session/open|started,succeeded");
  EXPECT_EQ(j["a_seqs"][1]["rendered"], "block → write");
  EXPECT_EQ(j["e_seqs"][0]["nodes"], io::Json::array({"session", "block"}));
}
