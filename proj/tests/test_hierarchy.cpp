#include <gtest/gtest.h>

#include <random>
#include <set>

#include "krone/extraction.hpp"
#include "krone/hierarchy.hpp"
#include "krone/json_io.hpp"
#include "support/testing.hpp"

using namespace krone;
using testing_support::ThreeTemplates;

namespace {

ErrorCode build_error(const TemplateCatalog& c, const std::vector<SemanticTriple>& t) {
  try {
    build_tree(c, t);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

std::vector<std::string> labels_of(const KroneTree& tree, const LeafPath& p) {
  return {tree.label(p.entity), tree.label(p.action), tree.label(p.status)};
}

}  // namespace

TEST(Normalize, LowercaseTrimAndCollapse) {
  EXPECT_EQ(normalize_token("  Packet   Responder "), "packet_responder");
  EXPECT_EQ(normalize_token("Added to\tinvalid-set"), "added_to_invalid-set");
  EXPECT_EQ(normalize_token("blockMap/updated!"), "blockmap_updated");
  EXPECT_EQ(normalize_token("***"), "");
}

TEST(Normalize, Idempotent) {
  std::mt19937_64 rng(3);
  const std::string alphabet = "aB c_-.,/\t!Z9\xC3\xA9";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto len = rng() % 12;
    for (std::size_t j = 0; j < len; ++j) s += alphabet[rng() % alphabet.size()];
    const auto once = normalize_token(s);
    EXPECT_EQ(normalize_token(once), once) << s;
  }
}

TEST(BuildTree, Singleton) {
  auto cat = testing_support::catalog({{"E1", "Open session started"}});
  auto tree = build_tree(cat, {{"E1", "Session", "Open", "Started"}});
  auto st = tree_stats(tree);
  EXPECT_EQ(st.entity_count, 1u);
  EXPECT_EQ(st.action_count, 1u);
  EXPECT_EQ(st.status_count, 1u);
  EXPECT_EQ(st.template_count, 1u);
  EXPECT_EQ(labels_of(tree, tree.lookup_leaf("E1")), (std::vector<std::string>{"session", "open", "started"}));
}

TEST(BuildTree, ThreeTemplatesGroupByEntityAndAction) {
  ThreeTemplates t;
  auto st = tree_stats(t.tree);
  EXPECT_EQ(st.entity_count, 2u);
  EXPECT_EQ(st.action_count, 2u);
  EXPECT_EQ(st.status_count, 3u);
  EXPECT_EQ(st.template_count, 3u);
  EXPECT_EQ(st.max_branching[2], 2u);
  EXPECT_DOUBLE_EQ(st.mean_branching[2], 1.5);

  std::set<std::uint32_t> leaves;
  for (const auto* id : {"T1", "T2", "T3"}) leaves.insert(t.tree.lookup_leaf(id).status.value);
  EXPECT_EQ(leaves.size(), 3u);
  EXPECT_EQ(labels_of(t.tree, t.tree.lookup_leaf("T2")), (std::vector<std::string>{"session", "open", "succeeded"}));
  EXPECT_EQ(labels_of(t.tree, t.tree.lookup_leaf("T3")), (std::vector<std::string>{"block", "write", "started"}));
}

TEST(BuildTree, IdenticalTriplesBecomeNumberedSiblings) {
  auto cat = testing_support::catalog({{"E2", "b"}, {"E1", "a"}});
  auto tree = build_tree(cat, {{"E2", "session", "open", "started"}, {"E1", "Session", "open", "Started"}});
  EXPECT_EQ(tree.label(tree.lookup_leaf("E1").status), "started#1");
  EXPECT_EQ(tree.label(tree.lookup_leaf("E2").status), "started#2");
  EXPECT_EQ(tree.lookup_leaf("E1").action, tree.lookup_leaf("E2").action);
  EXPECT_EQ(tree_stats(tree).status_count, 2u);
}

TEST(BuildTree, Errors) {
  auto cat = testing_support::catalog({{"E1", "a"}, {"E2", "b"}});
  EXPECT_EQ(build_error(cat, {{"E1", "x", "y", "z"}}), ErrorCode::MissingTriple);
  EXPECT_EQ(build_error(cat, {{"E1", "x", "y", "z"}, {"E1", "x", "y", "w"}, {"E2", "x", "y", "v"}}),
            ErrorCode::DuplicateTriple);
  EXPECT_EQ(build_error(cat, {{"E1", "x", "y", "z"}, {"E2", "x", " ", "v"}}), ErrorCode::ExtractionInvalid);
  EXPECT_EQ(build_error(cat, {{"E1", "x", "y", "z"}, {"E2", "x", "y", "v"}, {"E9", "x", "y", "u"}}),
            ErrorCode::UnknownTemplateId);
}

TEST(LookupLeaf, UnboundTemplate) {
  ThreeTemplates t;
  try {
    t.tree.lookup_leaf("E99");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnboundTemplate);
    EXPECT_EQ(e.detail(), "E99");
  }
}

TEST(KroneTreeInvariants, RandomTreesAreWellFormedBijections) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 200; ++round) {
    auto rt = oracle::random_tree(rng, 5, 4);
    auto built = testing_support::build(rt);
    const auto& tree = built.tree;
    std::set<std::uint32_t> leaves;
    for (const auto& id : rt.ids) {
      auto p = tree.lookup_leaf(id);
      EXPECT_EQ(tree.node(p.status).level, NodeLevel::Status);
      EXPECT_EQ(tree.node(p.action).parent, p.entity);
      EXPECT_EQ(tree.node(p.entity).parent, tree.root().id);
      EXPECT_EQ(tree.node(p.status).template_id, id);
      leaves.insert(p.status.value);
    }
    std::size_t leaf_nodes = 0;
    for (const auto& n : tree.nodes()) {
      if (n.level == NodeLevel::Status) {
        ++leaf_nodes;
        EXPECT_TRUE(n.children.empty());
      } else {
        EXPECT_FALSE(n.children.empty());
        std::set<std::string> sibling_labels;
        for (auto c : n.children) EXPECT_TRUE(sibling_labels.insert(tree.label(c)).second);
      }
    }
    EXPECT_EQ(leaves.size(), rt.ids.size());
    EXPECT_EQ(leaf_nodes, rt.ids.size());
    const auto st = tree_stats(tree);
    EXPECT_EQ(st.status_count, st.template_count);
  }
}

TEST(KroneTreeInvariants, DeterministicExport) {
  ThreeTemplates a, b;
  EXPECT_EQ(io::to_json(a.tree).dump(), io::to_json(b.tree).dump());
  auto shuffled = a.triples;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(io::to_json(build_tree(a.catalog, shuffled)).dump(), io::to_json(a.tree).dump());
}

TEST(KroneTree, FindByPathAndTemplatesUnder) {
  ThreeTemplates t;
  auto open = t.tree.find_by_path("root/session/open");
  ASSERT_TRUE(open);
  EXPECT_EQ(t.tree.label(*open), "open");
  EXPECT_EQ(t.tree.find_by_path("session/open"), open);
  EXPECT_EQ(t.tree.find_by_path("root"), t.tree.root().id);
  EXPECT_FALSE(t.tree.find_by_path("root/nope"));
  EXPECT_EQ(t.tree.templates_under(*t.tree.find_by_path("session")).size(), 2u);
  EXPECT_EQ(t.tree.templates_under(t.tree.root().id).size(), 3u);
}

TEST(TreeExport, NestedNodesWithBindings) {
  ThreeTemplates t;
  auto j = io::to_json(t.tree);
  EXPECT_EQ(j["version"], 1);
  const auto& session = j["root"]["children"][0];
  EXPECT_EQ(session["label"], "session");
  EXPECT_EQ(session["level"], "entity");
  const auto& leaf = session["children"][0]["children"][1];
  EXPECT_EQ(leaf["template_id"], "T2");
  EXPECT_EQ(leaf["path"], "root/session/open/succeeded");
  EXPECT_EQ(j["stats"]["status_count"], 3);
}

TEST(DemoFixture, WriteBlockFinished) {
  auto cat = load_templates(testing_support::data_path("demo/templates.csv"));
  auto fixture = load_triple_fixture(testing_support::data_path("demo/fixture.csv"));
  auto ex = extract_hierarchy(cat, &fixture, nullptr);
  auto tree = build_tree(cat, ex.triples);
  EXPECT_EQ(labels_of(tree, tree.lookup_leaf("E7")), (std::vector<std::string>{"block", "write", "finished"}));
  EXPECT_EQ(labels_of(tree, tree.lookup_leaf("E1")), (std::vector<std::string>{"session", "open", "started"}));
}

TEST(HdfsFixture, CoversTheBundledCatalog) {
  auto cat = load_templates(testing_support::data_path("hdfs/templates.csv"));
  auto fixture = load_triple_fixture(testing_support::data_path("hdfs/fixture.csv"));
  auto ex = extract_hierarchy(cat, &fixture, nullptr);
  EXPECT_EQ(ex.from_fixture, cat.size());
  EXPECT_EQ(ex.from_llm, 0u);
  auto tree = build_tree(cat, ex.triples);
  EXPECT_EQ(tree_stats(tree).template_count, 29u);
}
