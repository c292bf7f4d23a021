#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "hdfs_simulator.hpp"
#include "krone/hdfs.hpp"
#include "support/testing.hpp"

using namespace krone;

namespace {

const char* kTable = "EventId,EventTemplate\nE5,Receiving block [*]\nE22,allocateBlock [*]\nE11,PacketResponder [*]\n";

hdfs::Dataset run(const std::string& traces, const std::string& labels, hdfs::ConvertOptions opts = {}) {
  std::istringstream t(kTable), tr(traces), lb(labels);
  return hdfs::convert(t, tr, lb, opts);
}

}  // namespace

TEST(HdfsConvert, BracketListsAndSplitByNormalQuota) {
  auto ds = run(
      "BlockId,Label,Features\n"
      "blk_1,Success,\"[E22,E5,E5]\"\n"
      "blk_2,Fail,\"[E5,E11]\"\n"
      "blk_3,Success,\"[E5,E22,E11]\"\n"
      "blk_4,Success,\"[E11]\"\n",
      "BlockId,Label\nblk_1,Normal\nblk_2,Anomaly\nblk_3,Normal\nblk_4,Normal\nblk_9,Normal\n",
      {0.5, std::nullopt});
  EXPECT_EQ(ds.catalog.size(), 3u);
  // ceil(0.5 * 3) = 2 normal blocks for training, in file order
  ASSERT_EQ(ds.train.size(), 2u);
  EXPECT_EQ(ds.train.sequences[0].id, "blk_1");
  EXPECT_EQ(ds.train.sequences[1].id, "blk_3");
  ASSERT_EQ(ds.test.size(), 2u);
  EXPECT_EQ(ds.test.sequences[0].id, "blk_2");
  EXPECT_EQ(ds.test.sequences[0].label, Label::Anomaly);
  EXPECT_EQ(ds.train.sequences[0].events, (std::vector<TemplateId>{"E22", "E5", "E5"}));
  EXPECT_EQ(ds.report.unused_labels, 1u);
  EXPECT_EQ(ds.report.normal, 3u);
  EXPECT_EQ(ds.report.anomaly, 1u);
}

TEST(HdfsConvert, SpaceSeparatedEventSequenceColumn) {
  auto ds = run("BlockId,EventSequence\nblk_1,E5 E5 E22\n", "BlockId,Label\nblk_1,Normal\n", {0.0, std::nullopt});
  ASSERT_EQ(ds.test.size(), 1u);
  EXPECT_EQ(ds.test.sequences[0].events.size(), 3u);
}

TEST(HdfsConvert, Errors) {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code([] { run("BlockId,Features\nblk_1,[E77]\n", "BlockId,Label\nblk_1,Normal\n"); }),
            ErrorCode::UnknownTemplateId);
  EXPECT_EQ(code([] { run("BlockId,Features\nblk_1,[E5]\n", "BlockId,Label\n"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code([] { run("Nope\nx\n", "BlockId,Label\n"); }), ErrorCode::MalformedRecord);
  EXPECT_EQ(code([] { run("BlockId,Features\n", "BlockId,Label\n", {1.5, std::nullopt}); }),
            ErrorCode::InvalidArgument);
}

TEST(HdfsConvert, MaxBlocksKeepsTheFirstRows) {
  auto ds = run("BlockId,Features\nb1,[E5]\nb2,[E5]\nb3,[E5]\n", "BlockId,Label\nb1,Normal\nb2,Normal\nb3,Normal\n",
                {0.0, 2});
  EXPECT_EQ(ds.report.blocks, 2u);
}

TEST(HdfsConvert, SimulatedSubsetLabelsMatchLabelFileRowForRow) {
  testing_support::TempDir dir;
  sim::Simulator s({2000, 0.05, 11});
  sim::write_layout(dir.path().string(), s.generate());

  // independent reading of the label file: split each line at the comma
  std::vector<std::pair<std::string, std::string>> expected;
  {
    std::ifstream in(dir.file("anomaly_label.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      expected.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    }
  }
  std::ifstream t(dir.file("HDFS.log_templates.csv")), tr(dir.file("Event_traces.csv")),
      lb(dir.file("anomaly_label.csv"));
  auto ds = hdfs::convert(t, tr, lb, {0.0, std::nullopt});
  ASSERT_EQ(ds.test.size(), 2000u);
  ASSERT_EQ(expected.size(), 2000u);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(ds.test.sequences[i].id, expected[i].first);
    EXPECT_EQ(std::string(to_string(*ds.test.sequences[i].label)), expected[i].second);
  }
}

TEST(HdfsSimulator, DeterministicForASeed) {
  sim::Simulator a({300, 0.1, 5}), b({300, 0.1, 5});
  auto x = a.generate();
  auto y = b.generate();
  ASSERT_EQ(x.size(), y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].id, y[i].id);
    EXPECT_EQ(x[i].events, y[i].events);
  }
}

TEST(HdfsSimulator, BundledFixtureCoversEveryTemplate) {
  auto fixture = testing_support::slurp(testing_support::data_path("hdfs/fixture.csv"));
  for (const auto& [id, text] : sim::hdfs_templates()) {
    EXPECT_NE(fixture.find("\n" + id + ","), std::string::npos) << id;
  }
}
