#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "krone/corpus.hpp"
#include "krone/hierarchy.hpp"
#include "oracles.hpp"

#ifndef KRONE_SOURCE_DIR
#error "KRONE_SOURCE_DIR must be defined"
#endif

namespace testing_support {

inline std::string data_path(const std::string& rel) { return std::string(KRONE_SOURCE_DIR) + "/data/" + rel; }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("krone-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream out(file(name), std::ios::binary);
    out << content;
    return file(name);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline krone::TemplateCatalog catalog(std::vector<krone::Template> templates) {
  return krone::TemplateCatalog(std::move(templates));
}

inline krone::LogSequence seq(std::string id, const std::string& events,
                              std::optional<krone::Label> label = krone::Label::Normal) {
  return {std::move(id), krone::util::split_ws(events), label};
}

/// T1 session/open/started, T2 session/open/succeeded, T3 block/write/started.
struct ThreeTemplates {
  krone::TemplateCatalog catalog = testing_support::catalog(
      {{"T1", "Open session started"}, {"T2", "Open session succeeded"}, {"T3", "Write block started"}});
  std::vector<krone::SemanticTriple> triples = {
      {"T1", "session", "open", "started"}, {"T2", "session", "open", "succeeded"}, {"T3", "block", "write", "started"}};
  krone::KroneTree tree = krone::build_tree(catalog, triples);
};

inline std::string three_templates_csv() {
  return "template_id,template_text\nT1,Open session started\nT2,Open session succeeded\nT3,Write block started\n";
}

inline std::string three_templates_fixture_csv() {
  return "template_id,entity,action,status\nT1,session,open,started\nT2,session,open,succeeded\nT3,block,write,started\n";
}

/// Catalog and tree for an oracle::RandomTree.
struct Built {
  krone::TemplateCatalog catalog;
  krone::KroneTree tree;
};

inline Built build(const oracle::RandomTree& rt) {
  std::vector<krone::Template> templates;
  std::vector<krone::SemanticTriple> triples;
  for (const auto& id : rt.ids) {
    templates.push_back({id, "template " + id});
    const auto& l = rt.labels.at(id);
    triples.push_back({id, l.entity, l.action, l.status});
  }
  krone::TemplateCatalog cat(std::move(templates));
  auto tree = krone::build_tree(cat, triples);
  return {std::move(cat), std::move(tree)};
}

}  // namespace testing_support
