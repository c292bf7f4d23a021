#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "krone/corpus.hpp"
#include "krone/error.hpp"
#include "krone/util.hpp"

namespace krone {

/// Canonical form of an entity/action/status token: lowercase ASCII, runs
/// of whitespace or punctuation collapsed to one '_', no leading/trailing
/// '_'. Bytes >= 0x80 pass through unchanged. Idempotent.
inline std::string normalize_token(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_sep = false;
  for (unsigned char c : raw) {
    const bool keep = std::isalnum(c) || c == '-' || c == '.' || c >= 0x80;
    if (!keep) {
      pending_sep = true;
      continue;
    }
    if (pending_sep && !out.empty()) out += '_';
    pending_sep = false;
    out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
  }
  return out;
}

struct SemanticTriple {
  TemplateId template_id;
  std::string entity;
  std::string action;
  std::string status;

  SemanticTriple normalized() const {
    return {template_id, normalize_token(entity), normalize_token(action), normalize_token(status)};
  }
  bool complete() const { return !entity.empty() && !action.empty() && !status.empty(); }
  friend bool operator==(const SemanticTriple&, const SemanticTriple&) = default;
};

enum class NodeLevel { Root, Entity, Action, Status };

constexpr std::string_view to_string(NodeLevel l) noexcept {
  switch (l) {
    case NodeLevel::Root: return "root";
    case NodeLevel::Entity: return "entity";
    case NodeLevel::Action: return "action";
    case NodeLevel::Status: return "status";
  }
  return "?";
}

struct NodeId {
  std::uint32_t value = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct TreeNode {
  NodeId id;
  NodeLevel level = NodeLevel::Root;
  std::string label;
  NodeId parent;  // root is its own parent
  std::vector<NodeId> children;
  std::optional<TemplateId> template_id;  // status leaves only
  std::string template_text;              // status leaves only
};

struct LeafPath {
  NodeId entity;
  NodeId action;
  NodeId status;
  friend bool operator==(const LeafPath&, const LeafPath&) = default;
};

struct TreeStats {
  std::size_t entity_count = 0;
  std::size_t action_count = 0;
  std::size_t status_count = 0;
  std::size_t template_count = 0;
  // index 0: root->entities, 1: entity->actions, 2: action->statuses
  std::array<std::size_t, 3> max_branching{};
  std::array<double, 3> mean_branching{};
};

inline constexpr std::string_view kRootLabel = "root";

/// Four-level hierarchy root -> entity -> action -> status. Every status
/// leaf is bound to exactly one template. Built only through build_tree().
class KroneTree {
 public:
  const TreeNode& root() const { return nodes_.front(); }
  const TreeNode& node(NodeId id) const {
    if (id.value >= nodes_.size()) throw Error(ErrorCode::UnknownNode, "#" + std::to_string(id.value));
    return nodes_[id.value];
  }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const std::string& label(NodeId id) const { return node(id).label; }

  /// Unique root-to-leaf path for a bound template.
  LeafPath lookup_leaf(std::string_view template_id) const {
    auto it = leaf_of_.find(std::string(template_id));
    if (it == leaf_of_.end()) throw Error(ErrorCode::UnboundTemplate, std::string(template_id));
    const NodeId status = it->second;
    const NodeId action = nodes_[status.value].parent;
    const NodeId entity = nodes_[action.value].parent;
    return {entity, action, status};
  }

  bool binds(std::string_view template_id) const { return leaf_of_.contains(std::string(template_id)); }

  /// Template id -> leaf node, natural id order.
  const std::map<TemplateId, NodeId, util::NaturalLess>& leaf_bindings() const noexcept { return leaf_of_; }

  /// Labels from the root down to `id`, inclusive ("root", "session", ...).
  std::vector<std::string> label_path(NodeId id) const {
    std::vector<std::string> out;
    NodeId cur = id;
    for (;;) {
      const auto& n = node(cur);
      out.push_back(n.label);
      if (n.level == NodeLevel::Root) break;
      cur = n.parent;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::optional<NodeId> child(NodeId parent, std::string_view label) const {
    for (NodeId c : node(parent).children) {
      if (nodes_[c.value].label == label) return c;
    }
    return std::nullopt;
  }

  /// Resolves "session/open", "root/session/open" or "root".
  std::optional<NodeId> find_by_path(std::string_view path) const {
    auto parts = util::split(path, '/');
    std::size_t i = 0;
    if (!parts.empty() && parts[0] == kRootLabel) i = 1;
    NodeId cur = root().id;
    for (; i < parts.size(); ++i) {
      if (parts[i].empty()) {
        if (parts.size() == 1) break;
        return std::nullopt;
      }
      auto next = child(cur, parts[i]);
      if (!next) return std::nullopt;
      cur = *next;
    }
    return cur;
  }

  std::vector<NodeId> templates_under(NodeId id) const {
    std::vector<NodeId> leaves;
    std::vector<NodeId> stack{id};
    while (!stack.empty()) {
      NodeId cur = stack.back();
      stack.pop_back();
      const auto& n = node(cur);
      if (n.level == NodeLevel::Status) leaves.push_back(cur);
      for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }
    return leaves;
  }

 private:
  friend KroneTree build_tree(const TemplateCatalog&, const std::vector<SemanticTriple>&);

  NodeId add(NodeLevel level, std::string label, NodeId parent) {
    NodeId id{static_cast<std::uint32_t>(nodes_.size())};
    nodes_.push_back({id, level, std::move(label), parent, {}, std::nullopt, {}});
    if (level != NodeLevel::Root) nodes_[parent.value].children.push_back(id);
    return id;
  }

  std::vector<TreeNode> nodes_;
  std::map<TemplateId, NodeId, util::NaturalLess> leaf_of_;
};

/// Assembles the tree from one triple per catalog template. Nodes are
/// created in natural template-id order, so the result depends only on the
/// inputs. Templates whose normalized triples coincide become sibling leaves
/// "<status>#1", "<status>#2", ... in template-id order.
inline KroneTree build_tree(const TemplateCatalog& catalog, const std::vector<SemanticTriple>& triples) {
  if (catalog.empty()) throw Error(ErrorCode::InvalidArgument, "empty catalog");

  std::map<TemplateId, SemanticTriple, util::NaturalLess> by_id;
  for (const auto& t : triples) {
    if (!catalog.contains(t.template_id)) throw Error(ErrorCode::UnknownTemplateId, t.template_id);
    auto norm = t.normalized();
    if (!norm.complete()) throw Error(ErrorCode::ExtractionInvalid, t.template_id + ": empty field after normalization");
    if (!by_id.emplace(t.template_id, std::move(norm)).second) throw Error(ErrorCode::DuplicateTriple, t.template_id);
  }
  for (const auto& tpl : catalog.templates()) {
    if (!by_id.contains(tpl.id)) throw Error(ErrorCode::MissingTriple, tpl.id);
  }

  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::size_t> group_size;
  for (const auto& [id, t] : by_id) ++group_size[{t.entity, t.action, t.status}];
  std::map<Key, std::size_t> group_seen;

  KroneTree tree;
  tree.add(NodeLevel::Root, std::string(kRootLabel), NodeId{0});
  const NodeId root = tree.root().id;
  for (const auto& [id, t] : by_id) {
    const auto entity = tree.child(root, t.entity);
    const NodeId e = entity ? *entity : tree.add(NodeLevel::Entity, t.entity, root);
    const auto action = tree.child(e, t.action);
    const NodeId a = action ? *action : tree.add(NodeLevel::Action, t.action, e);

    const Key key{t.entity, t.action, t.status};
    std::string leaf_label = t.status;
    if (group_size[key] > 1) leaf_label += "#" + std::to_string(++group_seen[key]);
    const NodeId s = tree.add(NodeLevel::Status, std::move(leaf_label), a);
    tree.nodes_[s.value].template_id = id;
    tree.nodes_[s.value].template_text = catalog.text(id);
    tree.leaf_of_.emplace(id, s);
  }
  return tree;
}

inline TreeStats tree_stats(const KroneTree& tree) {
  TreeStats st;
  std::array<std::size_t, 3> parents{};
  std::array<std::size_t, 3> edges{};
  for (const auto& n : tree.nodes()) {
    int idx = -1;
    switch (n.level) {
      case NodeLevel::Root: idx = 0; break;
      case NodeLevel::Entity: ++st.entity_count; idx = 1; break;
      case NodeLevel::Action: ++st.action_count; idx = 2; break;
      case NodeLevel::Status: ++st.status_count; break;
    }
    if (idx >= 0) {
      ++parents[idx];
      edges[idx] += n.children.size();
      st.max_branching[idx] = std::max(st.max_branching[idx], n.children.size());
    }
  }
  st.template_count = tree.leaf_bindings().size();
  for (std::size_t i = 0; i < 3; ++i) {
    st.mean_branching[i] = parents[i] ? static_cast<double>(edges[i]) / static_cast<double>(parents[i]) : 0.0;
  }
  return st;
}

}  // namespace krone
