#include "smcgen/trie.hpp"

#include <algorithm>
#include <map>

namespace smcgen {

TokenTrie::TokenTrie(const Vocabulary& vocab) : token_node_(vocab.size(), kRoot), eos_(vocab.eos()) {
  // Build a pointer trie first, then lay it out breadth-first.
  struct Proto {
    std::map<std::uint8_t, std::size_t> children;
    TokenId token = kNoToken;
  };
  std::vector<Proto> proto(1);
  proto[0].token = vocab.eos();
  for (std::size_t t = 0; t < vocab.size(); ++t) {
    const auto id = static_cast<TokenId>(t);
    if (id == vocab.eos()) continue;
    std::size_t cur = 0;
    for (unsigned char c : vocab.token_bytes(id)) {
      auto it = proto[cur].children.find(c);
      if (it == proto[cur].children.end()) {
        proto.emplace_back();
        it = proto[cur].children.emplace(c, proto.size() - 1).first;
      }
      cur = it->second;
    }
    if (proto[cur].token != kNoToken)
      throw TrieError("tokens " + std::to_string(proto[cur].token) + " and " + std::to_string(id) +
                      " decode to the same bytes");
    proto[cur].token = id;
  }

  nodes_.reserve(proto.size());
  std::vector<std::size_t> order{0};
  nodes_.push_back(Node{0, 0, 0, proto[0].token, 0, 0});
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Proto& p = proto[order[i]];
    nodes_[i].first_child = static_cast<NodeId>(nodes_.size());
    nodes_[i].child_count = static_cast<std::uint32_t>(p.children.size());
    for (const auto& [byte, idx] : p.children) {
      Node n;
      n.byte = byte;
      n.parent = static_cast<NodeId>(i);
      n.depth = nodes_[i].depth + 1;
      n.token = proto[idx].token;
      nodes_.push_back(n);
      order.push_back(idx);
    }
  }
  for (NodeId n = 0; n < nodes_.size(); ++n)
    if (nodes_[n].token != kNoToken) token_node_[static_cast<std::size_t>(nodes_[n].token)] = n;
}

std::optional<TokenTrie::NodeId> TokenTrie::child(NodeId n, std::uint8_t byte) const {
  const Node& p = nodes_[n];
  const auto begin = nodes_.begin() + p.first_child;
  const auto end = begin + p.child_count;
  auto it = std::lower_bound(begin, end, byte, [](const Node& c, std::uint8_t b) { return c.byte < b; });
  if (it == end || it->byte != byte) return std::nullopt;
  return static_cast<NodeId>(it - nodes_.begin());
}

std::optional<TokenTrie::NodeId> TokenTrie::find(std::string_view bytes) const {
  NodeId cur = kRoot;
  for (unsigned char c : bytes) {
    auto next = child(cur, c);
    if (!next) return std::nullopt;
    cur = *next;
  }
  return cur;
}

std::string TokenTrie::path(NodeId n) const {
  std::string out;
  while (n != kRoot) {
    out.push_back(static_cast<char>(nodes_[n].byte));
    n = nodes_[n].parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

MassMap compute_mass(const TokenTrie& trie, const TokenDistribution& dist) {
  if (dist.size() != trie.vocab_size()) throw TrieError("compute_mass: distribution size mismatch");
  MassMap m;
  m.node.assign(trie.size(), 0.0);
  m.marker.assign(trie.size(), 0.0);
  for (TokenTrie::NodeId n = 0; n < trie.size(); ++n) {
    const TokenId t = trie.node(n).token;
    if (t != kNoToken) m.marker[n] = dist.prob(t);
  }
  // Children follow their parents, so a reverse sweep sees every subtree
  // total before it is added to the parent.
  for (auto n = static_cast<std::int64_t>(trie.size()) - 1; n >= 0; --n) {
    const auto id = static_cast<TokenTrie::NodeId>(n);
    m.node[id] += m.marker[id];
    if (id != TokenTrie::kRoot) m.node[trie.node(id).parent] += m.node[id];
  }
  return m;
}

nlohmann::json trie_to_json(const TokenTrie& trie, const Vocabulary& vocab, const MassMap* mass) {
  (void)vocab;
  auto nodes = nlohmann::json::array();
  for (TokenTrie::NodeId n = 0; n < trie.size(); ++n) {
    const auto& node = trie.node(n);
    nlohmann::json j{{"id", n}, {"path", escape_bytes(trie.path(n))}, {"depth", node.depth}};
    if (n != TokenTrie::kRoot) j["parent"] = node.parent;
    if (node.token != kNoToken) j["token"] = node.token;
    if (mass) {
      j["mass"] = mass->node[n];
      if (node.token != kNoToken) j["marker_mass"] = mass->marker[n];
    }
    nodes.push_back(std::move(j));
  }
  return {{"eos_id", trie.eos()}, {"nodes", nodes}};
}

}  // namespace smcgen
