#pragma once

// Prefix-closure trie over token byte strings, and the per-context mass map
// used by the character proposal: a token's end-of-token marker carries
// p(token | context), every node carries the total mass of the tokens below
// it, and EOS is a marker on the root.

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "smcgen/lm.hpp"

namespace smcgen {

class TrieError : public Error {
 public:
  using Error::Error;
};

class TokenTrie {
 public:
  using NodeId = std::uint32_t;
  static constexpr NodeId kRoot = 0;

  struct Node {
    std::uint8_t byte = 0;          // label of the incoming edge (unused at the root)
    NodeId parent = 0;
    std::uint32_t depth = 0;
    TokenId token = kNoToken;       // end-of-token marker, or EOS at the root
    NodeId first_child = 0;         // children are contiguous, sorted by byte
    std::uint32_t child_count = 0;
  };

  /// Throws TrieError if two token ids share a byte string.
  explicit TokenTrie(const Vocabulary& vocab);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId n) const { return nodes_[n]; }
  std::optional<NodeId> child(NodeId n, std::uint8_t byte) const;
  std::optional<NodeId> find(std::string_view bytes) const;
  NodeId token_node(TokenId t) const { return token_node_.at(static_cast<std::size_t>(t)); }
  std::string path(NodeId n) const;
  TokenId eos() const { return eos_; }
  std::size_t vocab_size() const { return token_node_.size(); }

 private:
  std::vector<Node> nodes_;  // breadth-first: parents precede children
  std::vector<NodeId> token_node_;
  TokenId eos_;
};

/// Mass of every trie node and of every end-of-token marker for one context.
struct MassMap {
  std::vector<double> node;    // mass(ρ)
  std::vector<double> marker;  // mass(ρ·eot); at the root, p(eos | context)
};

MassMap compute_mass(const TokenTrie& trie, const TokenDistribution& dist);

/// Debug dump of the trie, optionally annotated with masses.
nlohmann::json trie_to_json(const TokenTrie& trie, const Vocabulary& vocab, const MassMap* mass = nullptr);

}  // namespace smcgen
