#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "topoloc/topo_graph.hpp"

namespace topoloc {

struct SubmapResult {
  TopoMap submap;
  /// original_to_sub[i] is node i's id in the submap, if it was included.
  std::vector<std::optional<NodeId>> original_to_sub;
  /// sub_to_original[k] is the original id of submap node k.
  std::vector<NodeId> sub_to_original;
  /// Original ids in the order they were added (targets first, then growth).
  std::vector<NodeId> insertion_order;

  NodeId to_sub(NodeId original) const;
};

/// Bounded partial map containing every node of `targets`. Starting from the
/// target nodes, repeatedly adds a uniformly chosen node that is adjacent
/// (undirected) to the current submap, until `n_prime` nodes are included or
/// the connected closure of the targets is exhausted. Submap nodes keep their
/// original relative order; edges are all original edges between included nodes.
///
/// Throws std::invalid_argument if a target is not in `map` or
/// n_prime < number of distinct targets.
SubmapResult sample_submap(const TopoMap& map, const std::vector<NodeId>& targets, std::size_t n_prime,
                           std::uint64_t seed);

}  // namespace topoloc
