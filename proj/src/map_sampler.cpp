#include "topoloc/map_sampler.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <string>

namespace topoloc {

NodeId SubmapResult::to_sub(NodeId original) const {
  if (original.index >= original_to_sub.size() || !original_to_sub[original.index])
    throw std::out_of_range("node " + std::to_string(original.index) + " is not in the submap");
  return *original_to_sub[original.index];
}

SubmapResult sample_submap(const TopoMap& map, const std::vector<NodeId>& targets, std::size_t n_prime,
                           std::uint64_t seed) {
  std::set<std::size_t> unique;
  for (NodeId t : targets) {
    if (t.index >= map.size())
      throw std::invalid_argument("sample_submap: target node " + std::to_string(t.index) + " not in map");
    unique.insert(t.index);
  }
  if (n_prime < unique.size())
    throw std::invalid_argument("sample_submap: n_prime " + std::to_string(n_prime) + " < " +
                                std::to_string(unique.size()) + " distinct targets");

  const auto& adj = map.undirected();
  std::vector<bool> included(map.size(), false);
  std::vector<NodeId> order;
  // The frontier is kept sorted so the uniform draw is reproducible from the seed.
  std::set<std::size_t> frontier;
  auto include = [&](std::size_t v) {
    included[v] = true;
    order.push_back(NodeId{v});
    frontier.erase(v);
    for (std::size_t u : adj[v])
      if (!included[u]) frontier.insert(u);
  };
  for (std::size_t v : unique) include(v);

  std::mt19937_64 rng(seed);
  while (order.size() < n_prime && !frontier.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size() - 1);
    auto it = frontier.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(pick(rng)));
    include(*it);
  }

  SubmapResult result;
  result.insertion_order = order;
  result.original_to_sub.assign(map.size(), std::nullopt);
  std::vector<MapNode> nodes;
  for (std::size_t v = 0; v < map.size(); ++v) {
    if (!included[v]) continue;
    result.original_to_sub[v] = NodeId{nodes.size()};
    result.sub_to_original.push_back(NodeId{v});
    nodes.push_back(map.nodes()[v]);
  }
  std::vector<Edge> edges;
  for (const Edge& e : map.edges()) {
    if (included[e.source.index] && included[e.target.index])
      edges.push_back({*result.original_to_sub[e.source.index], *result.original_to_sub[e.target.index]});
  }
  result.submap = TopoMap(std::move(nodes), std::move(edges), map.config());
  return result;
}

}  // namespace topoloc
