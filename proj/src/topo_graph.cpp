#include "topoloc/topo_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

namespace topoloc {

double normalize_deg(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

double angle_diff_deg(double a, double b) { return std::abs(normalize_deg(a - b)); }

Pose2D::Pose2D(double x_, double y_, double theta_deg) : x(x_), y(y_), theta(normalize_deg(theta_deg)) {}

double pose_distance(const Pose2D& a, const Pose2D& b, double omega_m) {
  return std::hypot(a.x - b.x, a.y - b.y) + omega_m * angle_diff_deg(a.theta, b.theta);
}

void MapConfig::validate() const {
  if (!(omega_m > 0.0)) throw std::invalid_argument("MapConfig: omega_m must be > 0");
  if (!(alpha_th > 0.0)) throw std::invalid_argument("MapConfig: alpha_th must be > 0");
  if (m_stride < 1) throw std::invalid_argument("MapConfig: m_stride must be >= 1");
}

TopoMap::TopoMap(std::vector<MapNode> nodes, std::vector<Edge> edges, MapConfig config)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), config_(config) {
  const std::size_t n = nodes_.size();
  if (n > 0) {
    const std::size_t d = nodes_.front().descriptor.size();
    const bool posed = nodes_.front().pose.has_value();
    for (std::size_t i = 0; i < n; ++i) {
      if (nodes_[i].descriptor.size() != d)
        throw std::invalid_argument("TopoMap: node " + std::to_string(i) + " descriptor dimension " +
                                    std::to_string(nodes_[i].descriptor.size()) + " != " + std::to_string(d));
      if (nodes_[i].pose.has_value() != posed)
        throw std::invalid_argument("TopoMap: poses must be present on all nodes or none");
    }
  }
  auto adj = std::make_shared<AdjacencyList>(n);
  successors_.assign(n, {});
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Edge& e : edges_) {
    const std::size_t s = e.source.index, t = e.target.index;
    if (s >= n || t >= n)
      throw std::invalid_argument("TopoMap: edge (" + std::to_string(s) + "," + std::to_string(t) +
                                  ") references a missing node");
    if (s == t) throw std::invalid_argument("TopoMap: self-loop on node " + std::to_string(s));
    if (!seen.emplace(s, t).second)
      throw std::invalid_argument("TopoMap: duplicate edge (" + std::to_string(s) + "," + std::to_string(t) + ")");
    successors_[s].push_back(t);
    (*adj)[s].push_back(t);
    (*adj)[t].push_back(s);
  }
  for (auto& l : *adj) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
  for (auto& l : successors_) std::sort(l.begin(), l.end());
  undirected_ = std::move(adj);
}

void TopoMap::check(NodeId id) const {
  if (id.index >= nodes_.size())
    throw std::out_of_range("node " + std::to_string(id.index) + " not in map of " +
                            std::to_string(nodes_.size()) + " nodes");
}

const MapNode& TopoMap::node(NodeId id) const {
  check(id);
  return nodes_[id.index];
}

const Pose2D& TopoMap::pose(NodeId id) const {
  const MapNode& n = node(id);
  if (!n.pose) throw std::invalid_argument("map has no poses");
  return *n.pose;
}

bool TopoMap::has_edge(NodeId source, NodeId target) const {
  check(source);
  check(target);
  const auto& s = successors_[source.index];
  return std::binary_search(s.begin(), s.end(), target.index);
}

bool operator==(const TopoMap& a, const TopoMap& b) {
  if (a.size() != b.size() || !(a.edges_ == b.edges_) || !(a.config_ == b.config_)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.nodes_[i].descriptor != b.nodes_[i].descriptor || a.nodes_[i].pose != b.nodes_[i].pose) return false;
  }
  return true;
}

TopoMap build_map_sim(const std::vector<PoseSample>& trajectory, const MapConfig& cfg) {
  cfg.validate();
  if (trajectory.empty()) throw std::invalid_argument("build_map_sim: empty trajectory");
  std::vector<MapNode> nodes{{trajectory.front().descriptor, trajectory.front().pose}};
  std::vector<Edge> edges;
  for (std::size_t s = 1; s < trajectory.size(); ++s) {
    const PoseSample& sample = trajectory[s];
    if (pose_distance(sample.pose, *nodes.back().pose, cfg.omega_m) <= cfg.alpha_th) continue;
    const std::size_t i = nodes.size();
    nodes.push_back({sample.descriptor, sample.pose});
    edges.push_back({NodeId{i - 1}, NodeId{i}});
    // Loop closure: connect the new node back to earlier nodes it revisits.
    for (std::size_t j = 0; j + 2 <= i; ++j) {
      if (pose_distance(sample.pose, *nodes[j].pose, cfg.omega_m) <= cfg.alpha_th)
        edges.push_back({NodeId{i}, NodeId{j}});
    }
  }
  return TopoMap(std::move(nodes), std::move(edges), cfg);
}

TopoMap build_map_real(const std::vector<std::vector<double>>& sequence, std::size_t m_stride) {
  if (sequence.empty()) throw std::invalid_argument("build_map_real: empty sequence");
  if (m_stride < 1) throw std::invalid_argument("build_map_real: m_stride must be >= 1");
  std::vector<MapNode> nodes;
  std::vector<Edge> edges;
  for (std::size_t s = 0; s < sequence.size(); s += m_stride) {
    nodes.push_back({sequence[s], std::nullopt});
    if (nodes.size() > 1) edges.push_back({NodeId{nodes.size() - 2}, NodeId{nodes.size() - 1}});
  }
  MapConfig cfg;
  cfg.m_stride = m_stride;
  return TopoMap(std::move(nodes), std::move(edges), cfg);
}

NodeId nearest_node(const TopoMap& map, const Pose2D& query, double omega_m) {
  if (map.empty()) throw std::invalid_argument("nearest_node: empty map");
  if (!map.has_poses()) throw std::invalid_argument("nearest_node: map has no poses");
  std::size_t best = 0;
  double best_d = pose_distance(query, *map.nodes()[0].pose, omega_m);
  for (std::size_t i = 1; i < map.size(); ++i) {
    const double d = pose_distance(query, *map.nodes()[i].pose, omega_m);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return NodeId{best};
}

namespace {

std::vector<std::size_t> bfs_from(const AdjacencyList& adj, std::size_t src) {
  std::vector<std::size_t> dist(adj.size(), kUnreachable);
  std::deque<std::size_t> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop_front();
    for (std::size_t v : adj[u]) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace

std::optional<std::size_t> edge_distance(const TopoMap& map, NodeId a, NodeId b) {
  map.check(a);
  map.check(b);
  const std::size_t d = bfs_from(map.undirected(), a.index)[b.index];
  if (d == kUnreachable) return std::nullopt;
  return d;
}

std::vector<std::vector<std::size_t>> all_edge_distances(const TopoMap& map) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out.push_back(bfs_from(map.undirected(), i));
  return out;
}

std::vector<NodeId> neighbors(const TopoMap& map, NodeId id) {
  map.check(id);
  std::vector<NodeId> out;
  for (std::size_t j : map.undirected()[id.index]) out.push_back(NodeId{j});
  return out;
}

nlohmann::json pose_to_json(const Pose2D& p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

Pose2D pose_from_json(const nlohmann::json& j) {
  Pose2D p;
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.theta = j.at("theta").get<double>();
  return p;
}

nlohmann::json map_to_json(const TopoMap& map) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : map.nodes()) {
    nodes.push_back({{"descriptor", n.descriptor},
                     {"pose", n.pose ? pose_to_json(*n.pose) : nlohmann::json(nullptr)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : map.edges()) edges.push_back({e.source.index, e.target.index});
  const auto& c = map.config();
  return {{"nodes", nodes},
          {"edges", edges},
          {"config", {{"omega_m", c.omega_m}, {"alpha_th", c.alpha_th}, {"m_stride", c.m_stride}}}};
}

TopoMap map_from_json(const nlohmann::json& j) {
  std::vector<MapNode> nodes;
  for (const auto& n : j.at("nodes")) {
    MapNode node;
    node.descriptor = n.at("descriptor").get<std::vector<double>>();
    if (n.contains("pose") && !n.at("pose").is_null()) node.pose = pose_from_json(n.at("pose"));
    nodes.push_back(std::move(node));
  }
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("map json: edge must be [src, dst]");
    edges.push_back({NodeId{e[0].get<std::size_t>()}, NodeId{e[1].get<std::size_t>()}});
  }
  MapConfig cfg;
  if (j.contains("config")) {
    const auto& c = j.at("config");
    cfg.omega_m = c.at("omega_m").get<double>();
    cfg.alpha_th = c.at("alpha_th").get<double>();
    cfg.m_stride = c.at("m_stride").get<std::size_t>();
  }
  return TopoMap(std::move(nodes), std::move(edges), cfg);
}

void save_map(const std::filesystem::path& path, const TopoMap& map) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write map " + path.string());
  os << map_to_json(map).dump(1) << '\n';
}

TopoMap load_map(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read map " + path.string());
  try {
    return map_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("invalid map file " + path.string() + ": " + e.what());
  }
}

}  // namespace topoloc
