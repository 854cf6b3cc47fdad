#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

namespace topoloc {

/// Planar pose: position in meters, yaw in degrees normalized to (-180, 180].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double theta_deg);

  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Wraps an angle in degrees into (-180, 180].
double normalize_deg(double deg);
/// |a - b| wrapped onto [0, 180].
double angle_diff_deg(double a, double b);

/// ||p_a - p_b|| + omega_m * |theta_a - theta_b|, the yaw difference wrapped to [0, 180].
double pose_distance(const Pose2D& a, const Pose2D& b, double omega_m);

/// Dense index of a node within one map.
struct NodeId {
  std::size_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct MapNode {
  std::vector<double> descriptor;
  std::optional<Pose2D> pose;
};

struct Edge {
  NodeId source;
  NodeId target;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct MapConfig {
  double omega_m = 0.025;  // [m / deg]
  double alpha_th = 1.0;
  std::size_t m_stride = 7;

  /// Throws std::invalid_argument unless omega_m > 0, alpha_th > 0, m_stride >= 1.
  void validate() const;
  friend bool operator==(const MapConfig&, const MapConfig&) = default;
};

using AdjacencyList = std::vector<std::vector<std::size_t>>;

/// Directed topological map. Immutable once constructed; the constructor
/// enforces: valid endpoints, no self-loops, no duplicate directed edges, one
/// descriptor dimension, and poses on all nodes or none.
class TopoMap {
 public:
  TopoMap() = default;
  TopoMap(std::vector<MapNode> nodes, std::vector<Edge> edges, MapConfig config = {});

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const MapNode& node(NodeId id) const;
  const std::vector<MapNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const MapConfig& config() const { return config_; }
  bool has_poses() const { return !nodes_.empty() && nodes_.front().pose.has_value(); }
  std::size_t descriptor_dim() const { return nodes_.empty() ? 0 : nodes_.front().descriptor.size(); }
  const Pose2D& pose(NodeId id) const;

  /// Undirected neighbor lists, each sorted ascending and excluding the node itself.
  const AdjacencyList& undirected() const { return *undirected_; }
  std::shared_ptr<const AdjacencyList> undirected_ptr() const { return undirected_; }
  /// Directed successor lists (edge source -> target), sorted ascending.
  const AdjacencyList& successors() const { return successors_; }
  bool has_edge(NodeId source, NodeId target) const;

  void check(NodeId id) const;

  friend bool operator==(const TopoMap& a, const TopoMap& b);

 private:
  std::vector<MapNode> nodes_;
  std::vector<Edge> edges_;
  MapConfig config_;
  std::shared_ptr<const AdjacencyList> undirected_ = std::make_shared<AdjacencyList>();
  AdjacencyList successors_;
};

struct PoseSample {
  std::vector<double> descriptor;
  Pose2D pose;
};

/// Sim-style map: threshold-based node creation with chain and loop-closure edges.
/// Throws std::invalid_argument for an empty trajectory.
TopoMap build_map_sim(const std::vector<PoseSample>& trajectory, const MapConfig& cfg);

/// Real-style map: one node per `m_stride` samples, chained, no poses.
TopoMap build_map_real(const std::vector<std::vector<double>>& sequence, std::size_t m_stride);

/// Node minimizing pose_distance to `query`; ties go to the smallest index.
/// Throws std::invalid_argument for a pose-less or empty map.
NodeId nearest_node(const TopoMap& map, const Pose2D& query, double omega_m);

/// Hop count treating edges as undirected; nullopt when unreachable.
std::optional<std::size_t> edge_distance(const TopoMap& map, NodeId a, NodeId b);

/// All-pairs undirected hop distances (breadth first from every node);
/// unreachable pairs hold kUnreachable.
inline constexpr std::size_t kUnreachable = static_cast<std::size_t>(-1);
std::vector<std::vector<std::size_t>> all_edge_distances(const TopoMap& map);

std::vector<NodeId> neighbors(const TopoMap& map, NodeId id);

// JSON persistence: {nodes: [{descriptor, pose: {x,y,theta}|null}], edges: [[s,t]], config}.
nlohmann::json map_to_json(const TopoMap& map);
TopoMap map_from_json(const nlohmann::json& j);
void save_map(const std::filesystem::path& path, const TopoMap& map);
TopoMap load_map(const std::filesystem::path& path);

nlohmann::json pose_to_json(const Pose2D& p);
Pose2D pose_from_json(const nlohmann::json& j);

}  // namespace topoloc
