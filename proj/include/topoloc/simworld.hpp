#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoloc/topo_graph.hpp"

namespace topoloc {

/// Axis-aligned rectangle, half-open in x and y: [x0, x1) x [y0, y1).
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

enum class SegmentKind { room, corridor };

struct SegmentSpec {
  SegmentKind kind = SegmentKind::room;
  Rect area;
  friend bool operator==(const SegmentSpec&, const SegmentSpec&) = default;
};

/// Layout of free-space segments visited in order. The first `repetition_count`
/// corridors share one appearance (identical landmarks in segment-local
/// coordinates); every other segment looks unique.
struct WorldSpec {
  std::vector<SegmentSpec> layout;
  std::size_t repetition_count = 1;
  std::vector<Rect> obstacles;
  std::size_t feature_dim = 16;
  /// Trailing feature dimensions that carry no landmark signal (pure clutter).
  std::size_t clutter_dims = 0;
  double landmark_spacing = 1.5;  // meters of wall per landmark
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on an empty or disconnected layout, a
  /// repetition count the layout cannot honour, or mismatched repeated segment sizes.
  void validate() const;
  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

struct Landmark {
  double x = 0.0;  // segment-local
  double y = 0.0;
  std::vector<double> feature;
};

struct Segment {
  SegmentSpec spec;
  std::size_t appearance = 0;
  std::vector<Landmark> landmarks;
};

struct World {
  WorldSpec spec;
  std::vector<Segment> segments;

  /// Index of the segment containing (x, y), if any.
  std::optional<std::size_t> segment_at(double x, double y) const;
  /// True when a disc of `radius` around (x, y) lies in free space and clear of obstacles.
  bool is_free(double x, double y, double radius) const;
  /// Nominal path: polyline through the layout centre line, first to last segment.
  std::vector<std::pair<double, double>> nominal_waypoints() const;
  double nominal_length() const;
};

/// Deterministic world for `spec.seed`.
World generate_world(const WorldSpec& spec);

/// Three identical corridors joined by distinct rooms (about 60 m end to end).
WorldSpec benchmark_world_spec(std::uint64_t seed = 7, std::size_t feature_dim = 16, std::size_t clutter_dims = 4);

enum class Domain { sim, real_like };
const char* to_string(Domain d);
Domain domain_from_string(const std::string& s);

/// Observation model: range/bearing weighted landmark sums plus noise. The
/// real_like domain applies `scale * d + bias` per dimension and extra noise.
struct ObservationModel {
  std::size_t d_obs = 16;
  double noise_sigma = 0.05;
  double clutter_sigma = 0.5;
  double view_range = 2.5;  // Gaussian range falloff [m]
  std::vector<double> shift_scale;
  std::vector<double> shift_bias;
  double shift_noise = 0.05;

  /// Builds a model whose domain shift is drawn from `shift_seed` with the given strength.
  static ObservationModel make(std::size_t d_obs, double noise_sigma, double clutter_sigma, double shift_strength,
                               std::uint64_t shift_seed);
  void validate() const;
};

/// Descriptor at `pose`. Throws std::invalid_argument when the pose is outside the world.
/// `noise_seed` drives the noise; identical seeds give identical descriptors.
std::vector<double> render_observation(const World& world, const Pose2D& pose, const ObservationModel& model,
                                       Domain domain, std::uint64_t noise_seed);

/// Noise-free sim-domain descriptor.
std::vector<double> render_clean(const World& world, const Pose2D& pose, const ObservationModel& model);

/// real_like transform of a clean descriptor (no noise).
std::vector<double> apply_domain_shift(const std::vector<double>& clean, const ObservationModel& model);

struct TrajectoryOptions {
  double start_s = 0.5;  // arc length along the nominal path [m]
  /// Arc length to stop at; nullopt runs to the end of the nominal path minus start_s.
  std::optional<double> goal_s;
  double step = 0.25;
  /// Bound on pose_distance(pose, nominal pose) using omega_m.
  double deviation = 0.0;
  /// Banded deviations stay within [0.6, 1.0] x deviation; otherwise they wobble in [-1, 1] x deviation.
  bool banded = false;
  double omega_m = 0.025;
  double robot_radius = 0.2;
};

/// Pose on the nominal path at arc length `s` (heading along the path).
Pose2D nominal_pose(const World& world, double s);

/// Waypoint-following trajectory with smooth lateral and heading perturbations.
/// Throws std::invalid_argument if the goal lies beyond the nominal path or
/// the start is not in free space.
std::vector<Pose2D> generate_trajectory(const World& world, const TrajectoryOptions& opts, std::uint64_t seed);

/// Nominal pose at the same arc length as each trajectory sample.
std::vector<Pose2D> nominal_trajectory(const World& world, const TrajectoryOptions& opts);

/// True when every pose and every straight step between consecutive poses is collision-free.
bool trajectory_collision_free(const World& world, const std::vector<Pose2D>& poses, double radius);

enum class DeviationCategory { not_deviated, deviated_le_1, deviated_1_to_2, beyond_2 };
const char* to_string(DeviationCategory c);

/// Band of pose_distance(pose, nearest node). Distances at or below 1e-9 count as not deviated.
DeviationCategory classify_deviation(const Pose2D& pose, const TopoMap& map, double omega_m);

// Persistence.
nlohmann::json world_spec_to_json(const WorldSpec& spec);
WorldSpec world_spec_from_json(const nlohmann::json& j);
nlohmann::json observation_model_to_json(const ObservationModel& m);
ObservationModel observation_model_from_json(const nlohmann::json& j);
nlohmann::json trajectory_to_json(const std::vector<Pose2D>& poses);
std::vector<Pose2D> trajectory_from_json(const nlohmann::json& j);

}  // namespace topoloc
