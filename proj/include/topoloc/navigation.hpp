#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "topoloc/evaluation.hpp"
#include "topoloc/simworld.hpp"
#include "topoloc/topo_graph.hpp"

namespace topoloc {

/// Minimum-hop directed path start..goal. Among equal-length paths the one
/// whose node sequence is lexicographically smallest wins.
/// Throws std::invalid_argument when goal is unreachable.
std::vector<NodeId> plan_dijkstra(const TopoMap& map, NodeId start, NodeId goal);

/// Node after the plan entry closest to `current` (undirected hops; ties go to
/// the later entry). Returns the goal when that entry is the last one.
/// Throws std::invalid_argument on an empty plan.
NodeId next_subgoal(const TopoMap& map, const std::vector<NodeId>& plan, NodeId current);

struct ControlGains {
  double k_lin = 0.8;           // fraction of the remaining distance per step
  double k_ang = 0.6;           // fraction of the heading error per step
  double v_max = 0.25;          // m per step
  double w_max = 35.0;          // deg per step
  double robot_radius = 0.2;
  double contact_resolution = 0.01;  // m
  friend bool operator==(const ControlGains&, const ControlGains&) = default;
};

struct ControlResult {
  Pose2D pose;
  bool collided = false;
};

/// One servo step toward `subgoal`: turn by a capped fraction of the heading
/// error, then drive forward scaled by cos(remaining error). A step that would
/// leave free space stops at the last free point along the segment.
ControlResult control_step(const World& world, const Pose2D& pose, const Pose2D& subgoal, const ControlGains& gains);

struct NavConfig {
  std::size_t time_limit_steps = 400;
  ControlGains gains;
  double arrival_radius = 0.5;   // goal test, position only
  double coverage_radius = 0.5;
  std::size_t replan_period = 1;  // steps between plan updates
  double omega_m = 0.025;

  void validate() const;
  friend bool operator==(const NavConfig&, const NavConfig&) = default;
};

nlohmann::json nav_config_to_json(const NavConfig& c);
NavConfig nav_config_from_json(const nlohmann::json& j);

enum class TrialStatus { success, collision, timeout };
const char* to_string(TrialStatus s);

struct TrialStep {
  Pose2D pose;
  NodeId localized;
  NodeId subgoal;
};

struct TrialOutcome {
  TrialStatus status = TrialStatus::timeout;
  std::vector<Pose2D> visited;  // includes the start pose
  std::vector<TrialStep> log;
  double coverage = 0.0;
  std::size_t steps = 0;
};

/// Closed loop: render -> localize -> plan -> servo. `nominal` is the desired
/// trajectory; coverage is the fraction of its poses the robot passed within
/// coverage_radius. Failures are outcomes, never exceptions.
TrialOutcome run_trial(const World& world, const TopoMap& map, Localizer& localizer, const ObservationModel& obs_model,
                       Domain domain, const Pose2D& start, NodeId goal, const std::vector<Pose2D>& nominal,
                       const NavConfig& cfg, std::uint64_t seed);

struct NavMetrics {
  double sr = 0.0, cr = 0.0, tr = 0.0, covr = 0.0;
  std::size_t trials = 0;
};

/// Throws std::invalid_argument on an empty list.
NavMetrics nav_metrics(const std::vector<TrialOutcome>& outcomes);

nlohmann::json trial_log_to_json(const TrialOutcome& outcome);

struct NavReportRow {
  std::string method;
  NavMetrics metrics;
};

/// Columns: method,SR,CR,TR,CovR,trials.
void write_nav_csv(std::ostream& os, const std::vector<NavReportRow>& rows);

}  // namespace topoloc
