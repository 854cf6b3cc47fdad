#include "topoloc/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <queue>
#include <stdexcept>

namespace topoloc {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<NodeId> plan_dijkstra(const TopoMap& map, NodeId start, NodeId goal) {
  map.check(start);
  map.check(goal);
  const std::size_t n = map.size();
  // Distances to the goal over reversed edges, then a greedy walk forward
  // picking the smallest successor on a shortest path.
  std::vector<std::vector<std::size_t>> preds(n);
  for (const Edge& e : map.edges()) preds[e.target.index].push_back(e.source.index);
  constexpr std::size_t inf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(n, inf);
  using Item = std::pair<std::size_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[goal.index] = 0;
  pq.push({0, goal.index});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d != dist[u]) continue;
    for (std::size_t v : preds[u])
      if (d + 1 < dist[v]) {
        dist[v] = d + 1;
        pq.push({d + 1, v});
      }
  }
  if (dist[start.index] == inf)
    throw std::invalid_argument("plan_dijkstra: node " + std::to_string(goal.index) + " unreachable from node " +
                                std::to_string(start.index));
  std::vector<NodeId> path{start};
  std::size_t u = start.index;
  while (u != goal.index) {
    std::size_t next = inf;
    for (std::size_t v : map.successors()[u])
      if (dist[v] + 1 == dist[u]) next = std::min(next, v);
    u = next;
    path.push_back(NodeId{u});
  }
  return path;
}

NodeId next_subgoal(const TopoMap& map, const std::vector<NodeId>& plan, NodeId current) {
  if (plan.empty()) throw std::invalid_argument("next_subgoal: empty plan");
  map.check(current);
  std::size_t best = 0;
  std::size_t best_d = kUnreachable;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto d = edge_distance(map, current, plan[k]);
    const std::size_t dd = d ? *d : kUnreachable;
    if (dd <= best_d) {
      best_d = dd;
      best = k;
    }
  }
  return best + 1 < plan.size() ? plan[best + 1] : plan.back();
}

ControlResult control_step(const World& world, const Pose2D& pose, const Pose2D& subgoal, const ControlGains& g) {
  const double dx = subgoal.x - pose.x, dy = subgoal.y - pose.y;
  const double dist = std::hypot(dx, dy);
  if (dist < 1e-12) return {pose, false};
  const double desired = std::atan2(dy, dx) / kDeg;
  const double err = normalize_deg(desired - pose.theta);
  const double turn = std::clamp(g.k_ang * err, -g.w_max, g.w_max);
  const double heading = pose.theta + turn;
  const double rest = normalize_deg(desired - heading);
  const double v = std::min(g.v_max, g.k_lin * dist) * std::max(0.0, std::cos(rest * kDeg));
  const double cx = std::cos(heading * kDeg), cy = std::sin(heading * kDeg);

  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(v / g.contact_resolution)));
  double free_s = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    const double s = v * static_cast<double>(i) / static_cast<double>(n);
    if (!world.is_free(pose.x + s * cx, pose.y + s * cy, g.robot_radius))
      return {Pose2D{pose.x + free_s * cx, pose.y + free_s * cy, heading}, true};
    free_s = s;
  }
  return {Pose2D{pose.x + v * cx, pose.y + v * cy, heading}, false};
}

void NavConfig::validate() const {
  if (time_limit_steps < 1) throw std::invalid_argument("NavConfig: time_limit_steps must be >= 1");
  if (replan_period < 1) throw std::invalid_argument("NavConfig: replan_period must be >= 1");
  if (arrival_radius <= 0.0 || coverage_radius <= 0.0)
    throw std::invalid_argument("NavConfig: radii must be positive");
  if (gains.v_max <= 0.0 || gains.w_max <= 0.0 || gains.k_lin <= 0.0 || gains.k_lin > 1.0 || gains.k_ang <= 0.0 ||
      gains.k_ang > 1.0 || gains.contact_resolution <= 0.0)
    throw std::invalid_argument("NavConfig: gains out of range");
}

nlohmann::json nav_config_to_json(const NavConfig& c) {
  return {{"time_limit_steps", c.time_limit_steps},
          {"arrival_radius", c.arrival_radius},
          {"coverage_radius", c.coverage_radius},
          {"replan_period", c.replan_period},
          {"omega_m", c.omega_m},
          {"gains",
           {{"k_lin", c.gains.k_lin},
            {"k_ang", c.gains.k_ang},
            {"v_max", c.gains.v_max},
            {"w_max", c.gains.w_max},
            {"robot_radius", c.gains.robot_radius},
            {"contact_resolution", c.gains.contact_resolution}}}};
}

NavConfig nav_config_from_json(const nlohmann::json& j) {
  NavConfig c;
  c.time_limit_steps = j.value("time_limit_steps", c.time_limit_steps);
  c.arrival_radius = j.value("arrival_radius", c.arrival_radius);
  c.coverage_radius = j.value("coverage_radius", c.coverage_radius);
  c.replan_period = j.value("replan_period", c.replan_period);
  c.omega_m = j.value("omega_m", c.omega_m);
  if (j.contains("gains")) {
    const auto& g = j.at("gains");
    c.gains.k_lin = g.value("k_lin", c.gains.k_lin);
    c.gains.k_ang = g.value("k_ang", c.gains.k_ang);
    c.gains.v_max = g.value("v_max", c.gains.v_max);
    c.gains.w_max = g.value("w_max", c.gains.w_max);
    c.gains.robot_radius = g.value("robot_radius", c.gains.robot_radius);
    c.gains.contact_resolution = g.value("contact_resolution", c.gains.contact_resolution);
  }
  c.validate();
  return c;
}

const char* to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::success: return "success";
    case TrialStatus::collision: return "collision";
    case TrialStatus::timeout: return "timeout";
  }
  return "?";
}

TrialOutcome run_trial(const World& world, const TopoMap& map, Localizer& localizer, const ObservationModel& obs_model,
                       Domain domain, const Pose2D& start, NodeId goal, const std::vector<Pose2D>& nominal,
                       const NavConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  map.check(goal);
  const Pose2D goal_pose = map.pose(goal);
  TrialOutcome out;
  std::vector<char> covered(nominal.size(), 0);
  auto visit = [&](const Pose2D& p) {
    out.visited.push_back(p);
    for (std::size_t i = 0; i < nominal.size(); ++i)
      if (!covered[i] && std::hypot(nominal[i].x - p.x, nominal[i].y - p.y) <= cfg.coverage_radius) covered[i] = 1;
  };
  auto arrived = [&](const Pose2D& p) { return std::hypot(goal_pose.x - p.x, goal_pose.y - p.y) <= cfg.arrival_radius; };
  auto finish = [&](TrialStatus s) {
    out.status = s;
    std::size_t c = 0;
    for (char v : covered) c += v;
    out.coverage = nominal.empty() ? 1.0 : static_cast<double>(c) / static_cast<double>(nominal.size());
    return out;
  };

  Pose2D pose = start;
  visit(pose);
  localizer.reset(map);
  NodeId subgoal = goal;
  std::vector<NodeId> plan;
  for (std::size_t k = 0; k < cfg.time_limit_steps; ++k) {
    if (arrived(pose)) return finish(TrialStatus::success);
    const auto obs = render_observation(world, pose, obs_model, domain, splitmix(seed ^ splitmix(k)));
    const NodeId here = localizer.step(obs, pose);
    if (k % cfg.replan_period == 0) {
      try {
        plan = plan_dijkstra(map, here, goal);
      } catch (const std::invalid_argument&) {
        plan.clear();  // localized past the goal: head for it directly
      }
    }
    subgoal = plan.empty() ? goal : next_subgoal(map, plan, here);
    out.log.push_back({pose, here, subgoal});
    const ControlResult r = control_step(world, pose, map.pose(subgoal), cfg.gains);
    pose = r.pose;
    visit(pose);
    out.steps = k + 1;
    if (r.collided) return finish(TrialStatus::collision);
  }
  return finish(arrived(pose) ? TrialStatus::success : TrialStatus::timeout);
}

NavMetrics nav_metrics(const std::vector<TrialOutcome>& outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("nav_metrics: no outcomes");
  NavMetrics m;
  m.trials = outcomes.size();
  std::size_t s = 0, c = 0;
  for (const auto& o : outcomes) {
    s += o.status == TrialStatus::success;
    c += o.status == TrialStatus::collision;
    m.covr += o.coverage;
  }
  const double n = static_cast<double>(m.trials);
  m.sr = static_cast<double>(s) / n;
  m.cr = static_cast<double>(c) / n;
  m.tr = 1.0 - m.sr - m.cr;
  m.covr /= n;
  return m;
}

nlohmann::json trial_log_to_json(const TrialOutcome& o) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : o.log)
    steps.push_back({{"pose", pose_to_json(s.pose)}, {"localized", s.localized.index}, {"subgoal", s.subgoal.index}});
  return {{"status", to_string(o.status)},
          {"coverage", o.coverage},
          {"steps", o.steps},
          {"final_pose", pose_to_json(o.visited.back())},
          {"log", std::move(steps)}};
}

void write_nav_csv(std::ostream& os, const std::vector<NavReportRow>& rows) {
  os << "method,SR,CR,TR,CovR,trials\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%zu\n", r.method.c_str(), r.metrics.sr, r.metrics.cr,
                  r.metrics.tr, r.metrics.covr, r.metrics.trials);
    os << buf;
  }
}

}  // namespace topoloc
