#include "topoloc/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace topoloc {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const char* to_string(SegmentKind k) { return k == SegmentKind::room ? "room" : "corridor"; }

SegmentKind segment_kind_from_string(const std::string& s) {
  if (s == "room") return SegmentKind::room;
  if (s == "corridor") return SegmentKind::corridor;
  throw std::invalid_argument("unknown segment kind '" + s + "'");
}

// Shared boundary (or overlap) of two rectangles as a closed rectangle; empty if they do not touch.
std::optional<Rect> junction(const Rect& a, const Rect& b) {
  Rect r{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  if (r.x1 < r.x0 || r.y1 < r.y0) return std::nullopt;
  return r;
}

std::pair<double, double> centre(const Rect& r) { return {(r.x0 + r.x1) / 2.0, (r.y0 + r.y1) / 2.0}; }

std::vector<Landmark> make_landmarks(const Rect& area, const WorldSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> feat(0.0, 1.0);
  const double w = area.width(), h = area.height();
  const double perimeter = 2.0 * (w + h);
  const auto count = static_cast<std::size_t>(std::max(1.0, std::round(perimeter / spec.landmark_spacing)));
  std::vector<Landmark> out;
  for (std::size_t k = 0; k < count; ++k) {
    // Walk the perimeter counter-clockwise from the local origin.
    double t = (static_cast<double>(k) + 0.5) * perimeter / static_cast<double>(count);
    Landmark lm;
    if (t < w) {
      lm.x = t, lm.y = 0.0;
    } else if ((t -= w) < h) {
      lm.x = w, lm.y = t;
    } else if ((t -= h) < w) {
      lm.x = w - t, lm.y = h;
    } else {
      t -= w;
      lm.x = 0.0, lm.y = h - t;
    }
    lm.feature.assign(spec.feature_dim, 0.0);
    const std::size_t signal = spec.feature_dim - spec.clutter_dims;
    for (std::size_t j = 0; j < signal; ++j) lm.feature[j] = feat(rng);
    out.push_back(std::move(lm));
  }
  return out;
}

double smooth_unit(double s, double phase1, double phase2) {
  // Sum of two incommensurate sinusoids, scaled into [-1, 1].
  return 0.5 * (std::sin(2.0 * std::numbers::pi * s / 7.3 + phase1) + std::sin(2.0 * std::numbers::pi * s / 3.1 + phase2));
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void WorldSpec::validate() const {
  if (layout.empty()) throw std::invalid_argument("WorldSpec: empty layout");
  if (repetition_count < 1) throw std::invalid_argument("WorldSpec: repetition_count must be >= 1");
  if (feature_dim < 2) throw std::invalid_argument("WorldSpec: feature_dim must be >= 2");
  if (clutter_dims >= feature_dim) throw std::invalid_argument("WorldSpec: clutter_dims must leave signal dimensions");
  if (!(landmark_spacing > 0.0)) throw std::invalid_argument("WorldSpec: landmark_spacing must be > 0");
  for (const auto& s : layout)
    if (!(s.area.width() > 0.0 && s.area.height() > 0.0)) throw std::invalid_argument("WorldSpec: degenerate segment");
  for (std::size_t i = 0; i + 1 < layout.size(); ++i) {
    auto j = junction(layout[i].area, layout[i + 1].area);
    if (!j || std::max(j->width(), j->height()) < 0.5)
      throw std::invalid_argument("WorldSpec: segments " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                  " are not connected");
  }
  std::vector<const SegmentSpec*> corridors;
  for (const auto& s : layout)
    if (s.kind == SegmentKind::corridor) corridors.push_back(&s);
  if (repetition_count > 1) {
    if (corridors.size() < repetition_count)
      throw std::invalid_argument("WorldSpec: repetition_count " + std::to_string(repetition_count) + " exceeds " +
                                  std::to_string(corridors.size()) + " corridors");
    for (std::size_t i = 1; i < repetition_count; ++i)
      if (corridors[i]->area.width() != corridors[0]->area.width() ||
          corridors[i]->area.height() != corridors[0]->area.height())
        throw std::invalid_argument("WorldSpec: repeated corridors must have identical size");
  }
}

std::optional<std::size_t> World::segment_at(double x, double y) const {
  for (std::size_t i = 0; i < segments.size(); ++i)
    if (segments[i].spec.area.contains(x, y)) return i;
  return std::nullopt;
}

bool World::is_free(double x, double y, double radius) const {
  auto inside_free = [&](double px, double py) {
    bool in_segment = false;
    for (const auto& s : segments) {
      const Rect& r = s.spec.area;
      if (px >= r.x0 && px <= r.x1 && py >= r.y0 && py <= r.y1) {
        in_segment = true;
        break;
      }
    }
    if (!in_segment) return false;
    for (const auto& o : spec.obstacles)
      if (px >= o.x0 && px <= o.x1 && py >= o.y0 && py <= o.y1) return false;
    return true;
  };
  if (!inside_free(x, y)) return false;
  if (radius <= 0.0) return true;
  constexpr int kRing = 24;
  for (int k = 0; k < kRing; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kRing;
    if (!inside_free(x + radius * std::cos(a), y + radius * std::sin(a))) return false;
  }
  return true;
}

std::vector<std::pair<double, double>> World::nominal_waypoints() const {
  std::vector<std::pair<double, double>> w{centre(segments.front().spec.area)};
  for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
    w.push_back(centre(*junction(segments[i].spec.area, segments[i + 1].spec.area)));
    w.push_back(centre(segments[i + 1].spec.area));
  }
  return w;
}

double World::nominal_length() const {
  const auto w = nominal_waypoints();
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i)
    len += std::hypot(w[i + 1].first - w[i].first, w[i + 1].second - w[i].second);
  return len;
}

World generate_world(const WorldSpec& spec) {
  spec.validate();
  World world;
  world.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::vector<Landmark> shared;
  std::size_t corridor_count = 0;
  std::size_t next_appearance = 1;
  for (const auto& s : spec.layout) {
    Segment seg;
    seg.spec = s;
    const bool repeated = s.kind == SegmentKind::corridor && spec.repetition_count > 1 &&
                          corridor_count++ < spec.repetition_count;
    if (repeated) {
      if (shared.empty()) shared = make_landmarks(s.area, spec, rng);
      seg.appearance = 0;
      seg.landmarks = shared;
    } else {
      seg.appearance = next_appearance++;
      seg.landmarks = make_landmarks(s.area, spec, rng);
    }
    world.segments.push_back(std::move(seg));
  }
  return world;
}

WorldSpec benchmark_world_spec(std::uint64_t seed, std::size_t feature_dim, std::size_t clutter_dims) {
  WorldSpec spec;
  spec.seed = seed;
  spec.feature_dim = feature_dim;
  spec.clutter_dims = clutter_dims;
  spec.repetition_count = 3;
  double x = 0.0;
  for (int k = 0; k < 4; ++k) {
    spec.layout.push_back({SegmentKind::room, Rect{x, -3.0, x + 6.0, 3.0}});
    // A pillar in every room, off the centre line.
    spec.obstacles.push_back(Rect{x + 2.5, (k % 2 == 0) ? 1.8 : -2.6, x + 3.3, (k % 2 == 0) ? 2.6 : -1.8});
    x += 6.0;
    if (k < 3) {
      spec.layout.push_back({SegmentKind::corridor, Rect{x, -1.0, x + 12.0, 1.0}});
      x += 12.0;
    }
  }
  return spec;
}

const char* to_string(Domain d) { return d == Domain::sim ? "sim" : "real_like"; }

Domain domain_from_string(const std::string& s) {
  if (s == "sim") return Domain::sim;
  if (s == "real_like") return Domain::real_like;
  throw std::invalid_argument("unknown domain '" + s + "' (expected sim or real_like)");
}

ObservationModel ObservationModel::make(std::size_t d_obs, double noise_sigma, double clutter_sigma,
                                        double shift_strength, std::uint64_t shift_seed) {
  ObservationModel m;
  m.d_obs = d_obs;
  m.noise_sigma = noise_sigma;
  m.clutter_sigma = clutter_sigma;
  std::mt19937_64 rng(shift_seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::normal_distribution<double> b(0.0, 0.5);
  for (std::size_t j = 0; j < d_obs; ++j) {
    m.shift_scale.push_back(1.0 + shift_strength * u(rng));
    m.shift_bias.push_back(shift_strength * b(rng));
  }
  m.shift_noise = noise_sigma;
  return m;
}

void ObservationModel::validate() const {
  if (d_obs < 2) throw std::invalid_argument("ObservationModel: d_obs must be >= 2");
  if (noise_sigma < 0.0 || clutter_sigma < 0.0 || shift_noise < 0.0)
    throw std::invalid_argument("ObservationModel: noise levels must be >= 0");
  if (shift_scale.size() != d_obs || shift_bias.size() != d_obs)
    throw std::invalid_argument("ObservationModel: domain shift must have d_obs entries");
}

std::vector<double> render_clean(const World& world, const Pose2D& pose, const ObservationModel& model) {
  if (model.d_obs != world.spec.feature_dim)
    throw std::invalid_argument("render_observation: model d_obs " + std::to_string(model.d_obs) +
                                " != world feature_dim " + std::to_string(world.spec.feature_dim));
  const auto seg = world.segment_at(pose.x, pose.y);
  if (!seg)
    throw std::invalid_argument("render_observation: pose (" + std::to_string(pose.x) + ", " + std::to_string(pose.y) +
                                ") is outside the world");
  const Segment& s = world.segments[*seg];
  const double lx = pose.x - s.spec.area.x0, ly = pose.y - s.spec.area.y0;
  const double inv2s2 = 1.0 / (2.0 * model.view_range * model.view_range);
  std::vector<double> d(model.d_obs, 0.0);
  for (const Landmark& lm : s.landmarks) {
    const double dx = lm.x - lx, dy = lm.y - ly;
    const double w = std::exp(-(dx * dx + dy * dy) * inv2s2);
    const double rel = std::atan2(dy, dx) - pose.theta * kDeg;
    const double v = 0.6 + 0.4 * std::cos(rel);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += w * v * lm.feature[j];
  }
  return d;
}

std::vector<double> apply_domain_shift(const std::vector<double>& clean, const ObservationModel& model) {
  std::vector<double> out(clean.size());
  for (std::size_t j = 0; j < clean.size(); ++j) out[j] = model.shift_scale[j] * clean[j] + model.shift_bias[j];
  return out;
}

std::vector<double> render_observation(const World& world, const Pose2D& pose, const ObservationModel& model,
                                       Domain domain, std::uint64_t noise_seed) {
  model.validate();
  std::vector<double> d = render_clean(world, pose, model);
  if (domain == Domain::real_like) d = apply_domain_shift(d, model);
  std::mt19937_64 rng(splitmix(noise_seed));
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t signal = d.size() - world.spec.clutter_dims;
  for (std::size_t j = 0; j < d.size(); ++j) {
    double sigma = j < signal ? model.noise_sigma : model.clutter_sigma;
    if (domain == Domain::real_like) sigma = std::hypot(sigma, model.shift_noise);
    if (sigma > 0.0) d[j] += sigma * n01(rng);
  }
  return d;
}

Pose2D nominal_pose(const World& world, double s) {
  const auto w = world.nominal_waypoints();
  double remaining = std::max(0.0, s);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const double dx = w[i + 1].first - w[i].first, dy = w[i + 1].second - w[i].second;
    const double len = std::hypot(dx, dy);
    if (len <= 0.0) continue;
    if (remaining <= len || i + 2 == w.size()) {
      const double t = std::min(remaining, len) / len;
      return Pose2D(w[i].first + t * dx, w[i].second + t * dy, std::atan2(dy, dx) / kDeg);
    }
    remaining -= len;
  }
  return Pose2D(w.front().first, w.front().second, 0.0);
}

namespace {

std::vector<double> arc_samples(const World& world, const TrajectoryOptions& opts) {
  const double total = world.nominal_length();
  const double goal = opts.goal_s.value_or(total);
  if (opts.start_s < 0.0 || opts.start_s > total)
    throw std::invalid_argument("generate_trajectory: start arc length outside the nominal path");
  if (goal > total + 1e-9 || goal < opts.start_s)
    throw std::invalid_argument("generate_trajectory: goal arc length " + std::to_string(goal) +
                                " is unreachable (path length " + std::to_string(total) + ")");
  if (!(opts.step > 0.0)) throw std::invalid_argument("generate_trajectory: step must be > 0");
  std::vector<double> s;
  for (double v = opts.start_s; v <= goal + 1e-9; v += opts.step) s.push_back(std::min(v, goal));
  return s;
}

}  // namespace

std::vector<Pose2D> nominal_trajectory(const World& world, const TrajectoryOptions& opts) {
  std::vector<Pose2D> out;
  for (double s : arc_samples(world, opts)) out.push_back(nominal_pose(world, s));
  return out;
}

std::vector<Pose2D> generate_trajectory(const World& world, const TrajectoryOptions& opts, std::uint64_t seed) {
  const std::vector<double> arc = arc_samples(world, opts);
  const Pose2D start = nominal_pose(world, arc.front());
  if (!world.is_free(start.x, start.y, opts.robot_radius))
    throw std::invalid_argument("generate_trajectory: start pose is not in free space");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double p1 = phase(rng), p2 = phase(rng), p3 = phase(rng), p4 = phase(rng);
  const double sign_lat = (rng() & 1) ? 1.0 : -1.0;
  const double sign_head = (rng() & 1) ? 1.0 : -1.0;
  // Position takes 30% of the deviation budget, heading the rest.
  const double lat_max = 0.3 * opts.deviation;
  const double head_max_deg = 0.7 * opts.deviation / opts.omega_m;

  std::vector<Pose2D> out;
  out.reserve(arc.size());
  for (double s : arc) {
    const Pose2D nom = nominal_pose(world, s);
    double ul, uh;
    if (opts.banded) {
      ul = sign_lat * (0.8 + 0.2 * smooth_unit(s, p1, p2));
      uh = sign_head * (0.8 + 0.2 * smooth_unit(s, p3, p4));
    } else {
      ul = smooth_unit(s, p1, p2);
      uh = smooth_unit(s, p3, p4);
    }
    const double nx = -std::sin(nom.theta * kDeg), ny = std::cos(nom.theta * kDeg);
    double lat = lat_max * ul;
    // Pull the offset toward the centre line until the robot disc is clear.
    for (int k = 0; k < 20 && !world.is_free(nom.x + lat * nx, nom.y + lat * ny, opts.robot_radius); ++k) lat *= 0.8;
    if (!world.is_free(nom.x + lat * nx, nom.y + lat * ny, opts.robot_radius)) lat = 0.0;
    out.emplace_back(nom.x + lat * nx, nom.y + lat * ny, nom.theta + head_max_deg * uh);
  }
  return out;
}

bool trajectory_collision_free(const World& world, const std::vector<Pose2D>& poses, double radius) {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (!world.is_free(poses[i].x, poses[i].y, radius)) return false;
    if (i == 0) continue;
    const double dx = poses[i].x - poses[i - 1].x, dy = poses[i].y - poses[i - 1].y;
    const int n = std::max(1, static_cast<int>(std::ceil(std::hypot(dx, dy) / 0.01)));
    for (int k = 1; k < n; ++k) {
      const double t = static_cast<double>(k) / n;
      if (!world.is_free(poses[i - 1].x + t * dx, poses[i - 1].y + t * dy, radius)) return false;
    }
  }
  return true;
}

const char* to_string(DeviationCategory c) {
  switch (c) {
    case DeviationCategory::not_deviated: return "not_deviated";
    case DeviationCategory::deviated_le_1: return "deviated_le_1";
    case DeviationCategory::deviated_1_to_2: return "deviated_1_to_2";
    case DeviationCategory::beyond_2: return "beyond_2";
  }
  return "beyond_2";
}

DeviationCategory classify_deviation(const Pose2D& pose, const TopoMap& map, double omega_m) {
  const NodeId nn = nearest_node(map, pose, omega_m);
  const double d = pose_distance(pose, map.pose(nn), omega_m);
  if (d <= 1e-9) return DeviationCategory::not_deviated;
  if (d <= 1.0) return DeviationCategory::deviated_le_1;
  if (d <= 2.0) return DeviationCategory::deviated_1_to_2;
  return DeviationCategory::beyond_2;
}

nlohmann::json world_spec_to_json(const WorldSpec& spec) {
  auto rect = [](const Rect& r) { return nlohmann::json{r.x0, r.y0, r.x1, r.y1}; };
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : spec.layout) layout.push_back({{"kind", to_string(s.kind)}, {"area", rect(s.area)}});
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& o : spec.obstacles) obstacles.push_back(rect(o));
  return {{"layout", layout},
          {"repetition_count", spec.repetition_count},
          {"obstacles", obstacles},
          {"feature_dim", spec.feature_dim},
          {"clutter_dims", spec.clutter_dims},
          {"landmark_spacing", spec.landmark_spacing},
          {"seed", spec.seed}};
}

WorldSpec world_spec_from_json(const nlohmann::json& j) {
  auto rect = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 4) throw std::invalid_argument("world spec: rect must be [x0, y0, x1, y1]");
    return Rect{a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
  };
  WorldSpec spec;
  for (const auto& s : j.at("layout"))
    spec.layout.push_back({segment_kind_from_string(s.at("kind").get<std::string>()), rect(s.at("area"))});
  spec.repetition_count = j.at("repetition_count").get<std::size_t>();
  if (j.contains("obstacles"))
    for (const auto& o : j.at("obstacles")) spec.obstacles.push_back(rect(o));
  spec.feature_dim = j.value("feature_dim", spec.feature_dim);
  spec.clutter_dims = j.value("clutter_dims", spec.clutter_dims);
  spec.landmark_spacing = j.value("landmark_spacing", spec.landmark_spacing);
  spec.seed = j.value("seed", spec.seed);
  spec.validate();
  return spec;
}

nlohmann::json observation_model_to_json(const ObservationModel& m) {
  return {{"d_obs", m.d_obs},
          {"noise_sigma", m.noise_sigma},
          {"clutter_sigma", m.clutter_sigma},
          {"view_range", m.view_range},
          {"shift_scale", m.shift_scale},
          {"shift_bias", m.shift_bias},
          {"shift_noise", m.shift_noise}};
}

ObservationModel observation_model_from_json(const nlohmann::json& j) {
  ObservationModel m;
  m.d_obs = j.at("d_obs").get<std::size_t>();
  m.noise_sigma = j.at("noise_sigma").get<double>();
  m.clutter_sigma = j.value("clutter_sigma", m.clutter_sigma);
  m.view_range = j.value("view_range", m.view_range);
  m.shift_scale = j.at("shift_scale").get<std::vector<double>>();
  m.shift_bias = j.at("shift_bias").get<std::vector<double>>();
  m.shift_noise = j.value("shift_noise", m.shift_noise);
  m.validate();
  return m;
}

nlohmann::json trajectory_to_json(const std::vector<Pose2D>& poses) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : poses) a.push_back(pose_to_json(p));
  return a;
}

std::vector<Pose2D> trajectory_from_json(const nlohmann::json& j) {
  std::vector<Pose2D> out;
  for (const auto& p : j) out.push_back(pose_from_json(p));
  return out;
}

}  // namespace topoloc
