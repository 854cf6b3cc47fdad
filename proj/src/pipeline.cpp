#include "topoloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace topoloc {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

nlohmann::json map_config_to_json(const MapConfig& m) {
  return {{"omega_m", m.omega_m}, {"alpha_th", m.alpha_th}, {"m_stride", m.m_stride}};
}

MapConfig map_config_from_json(const nlohmann::json& j) {
  MapConfig m;
  m.omega_m = j.value("omega_m", m.omega_m);
  m.alpha_th = j.value("alpha_th", m.alpha_th);
  m.m_stride = j.value("m_stride", m.m_stride);
  return m;
}

std::vector<std::vector<double>> render_all(const Benchmark& b, const std::vector<Pose2D>& poses, Domain domain,
                                            std::uint64_t seed) {
  std::vector<std::vector<double>> out;
  out.reserve(poses.size());
  for (std::size_t t = 0; t < poses.size(); ++t)
    out.push_back(render_observation(b.world, poses[t], b.obs, domain, mix_seed(seed, t)));
  return out;
}

Episode make_episode(const Benchmark& b, const RunConfig& c, Domain domain, std::string category, double length,
                     double deviation, bool banded, std::mt19937_64& rng) {
  const double total = b.world.nominal_length();
  std::uniform_real_distribution<double> start(0.5, std::max(0.5, total - length - 0.5));
  TrajectoryOptions opts;
  opts.start_s = start(rng);
  opts.goal_s = std::min(total, opts.start_s + length);
  opts.step = c.data.step;
  opts.deviation = deviation;
  opts.banded = banded;
  opts.omega_m = c.map.omega_m;
  Episode e;
  e.domain = domain;
  e.category = std::move(category);
  e.poses = generate_trajectory(b.world, opts, rng());
  e.observations = render_all(b, e.poses, domain, rng());
  return e;
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  dims.validate();
  train.validate();
  nav.validate();
  if (obs.d_obs != world.feature_dim)
    throw std::invalid_argument("config: obs.d_obs must equal world.feature_dim");
  if (dims.d_obs != obs.d_obs) throw std::invalid_argument("config: model.d_obs must equal obs.d_obs");
  if (map.alpha_th <= 0.0 || map.m_stride < 1) throw std::invalid_argument("config: bad map settings");
  if (data.step <= 0.0 || data.sim_length <= 0.0 || data.real_length <= 0.0)
    throw std::invalid_argument("config: dataset lengths must be positive");
  if (data.sim_train == 0 || data.val == 0) throw std::invalid_argument("config: empty sim train or validation set");
  if (trials.min_goal_distance <= 0.0 || trials.max_goal_distance < trials.min_goal_distance)
    throw std::invalid_argument("config: bad goal distance range");
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"world", world_spec_to_json(c.world)},
          {"obs",
           {{"d_obs", c.obs.d_obs},
            {"noise_sigma", c.obs.noise_sigma},
            {"clutter_sigma", c.obs.clutter_sigma},
            {"shift_strength", c.obs.shift_strength},
            {"shift_seed", c.obs.shift_seed}}},
          {"map", map_config_to_json(c.map)},
          {"data",
           {{"step", c.data.step},
            {"sim_train", c.data.sim_train},
            {"real_train", c.data.real_train},
            {"val", c.data.val},
            {"test_per_category", c.data.test_per_category},
            {"sim_length", c.data.sim_length},
            {"real_length", c.data.real_length},
            {"max_train_deviation", c.data.max_train_deviation},
            {"real_deviation", c.data.real_deviation},
            {"deviated_le_1", c.data.deviated_le_1},
            {"deviated_1_to_2", c.data.deviated_1_to_2}}},
          {"model", dims_to_json(c.dims)},
          {"train", train_config_to_json(c.train)},
          {"nav", nav_config_to_json(c.nav)},
          {"trials",
           {{"count", c.trials.count},
            {"min_goal_distance", c.trials.min_goal_distance},
            {"max_goal_distance", c.trials.max_goal_distance},
            {"start_jitter", c.trials.start_jitter},
            {"coverage_spacing", c.trials.coverage_spacing}}}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("world")) c.world = world_spec_from_json(j.at("world"));
    if (j.contains("obs")) {
      const auto& o = j.at("obs");
      c.obs.d_obs = o.value("d_obs", c.obs.d_obs);
      c.obs.noise_sigma = o.value("noise_sigma", c.obs.noise_sigma);
      c.obs.clutter_sigma = o.value("clutter_sigma", c.obs.clutter_sigma);
      c.obs.shift_strength = o.value("shift_strength", c.obs.shift_strength);
      c.obs.shift_seed = o.value("shift_seed", c.obs.shift_seed);
    }
    if (j.contains("map")) c.map = map_config_from_json(j.at("map"));
    if (j.contains("data")) {
      const auto& d = j.at("data");
      auto& o = c.data;
      o.step = d.value("step", o.step);
      o.sim_train = d.value("sim_train", o.sim_train);
      o.real_train = d.value("real_train", o.real_train);
      o.val = d.value("val", o.val);
      o.test_per_category = d.value("test_per_category", o.test_per_category);
      o.sim_length = d.value("sim_length", o.sim_length);
      o.real_length = d.value("real_length", o.real_length);
      o.max_train_deviation = d.value("max_train_deviation", o.max_train_deviation);
      o.real_deviation = d.value("real_deviation", o.real_deviation);
      o.deviated_le_1 = d.value("deviated_le_1", o.deviated_le_1);
      o.deviated_1_to_2 = d.value("deviated_1_to_2", o.deviated_1_to_2);
    }
    if (j.contains("model")) c.dims = dims_from_json(j.at("model"));
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("nav")) c.nav = nav_config_from_json(j.at("nav"));
    if (j.contains("trials")) {
      const auto& t = j.at("trials");
      c.trials.count = t.value("count", c.trials.count);
      c.trials.min_goal_distance = t.value("min_goal_distance", c.trials.min_goal_distance);
      c.trials.max_goal_distance = t.value("max_goal_distance", c.trials.max_goal_distance);
      c.trials.start_jitter = t.value("start_jitter", c.trials.start_jitter);
      c.trials.coverage_spacing = t.value("coverage_spacing", c.trials.coverage_spacing);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& c) {
  const std::string s = run_config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ObservationModel make_observation_model(const ObsConfig& c) {
  return ObservationModel::make(c.d_obs, c.noise_sigma, c.clutter_sigma, c.shift_strength, c.shift_seed);
}

Benchmark make_benchmark(const RunConfig& c) {
  c.validate();
  Benchmark b{generate_world(c.world), make_observation_model(c.obs), TopoMap{}, {}};
  TrajectoryOptions opts;
  opts.start_s = 0.0;
  opts.goal_s = b.world.nominal_length();
  opts.step = c.data.step;
  opts.omega_m = c.map.omega_m;
  b.map_trajectory = nominal_trajectory(b.world, opts);
  const auto obs = render_all(b, b.map_trajectory, Domain::sim, mix_seed(c.seed, 0x3a9));
  std::vector<PoseSample> samples;
  for (std::size_t t = 0; t < obs.size(); ++t) samples.push_back({obs[t], b.map_trajectory[t]});
  b.map = build_map_sim(samples, c.map);
  return b;
}

Dataset collect_dataset(const Benchmark& b, const RunConfig& c, std::uint64_t seed) {
  Dataset d;
  std::mt19937_64 rng(mix_seed(seed, 0xda7a));
  std::uniform_real_distribution<double> dev(0.0, c.data.max_train_deviation);
  const auto& o = c.data;
  for (std::size_t i = 0; i < o.sim_train; ++i)
    d.sim_train.push_back(make_episode(b, c, Domain::sim, "train", o.sim_length, dev(rng), false, rng));
  for (std::size_t i = 0; i < o.real_train; ++i)
    d.real_train.push_back(make_episode(b, c, Domain::real_like, "train", o.real_length, o.real_deviation, false, rng));
  for (std::size_t i = 0; i < o.val; ++i)
    d.sim_val.push_back(make_episode(b, c, Domain::sim, "val", o.sim_length, dev(rng), false, rng));
  for (std::size_t i = 0; i < o.val; ++i)
    d.real_val.push_back(make_episode(b, c, Domain::real_like, "val", o.real_length, o.real_deviation, false, rng));
  for (std::size_t i = 0; i < o.test_per_category; ++i) {
    d.test.push_back(make_episode(b, c, Domain::sim, "not_deviated", o.sim_length, 0.0, false, rng));
    d.test.push_back(make_episode(b, c, Domain::sim, "deviated_le_1", o.sim_length, o.deviated_le_1, true, rng));
    d.test.push_back(make_episode(b, c, Domain::sim, "deviated_1_to_2", o.sim_length, o.deviated_1_to_2, true, rng));
    d.test.push_back(
        make_episode(b, c, Domain::real_like, "real_like", o.real_length, o.real_deviation, false, rng));
  }
  return d;
}

nlohmann::json episode_to_json(const Episode& e) {
  return {{"domain", to_string(e.domain)},
          {"category", e.category},
          {"poses", trajectory_to_json(e.poses)},
          {"observations", e.observations}};
}

Episode episode_from_json(const nlohmann::json& j) {
  Episode e;
  e.domain = domain_from_string(j.at("domain").get<std::string>());
  e.category = j.at("category").get<std::string>();
  e.poses = trajectory_from_json(j.at("poses"));
  e.observations = j.at("observations").get<std::vector<std::vector<double>>>();
  if (e.poses.size() != e.observations.size())
    throw std::invalid_argument("episode: pose and observation counts differ");
  return e;
}

nlohmann::json dataset_to_json(const Dataset& d) {
  auto list = [](const std::vector<Episode>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : v) a.push_back(episode_to_json(e));
    return a;
  };
  return {{"sim_train", list(d.sim_train)},
          {"real_train", list(d.real_train)},
          {"sim_val", list(d.sim_val)},
          {"real_val", list(d.real_val)},
          {"test", list(d.test)}};
}

Dataset dataset_from_json(const nlohmann::json& j) {
  auto list = [&](const char* key) {
    std::vector<Episode> v;
    for (const auto& e : j.at(key)) v.push_back(episode_from_json(e));
    return v;
  };
  return {list("sim_train"), list("real_train"), list("sim_val"), list("real_val"), list("test")};
}

Sample episode_sample(const Episode& e, const Benchmark& b, const RunConfig& c) {
  if (e.domain == Domain::real_like) return make_real_like_sample(e.observations, c.map.m_stride);
  std::vector<Observation> obs;
  for (std::size_t t = 0; t < e.poses.size(); ++t) obs.push_back({e.observations[t], e.poses[t]});
  return make_sim_sample(obs, b.map, c.map.omega_m);
}

TrainResult train_variant(const Benchmark& b, const Dataset& d, const RunConfig& c, Variant variant, double mix_ratio,
                          std::uint64_t seed) {
  std::vector<Sample> sim, real, val;
  for (const auto& e : d.sim_train) sim.push_back(episode_sample(e, b, c));
  for (const auto& e : d.real_train) real.push_back(episode_sample(e, b, c));
  for (const auto& e : d.sim_val) val.push_back(episode_sample(e, b, c));
  // Real validation episodes only count when the model also trains on that domain.
  if (mix_ratio > 0.0)
    for (const auto& e : d.real_val) val.push_back(episode_sample(e, b, c));
  ModelDims dims = c.dims;
  dims.variant = variant;
  TrainConfig tc = c.train;
  tc.mix_ratio = mix_ratio;
  tc.seed = mix_seed(seed, 0x7a1);
  return train(LocalizerModel::create(dims, mix_seed(seed, 0x1417)), sim, real, val, tc);
}

const char* to_string(Method m) {
  switch (m) {
    case Method::ours: return "ours";
    case Method::no_gclstm: return "no_gclstm";
    case Method::no_skip: return "no_skip";
    case Method::nearest: return "nearest";
    case Method::oracle: return "oracle";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::ours, Method::no_gclstm, Method::no_skip, Method::nearest, Method::oracle})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "' (expected ours, no_gclstm, no_skip, nearest or oracle)");
}

Variant method_variant(Method m) {
  switch (m) {
    case Method::ours: return Variant::full;
    case Method::no_gclstm: return Variant::single_frame;
    case Method::no_skip: return Variant::no_skip;
    default: throw std::invalid_argument(std::string("method ") + to_string(m) + " has no network");
  }
}

std::vector<LocReportRow> evaluate_localization(const Benchmark& b, const Dataset& d, const RunConfig& c,
                                                const std::string& method, const LocalizerFactory& make) {
  std::vector<LocReportRow> rows(d.test.size());
  const long n = static_cast<long>(d.test.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    const Episode& e = d.test[i];
    const Sample s = episode_sample(e, b, c);
    std::vector<std::optional<Pose2D>> poses(e.poses.begin(), e.poses.end());
    auto loc = make();
    rows[i] = {method, e.category, eval_run(*loc, s.map, e.observations, poses, s.targets, c.map.omega_m)};
  }
  return pool_rows(rows);
}

std::vector<NavTrialSpec> make_nav_trials(const Benchmark& b, const RunConfig& c, std::uint64_t seed) {
  const double total = b.world.nominal_length();
  std::mt19937_64 rng(mix_seed(seed, 0x7a7));
  std::vector<NavTrialSpec> out;
  std::uniform_real_distribution<double> goal_len(c.trials.min_goal_distance, c.trials.max_goal_distance);
  std::uniform_real_distribution<double> jitter(-c.trials.start_jitter, c.trials.start_jitter);
  std::size_t guard = 0;
  while (out.size() < c.trials.count) {
    if (++guard > 100000) throw std::runtime_error("make_nav_trials: cannot place trials");
    std::uniform_real_distribution<double> start_s(0.5, total - c.trials.min_goal_distance);
    const double s0 = start_s(rng);
    const Pose2D nom = nominal_pose(b.world, s0);
    const auto seg = b.world.segment_at(nom.x, nom.y);
    if (!seg || b.world.segments[*seg].spec.kind != SegmentKind::room) continue;
    const double s1 = std::min(total, s0 + goal_len(rng));
    const Pose2D gp = nominal_pose(b.world, s1);
    const NodeId goal = nearest_node(b.map, gp, c.map.omega_m);
    Pose2D start{nom.x, nom.y + jitter(rng), nom.theta};
    if (!b.world.is_free(start.x, start.y, c.nav.gains.robot_radius)) continue;
    NavTrialSpec t;
    t.start = start;
    t.goal = goal;
    for (double s = s0; s < s1; s += c.trials.coverage_spacing) t.nominal.push_back(nominal_pose(b.world, s));
    t.nominal.push_back(b.map.pose(goal));
    t.seed = rng();
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TrialOutcome> run_nav_trials(const Benchmark& b, const RunConfig& c,
                                         const std::vector<NavTrialSpec>& trials, const LocalizerFactory& make) {
  std::vector<TrialOutcome> out(trials.size());
  const long n = static_cast<long>(trials.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    auto loc = make();
    const auto& t = trials[i];
    out[i] = run_trial(b.world, b.map, *loc, b.obs, Domain::sim, t.start, t.goal, t.nominal, c.nav, t.seed);
  }
  return out;
}

nlohmann::json artifact_meta(const RunConfig& c, std::uint64_t seed) {
  return {{"config_hash", config_hash(c)}, {"seed", seed}};
}

}  // namespace topoloc
