#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoloc/evaluation.hpp"
#include "topoloc/localizer.hpp"
#include "topoloc/navigation.hpp"
#include "topoloc/simworld.hpp"
#include "topoloc/topo_graph.hpp"
#include "topoloc/trainer.hpp"

namespace topoloc {

struct ObsConfig {
  std::size_t d_obs = 16;
  double noise_sigma = 0.05;
  double clutter_sigma = 0.5;
  double shift_strength = 1.0;
  std::uint64_t shift_seed = 99;
  friend bool operator==(const ObsConfig&, const ObsConfig&) = default;
};

struct DatasetConfig {
  double step = 0.25;
  std::size_t sim_train = 32;
  std::size_t real_train = 32;
  std::size_t val = 6;  // per domain
  std::size_t test_per_category = 6;
  double sim_length = 20.0;   // m per sim episode
  double real_length = 30.0;  // m per real_like episode
  double max_train_deviation = 1.5;
  double real_deviation = 0.3;
  double deviated_le_1 = 1.0;    // banded amplitude of the first deviated test band
  double deviated_1_to_2 = 2.0;  // and of the second
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct NavTrialConfig {
  std::size_t count = 50;
  double min_goal_distance = 8.0;  // nominal path length from start to goal [m]
  double max_goal_distance = 16.0;
  double start_jitter = 0.3;       // lateral [m]
  double coverage_spacing = 0.5;   // nominal waypoint spacing [m]
  friend bool operator==(const NavTrialConfig&, const NavTrialConfig&) = default;
};

/// Everything a pipeline command needs. One root seed drives all randomness.
struct RunConfig {
  WorldSpec world = benchmark_world_spec();
  ObsConfig obs;
  MapConfig map;
  DatasetConfig data;
  ModelDims dims;
  TrainConfig train;
  NavConfig nav;
  NavTrialConfig trials;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& c);
/// Missing keys keep their defaults. Throws std::invalid_argument on bad values.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const RunConfig& c);

ObservationModel make_observation_model(const ObsConfig& c);

/// World, observation model and the reference map built from one traversal
/// of the nominal path.
struct Benchmark {
  World world;
  ObservationModel obs;
  TopoMap map;
  std::vector<Pose2D> map_trajectory;
};

Benchmark make_benchmark(const RunConfig& c);

struct Episode {
  Domain domain = Domain::sim;
  std::string category;  // train, val, not_deviated, deviated_le_1, deviated_1_to_2, real_like
  std::vector<Pose2D> poses;
  std::vector<std::vector<double>> observations;
};

struct Dataset {
  std::vector<Episode> sim_train, real_train, sim_val, real_val, test;
};

/// Deterministic given (config, seed).
Dataset collect_dataset(const Benchmark& b, const RunConfig& c, std::uint64_t seed);

nlohmann::json episode_to_json(const Episode& e);
Episode episode_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

/// Sim episodes target the benchmark map; real_like episodes get their own stride map.
Sample episode_sample(const Episode& e, const Benchmark& b, const RunConfig& c);

/// Trains one model variant. mix_ratio 0 gives sim-only training.
TrainResult train_variant(const Benchmark& b, const Dataset& d, const RunConfig& c, Variant variant, double mix_ratio,
                          std::uint64_t seed);

/// Methods accepted on the command line.
enum class Method { ours, no_gclstm, no_skip, nearest, oracle };
const char* to_string(Method m);
Method method_from_string(const std::string& s);
/// Network variant behind a learned method; throws for nearest and oracle.
Variant method_variant(Method m);

using LocalizerFactory = std::function<std::unique_ptr<Localizer>()>;

/// One report row per test category (pooled over that category's episodes).
std::vector<LocReportRow> evaluate_localization(const Benchmark& b, const Dataset& d, const RunConfig& c,
                                                const std::string& method, const LocalizerFactory& make);

struct NavTrialSpec {
  Pose2D start;
  NodeId goal;
  std::vector<Pose2D> nominal;
  std::uint64_t seed = 0;
};

/// Starts in rooms, goals a bounded path length ahead.
std::vector<NavTrialSpec> make_nav_trials(const Benchmark& b, const RunConfig& c, std::uint64_t seed);

std::vector<TrialOutcome> run_nav_trials(const Benchmark& b, const RunConfig& c,
                                         const std::vector<NavTrialSpec>& trials, const LocalizerFactory& make);

/// Artifact stamp: config hash and seed.
nlohmann::json artifact_meta(const RunConfig& c, std::uint64_t seed);

}  // namespace topoloc
