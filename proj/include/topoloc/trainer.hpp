#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "topoloc/localizer.hpp"
#include "topoloc/optim.hpp"
#include "topoloc/simworld.hpp"
#include "topoloc/topo_graph.hpp"

namespace topoloc {

struct Observation {
  std::vector<double> descriptor;
  std::optional<Pose2D> pose;
};

/// Observation sequence O', its map G and ground-truth nodes Y. The trainer
/// cuts windows of tau + 1 consecutive observations out of longer samples.
struct Sample {
  std::vector<Observation> observations;
  TopoMap map;
  std::vector<NodeId> targets;
  Domain domain = Domain::sim;

  void validate() const;
};

struct TrainConfig {
  std::size_t tau = 30;
  std::size_t n_prime = 40;
  double lr_main = 1e-3;
  double lr_encoder = 1e-5;
  std::size_t patience_iters = 300;
  double mix_ratio = 0.5;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 8;
  std::size_t max_iters = 2000;
  /// Validation runs every `val_interval` iterations; patience counts iterations.
  std::size_t val_interval = 1;
  double clip_norm = 5.0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Targets by nearest map node (pose metric) for each observation pose.
/// Throws std::invalid_argument when the map or an observation lacks a pose.
Sample make_sim_sample(const std::vector<Observation>& observations, const TopoMap& map, double omega_m);

/// Map built from the sequence itself every `m_stride` samples; observation t
/// targets the node whose stride index is nearest to t (ties to the earlier node).
Sample make_real_like_sample(const std::vector<std::vector<double>>& sequence, std::size_t m_stride);

/// Target node for step t of a stride-built map with `node_count` nodes.
NodeId stride_target(std::size_t t, std::size_t m_stride, std::size_t node_count);

/// Window [start, start + length) of a sample (same map).
Sample window(const Sample& s, std::size_t start, std::size_t length);

/// Samples a submap containing the window's targets, resets the state and
/// returns the mean cross-entropy over the window, recorded on `tape`.
ad::Var sequence_loss(ad::Tape& tape, const LocalizerModel& model, const Sample& sample, const TrainConfig& cfg,
                      std::mt19937_64& rng, Mode mode = Mode::training);

/// Value-only convenience wrapper around sequence_loss.
double sequence_loss_value(const LocalizerModel& model, const Sample& sample, const TrainConfig& cfg,
                           std::uint64_t seed, Mode mode = Mode::eval);

struct HistoryRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainResult {
  LocalizerModel model;  // best-validation parameters
  std::vector<HistoryRow> history;
  double best_val_loss = 0.0;
  std::size_t best_iteration = 0;
  std::size_t iterations = 0;
  std::size_t sim_draws = 0;
  std::size_t real_draws = 0;
};

/// Mini-batch training. Each batch element is a random window drawn from the
/// real_like set with probability mix_ratio, otherwise from the sim set.
/// Gradients are averaged over the batch; Adam uses lr_encoder for encoder
/// parameters and lr_main for the rest. Stops after patience_iters iterations
/// without a new best validation loss (or max_iters) and returns the best model.
TrainResult train(const LocalizerModel& initial, const std::vector<Sample>& sim_set,
                  const std::vector<Sample>& real_set, const std::vector<Sample>& val_set, const TrainConfig& cfg);

/// Validation loss: fixed windows and submap seeds, so it is deterministic for a given model.
double validation_loss(const LocalizerModel& model, const std::vector<Sample>& val_set, const TrainConfig& cfg);

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history);

}  // namespace topoloc
