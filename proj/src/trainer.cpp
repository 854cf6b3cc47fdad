#include "topoloc/trainer.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include "topoloc/map_sampler.hpp"

namespace topoloc {

void Sample::validate() const {
  if (observations.empty()) throw std::invalid_argument("Sample: no observations");
  if (observations.size() != targets.size())
    throw std::invalid_argument("Sample: " + std::to_string(observations.size()) + " observations but " +
                                std::to_string(targets.size()) + " targets");
  for (NodeId t : targets) map.check(t);
  for (const auto& o : observations)
    if (o.descriptor.size() != map.descriptor_dim())
      throw std::invalid_argument("Sample: observation dimension differs from map descriptors");
}

void TrainConfig::validate() const {
  if (tau < 1) throw std::invalid_argument("TrainConfig: tau must be >= 1");
  if (n_prime < 1) throw std::invalid_argument("TrainConfig: n_prime must be >= 1");
  if (mix_ratio < 0.0 || mix_ratio > 1.0) throw std::invalid_argument("TrainConfig: mix_ratio must be in [0, 1]");
  if (patience_iters < 1) throw std::invalid_argument("TrainConfig: patience_iters must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (val_interval < 1) throw std::invalid_argument("TrainConfig: val_interval must be >= 1");
  if (jitter < 0.0) throw std::invalid_argument("TrainConfig: jitter must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"tau", c.tau},
          {"n_prime", c.n_prime},
          {"lr_main", c.lr_main},
          {"lr_encoder", c.lr_encoder},
          {"patience_iters", c.patience_iters},
          {"mix_ratio", c.mix_ratio},
          {"jitter", c.jitter},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"max_iters", c.max_iters},
          {"val_interval", c.val_interval},
          {"clip_norm", c.clip_norm}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.tau = j.value("tau", c.tau);
  c.n_prime = j.value("n_prime", c.n_prime);
  c.lr_main = j.value("lr_main", c.lr_main);
  c.lr_encoder = j.value("lr_encoder", c.lr_encoder);
  c.patience_iters = j.value("patience_iters", c.patience_iters);
  c.mix_ratio = j.value("mix_ratio", c.mix_ratio);
  c.jitter = j.value("jitter", c.jitter);
  c.seed = j.value("seed", c.seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.val_interval = j.value("val_interval", c.val_interval);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

Sample make_sim_sample(const std::vector<Observation>& observations, const TopoMap& map, double omega_m) {
  if (!map.has_poses()) throw std::invalid_argument("make_sim_sample: map has no poses");
  Sample s;
  s.map = map;
  s.domain = Domain::sim;
  s.observations = observations;
  for (const auto& o : observations) {
    if (!o.pose) throw std::invalid_argument("make_sim_sample: observation without a pose");
    s.targets.push_back(nearest_node(map, *o.pose, omega_m));
  }
  s.validate();
  return s;
}

NodeId stride_target(std::size_t t, std::size_t m_stride, std::size_t node_count) {
  const std::size_t q = t / m_stride, r = t % m_stride;
  const std::size_t k = 2 * r <= m_stride ? q : q + 1;
  return NodeId{std::min(k, node_count - 1)};
}

Sample make_real_like_sample(const std::vector<std::vector<double>>& sequence, std::size_t m_stride) {
  if (sequence.empty()) throw std::invalid_argument("make_real_like_sample: empty sequence");
  Sample s;
  s.map = build_map_real(sequence, m_stride);
  s.domain = Domain::real_like;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    s.observations.push_back({sequence[t], std::nullopt});
    s.targets.push_back(stride_target(t, m_stride, s.map.size()));
  }
  return s;
}

Sample window(const Sample& s, std::size_t start, std::size_t length) {
  if (start >= s.observations.size()) throw std::invalid_argument("window: start beyond sample");
  const std::size_t end = std::min(s.observations.size(), start + length);
  Sample w;
  w.map = s.map;
  w.domain = s.domain;
  w.observations.assign(s.observations.begin() + start, s.observations.begin() + end);
  w.targets.assign(s.targets.begin() + start, s.targets.begin() + end);
  return w;
}

ad::Var sequence_loss(ad::Tape& tape, const LocalizerModel& model, const Sample& sample, const TrainConfig& cfg,
                      std::mt19937_64& rng, Mode mode) {
  sample.validate();
  const std::size_t distinct = std::set<NodeId>(sample.targets.begin(), sample.targets.end()).size();
  const std::size_t budget = std::max(cfg.n_prime, distinct);
  SubmapResult sub = sample_submap(sample.map, sample.targets, budget, rng());

  const std::size_t d = sample.map.descriptor_dim();
  std::normal_distribution<double> noise(0.0, cfg.jitter);
  const bool jitter = cfg.jitter > 0.0;

  const TopoMap* map = &sub.submap;
  TopoMap jittered;
  if (jitter) {
    std::vector<MapNode> nodes = sub.submap.nodes();
    for (auto& n : nodes)
      for (double& v : n.descriptor) v += noise(rng);
    jittered = TopoMap(std::move(nodes), sub.submap.edges(), sub.submap.config());
    map = &jittered;
  }

  Tensor obs(sample.observations.size(), d);
  for (std::size_t t = 0; t < sample.observations.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) obs(t, j) = sample.observations[t].descriptor[j] + (jitter ? noise(rng) : 0.0);

  std::vector<NodeId> targets;
  targets.reserve(sample.targets.size());
  for (NodeId t : sample.targets) targets.push_back(sub.to_sub(t));
  return window_loss(tape, model, *map, obs, targets, mode);
}

double sequence_loss_value(const LocalizerModel& model, const Sample& sample, const TrainConfig& cfg,
                           std::uint64_t seed, Mode mode) {
  ad::Tape tape;
  std::mt19937_64 rng(seed);
  return sequence_loss(tape, model, sample, cfg, rng, mode).value().item();
}

namespace {

struct Draw {
  const Sample* sample;
  std::size_t start;
  std::uint64_t seed;
};

struct ValWindow {
  const Sample* sample;
  std::size_t start;
  std::uint64_t seed;
};

std::vector<ValWindow> validation_windows(const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  const std::size_t len = cfg.tau + 1;
  std::vector<ValWindow> out;
  for (const auto& s : val_set) {
    for (std::size_t start = 0; start < s.observations.size(); start += len) out.push_back({&s, start, rng()});
  }
  return out;
}

}  // namespace

double validation_loss(const LocalizerModel& model, const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  const auto windows = validation_windows(val_set, cfg);
  if (windows.empty()) throw std::invalid_argument("validation_loss: empty validation set");
  TrainConfig vcfg = cfg;
  vcfg.jitter = 0.0;
  std::vector<double> losses(windows.size());
  const long count = static_cast<long>(windows.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < count; ++k) {
    const auto& w = windows[k];
    losses[k] = sequence_loss_value(model, window(*w.sample, w.start, cfg.tau + 1), vcfg, w.seed, Mode::eval);
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

TrainResult train(const LocalizerModel& initial, const std::vector<Sample>& sim_set,
                  const std::vector<Sample>& real_set, const std::vector<Sample>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
  if (cfg.mix_ratio < 1.0 && sim_set.empty()) throw std::invalid_argument("train: empty sim training set");
  if (cfg.mix_ratio > 0.0 && real_set.empty()) throw std::invalid_argument("train: empty real_like training set");

  LocalizerModel model = initial;
  OptimizerConfig ocfg;
  ocfg.lr_main = cfg.lr_main;
  ocfg.lr_encoder = cfg.lr_encoder;
  ocfg.clip_norm = cfg.clip_norm;
  Optimizer opt(ocfg);
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution pick_real(cfg.mix_ratio);

  TrainResult result{model, {}, std::numeric_limits<double>::infinity(), 0, 0, 0, 0};
  const std::size_t len = cfg.tau + 1;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    std::vector<Draw> draws;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const bool real = cfg.mix_ratio >= 1.0 || (cfg.mix_ratio > 0.0 && pick_real(rng));
      const auto& set = real ? real_set : sim_set;
      (real ? result.real_draws : result.sim_draws)++;
      const Sample& s = set[std::uniform_int_distribution<std::size_t>(0, set.size() - 1)(rng)];
      const std::size_t max_start = s.observations.size() > len ? s.observations.size() - len : 0;
      const std::size_t start = std::uniform_int_distribution<std::size_t>(0, max_start)(rng);
      draws.push_back({&s, start, rng()});
    }

    std::vector<std::vector<Tensor>> grads(draws.size());
    std::vector<double> losses(draws.size());
    std::vector<std::vector<ad::BatchStat>> stats(draws.size());
    const long count = static_cast<long>(draws.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long b = 0; b < count; ++b) {
      ad::Tape tape;
      std::mt19937_64 local(draws[b].seed);
      ad::Var loss = sequence_loss(tape, model, window(*draws[b].sample, draws[b].start, len), cfg, local);
      tape.backward(loss);
      losses[b] = loss.value().item();
      grads[b] = tape.param_grads(model.params());
      stats[b] = tape.batch_stats();
    }
    // Reduce in batch order so results do not depend on the thread count.
    std::vector<Tensor> total = grads[0];
    for (std::size_t b = 1; b < grads.size(); ++b)
      for (std::size_t p = 0; p < total.size(); ++p)
        for (std::size_t j = 0; j < total[p].size(); ++j) total[p][j] += grads[b][p][j];
    const double inv = 1.0 / static_cast<double>(draws.size());
    for (auto& t : total)
      for (std::size_t j = 0; j < t.size(); ++j) t[j] *= inv;
    opt.step(model.params(), total);
    for (const auto& s : stats) model.update_running_stats(s);

    HistoryRow row{it, 0.0, std::nullopt};
    for (double l : losses) row.train_loss += l * inv;
    result.iterations = it;
    if (it % cfg.val_interval == 0 || it == 1) {
      const double v = validation_loss(model, val_set, cfg);
      row.val_loss = v;
      if (v < result.best_val_loss) {
        result.best_val_loss = v;
        result.best_iteration = it;
        result.model = model;
      }
    }
    result.history.push_back(row);
    if (it - result.best_iteration >= cfg.patience_iters) break;
  }
  return result;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& history) {
  os << "iteration,train_loss,val_loss\n";
  for (const auto& r : history) {
    os << r.iteration << ',' << r.train_loss << ',';
    if (r.val_loss) os << *r.val_loss;
    os << '\n';
  }
}

}  // namespace topoloc
