#include "topoloc/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace topoloc {

NetworkLocalizer::NetworkLocalizer(const LocalizerModel& model, std::string name)
    : model_(&model), name_(std::move(name)) {}

void NetworkLocalizer::reset(const TopoMap& map) {
  if (map_ != &map) encoding_ = encode_map(*model_, map);
  map_ = &map;
  state_ = reset_state(map.size(), model_->dims().d_h);
}

NodeId NetworkLocalizer::step(std::span<const double> observation, const std::optional<Pose2D>&) {
  if (map_ == nullptr) throw std::logic_error("NetworkLocalizer::step before reset");
  last_ = localize_step(*model_, state_, observation, *map_, &encoding_);
  state_ = last_.state;
  return last_.predicted;
}

NodeId NearestDescriptorLocalizer::step(std::span<const double> observation, const std::optional<Pose2D>&) {
  if (map_ == nullptr) throw std::logic_error("NearestDescriptorLocalizer::step before reset");
  return baseline_nearest_descriptor(observation, *map_);
}

NodeId OracleLocalizer::step(std::span<const double>, const std::optional<Pose2D>& true_pose) {
  if (map_ == nullptr) throw std::logic_error("OracleLocalizer::step before reset");
  if (!true_pose) throw std::invalid_argument("oracle localizer needs the true pose");
  return nearest_node(*map_, *true_pose, omega_m_);
}

NodeId baseline_nearest_descriptor(std::span<const double> observation, const TopoMap& map) {
  if (map.empty()) throw std::invalid_argument("nearest descriptor: empty map");
  if (observation.size() != map.descriptor_dim())
    throw std::invalid_argument("nearest descriptor: observation dimension " + std::to_string(observation.size()) +
                                " != map descriptor dimension " + std::to_string(map.descriptor_dim()));
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& d = map.nodes()[i].descriptor;
    double s = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) s += (observation[j] - d[j]) * (observation[j] - d[j]);
    if (i == 0 || s < best_d) {
      best_d = s;
      best = i;
    }
  }
  return NodeId{best};
}

NodeId baseline_single_frame(const LocalizerModel& model, std::span<const double> observation, const TopoMap& map) {
  if (model.dims().variant != Variant::single_frame)
    throw std::invalid_argument("baseline_single_frame: model is not a single_frame variant");
  return localize_step(model, reset_state(map.size(), model.dims().d_h), observation, map).predicted;
}

ModelDims ablation_no_skip(ModelDims dims) {
  dims.variant = Variant::no_skip;
  return dims;
}

LocMetrics compute_metrics(const TopoMap& map, std::span<const NodeId> predictions, std::span<const NodeId> targets,
                           std::span<const Pose2D> gt_poses, double omega_m) {
  if (predictions.size() != targets.size())
    throw std::invalid_argument("eval: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  const bool with_pe = map.has_poses() && !gt_poses.empty();
  if (with_pe && gt_poses.size() != targets.size())
    throw std::invalid_argument("eval: pose count does not match targets");
  LocMetrics m;
  m.count = targets.size();
  if (m.count == 0) return m;
  const auto dist = all_edge_distances(map);
  double pe = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    map.check(predictions[t]);
    map.check(targets[t]);
    std::size_t hops = dist[predictions[t].index][targets[t].index];
    if (hops == kUnreachable) hops = map.size();
    m.ac += predictions[t] == targets[t] ? 1.0 : 0.0;
    m.ac_star += hops <= 1 ? 1.0 : 0.0;
    m.me += static_cast<double>(hops);
    if (with_pe) pe += pose_distance(gt_poses[t], map.pose(predictions[t]), omega_m);
  }
  const double n = static_cast<double>(m.count);
  m.ac /= n;
  m.ac_star /= n;
  m.me /= n;
  if (with_pe) m.pe = pe / n;
  return m;
}

std::vector<NodeId> run_localizer(Localizer& localizer, const TopoMap& map,
                                  const std::vector<std::vector<double>>& observations,
                                  const std::vector<std::optional<Pose2D>>& poses) {
  if (!poses.empty() && poses.size() != observations.size())
    throw std::invalid_argument("run_localizer: pose count does not match observations");
  localizer.reset(map);
  std::vector<NodeId> out;
  out.reserve(observations.size());
  for (std::size_t t = 0; t < observations.size(); ++t)
    out.push_back(localizer.step(observations[t], poses.empty() ? std::nullopt : poses[t]));
  return out;
}

LocMetrics eval_run(Localizer& localizer, const TopoMap& map, const std::vector<std::vector<double>>& observations,
                    const std::vector<std::optional<Pose2D>>& poses, std::span<const NodeId> targets, double omega_m) {
  if (observations.size() != targets.size())
    throw std::invalid_argument("eval_run: " + std::to_string(observations.size()) + " observations vs " +
                                std::to_string(targets.size()) + " targets");
  const auto preds = run_localizer(localizer, map, observations, poses);
  std::vector<Pose2D> gt;
  if (map.has_poses() && !poses.empty() && std::all_of(poses.begin(), poses.end(), [](const auto& p) { return p.has_value(); }))
    for (const auto& p : poses) gt.push_back(*p);
  return compute_metrics(map, preds, targets, gt, omega_m);
}

std::vector<LocReportRow> pool_rows(const std::vector<LocReportRow>& rows) {
  std::vector<LocReportRow> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const LocReportRow& o) { return o.method == r.method && o.category == r.category; });
    if (it == out.end()) {
      out.push_back(r);
      continue;
    }
    LocMetrics& a = it->metrics;
    const LocMetrics& b = r.metrics;
    const double na = static_cast<double>(a.count), nb = static_cast<double>(b.count);
    if (na + nb == 0) continue;
    auto mix = [&](double x, double y) { return (x * na + y * nb) / (na + nb); };
    a.ac = mix(a.ac, b.ac);
    a.ac_star = mix(a.ac_star, b.ac_star);
    a.me = mix(a.me, b.me);
    if (a.pe && b.pe) {
      a.pe = mix(*a.pe, *b.pe);
    } else if (b.pe && na == 0) {
      a.pe = b.pe;
    } else if (!b.pe && nb > 0) {
      a.pe.reset();
    }
    a.count += b.count;
  }
  return out;
}

void write_loc_csv(std::ostream& os, const std::vector<LocReportRow>& rows) {
  os << "method,category,AC,ACstar,PE,ME\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::string pe = "-";
    if (m.pe) {
      std::snprintf(buf, sizeof buf, "%.6f", *m.pe);
      pe = buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%s,%.6f\n", r.method.c_str(), r.category.c_str(), m.ac,
                  m.ac_star, pe.c_str(), m.me);
    os << buf;
  }
}

void write_loc_table(std::ostream& os, const std::vector<LocReportRow>& rows) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %-16s %7s %7s %7s %7s %6s\n", "method", "category", "AC", "AC*", "PE", "ME",
                "n");
  os << buf;
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    char pe[32] = "-";
    if (m.pe) std::snprintf(pe, sizeof pe, "%.3f", *m.pe);
    std::snprintf(buf, sizeof buf, "%-14s %-16s %7.3f %7.3f %7s %7.3f %6zu\n", r.method.c_str(), r.category.c_str(),
                  m.ac, m.ac_star, pe, m.me, m.count);
    os << buf;
  }
}

}  // namespace topoloc
