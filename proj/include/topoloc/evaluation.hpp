#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topoloc/localizer.hpp"
#include "topoloc/simworld.hpp"
#include "topoloc/topo_graph.hpp"

namespace topoloc {

/// A localization method run as a stream over one map.
class Localizer {
 public:
  virtual ~Localizer() = default;
  /// Binds to `map` and clears any temporal state.
  virtual void reset(const TopoMap& map) = 0;
  /// `true_pose` is only consulted by the oracle.
  virtual NodeId step(std::span<const double> observation, const std::optional<Pose2D>& true_pose) = 0;
  virtual std::string name() const = 0;
};

/// Trained network (any variant). The single_frame variant is stateless by construction.
class NetworkLocalizer final : public Localizer {
 public:
  NetworkLocalizer(const LocalizerModel& model, std::string name);
  void reset(const TopoMap& map) override;
  NodeId step(std::span<const double> observation, const std::optional<Pose2D>& true_pose) override;
  std::string name() const override { return name_; }
  const StepResult& last() const { return last_; }

 private:
  const LocalizerModel* model_;
  std::string name_;
  const TopoMap* map_ = nullptr;
  MapEncoding encoding_;
  GCLSTMState state_;
  StepResult last_;
};

class NearestDescriptorLocalizer final : public Localizer {
 public:
  void reset(const TopoMap& map) override { map_ = &map; }
  NodeId step(std::span<const double> observation, const std::optional<Pose2D>& true_pose) override;
  std::string name() const override { return "nearest"; }

 private:
  const TopoMap* map_ = nullptr;
};

/// Ground-truth nearest node by the pose metric.
class OracleLocalizer final : public Localizer {
 public:
  explicit OracleLocalizer(double omega_m) : omega_m_(omega_m) {}
  void reset(const TopoMap& map) override { map_ = &map; }
  NodeId step(std::span<const double> observation, const std::optional<Pose2D>& true_pose) override;
  std::string name() const override { return "oracle"; }

 private:
  double omega_m_;
  const TopoMap* map_ = nullptr;
};

/// argmin of squared descriptor distance; ties go to the smallest index.
NodeId baseline_nearest_descriptor(std::span<const double> observation, const TopoMap& map);

/// Stateless prediction of a single_frame model.
NodeId baseline_single_frame(const LocalizerModel& model, std::span<const double> observation, const TopoMap& map);

/// Same dimensions with the skip path removed.
ModelDims ablation_no_skip(ModelDims dims);

struct LocMetrics {
  std::size_t count = 0;
  double ac = 0.0;
  double ac_star = 0.0;
  std::optional<double> pe;  // absent for pose-less maps
  double me = 0.0;
};

/// AC, AC* (within one undirected edge), PE (gt observation pose vs predicted node pose)
/// and ME (mean undirected hop distance). Unreachable pairs count as map.size() hops.
/// Throws std::invalid_argument on length mismatches.
LocMetrics compute_metrics(const TopoMap& map, std::span<const NodeId> predictions, std::span<const NodeId> targets,
                           std::span<const Pose2D> gt_poses, double omega_m);

/// Runs the localizer from a reset over the whole observation sequence.
std::vector<NodeId> run_localizer(Localizer& localizer, const TopoMap& map,
                                  const std::vector<std::vector<double>>& observations,
                                  const std::vector<std::optional<Pose2D>>& poses);

/// Full evaluation of one sequence: run the localizer, then compute metrics.
LocMetrics eval_run(Localizer& localizer, const TopoMap& map, const std::vector<std::vector<double>>& observations,
                    const std::vector<std::optional<Pose2D>>& poses, std::span<const NodeId> targets, double omega_m);

struct LocReportRow {
  std::string method;
  std::string category;
  LocMetrics metrics;
};

/// Pools rows with the same (method, category), weighting by sample count.
std::vector<LocReportRow> pool_rows(const std::vector<LocReportRow>& rows);

/// Columns: method,category,AC,ACstar,PE,ME. A missing PE is written as "-".
void write_loc_csv(std::ostream& os, const std::vector<LocReportRow>& rows);
void write_loc_table(std::ostream& os, const std::vector<LocReportRow>& rows);

}  // namespace topoloc
