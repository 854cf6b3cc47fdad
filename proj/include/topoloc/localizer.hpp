#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topoloc/params.hpp"
#include "topoloc/tape.hpp"
#include "topoloc/topo_graph.hpp"

namespace topoloc {

/// Which network is assembled from the shared building blocks.
enum class Variant {
  full,          // GCLSTM + skip path
  no_skip,       // GCLSTM only feeds the identification head
  single_frame,  // GCLSTM replaced by per-node FC layers, no recurrence
};

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelDims {
  std::size_t d_obs = 16;
  std::size_t d_emb = 16;
  std::size_t d_x = 16;
  std::size_t d_h = 32;
  std::size_t d_skip = 16;
  std::size_t enc_hidden = 32;
  std::size_t pair_hidden = 32;
  std::size_t gin_hidden = 32;
  std::size_t head_hidden = 32;
  Variant variant = Variant::full;
  /// Batch normalization over the node dimension after per-node hidden FC layers.
  bool batch_norm = false;

  void validate() const;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

nlohmann::json dims_to_json(const ModelDims& d);
ModelDims dims_from_json(const nlohmann::json& j);

/// Fully connected layer y = x W + b, optionally followed by batch norm, then an activation.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::optional<ad::BatchNormRef> bn;
  bool relu = true;
};

/// Graph isomorphism aggregation: MLP((1 + eps) x_i + sum_{j in N(i)} x_j), two FC layers.
struct GinLayer {
  std::size_t eps = 0;
  Dense hidden;
  Dense out;
};

/// Parameter indices for the whole localizer; which members are used depends on the variant.
struct LocalizerLayout {
  std::vector<Dense> encoder;       // 3 layers, d_obs -> d_emb
  std::size_t pair_current = 0;     // d_emb x pair_hidden, applied to the current embedding
  std::size_t pair_node = 0;        // d_emb x pair_hidden, applied to node embeddings
  Dense pair_first;                 // bias / bn / activation of the first pair layer
  Dense pair_second;                // pair_hidden -> d_x
  std::vector<GinLayer> gins;       // G_1..G_8
  std::size_t w_ci = 0, w_cf = 0, w_co = 0;
  std::size_t b_i = 0, b_f = 0, b_c = 0, b_o = 0;
  std::vector<Dense> frame;         // single-frame replacement of the recurrent layer
  std::optional<Dense> skip;
  Dense head_hidden;
  Dense head_out;
};

class LocalizerModel {
 public:
  /// Glorot-initialized weights, zero biases, eps = 0, forget bias 1.
  static LocalizerModel create(const ModelDims& dims, std::uint64_t seed);
  /// Every parameter zero (batch-norm scales 1, running variances 1).
  static LocalizerModel zeros(const ModelDims& dims);
  /// Rebinds a checkpointed ParamSet; throws if names or shapes do not match `dims`.
  static LocalizerModel from_params(const ModelDims& dims, ParamSet params);

  const ModelDims& dims() const { return dims_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  const LocalizerLayout& layout() const { return layout_; }

  /// Folds training-mode batch statistics into the running statistics.
  void update_running_stats(const std::vector<ad::BatchStat>& stats, double momentum = 0.1);

 private:
  LocalizerModel(ModelDims dims, ParamSet params, LocalizerLayout layout);
  ModelDims dims_;
  ParamSet params_;
  LocalizerLayout layout_;
};

/// Builds the parameter registry and layout for `dims`, drawing weights from `rng`.
std::pair<ParamSet, LocalizerLayout> build_parameters(const ModelDims& dims, std::mt19937_64& rng);

Dense add_dense(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, bool relu, bool bn,
                ParamGroup group, std::mt19937_64& rng);
GinLayer add_gin(ParamSet& ps, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                 std::size_t d_out, bool bn, std::mt19937_64& rng);

enum class Mode { training, eval };

// Tape-level building blocks. `x` rows are nodes unless stated otherwise.

ad::Var apply_dense(ad::Tape& tape, const ParamSet& ps, const Dense& layer, ad::Var x, Mode mode);

/// descriptors [rows x d_obs] -> embeddings [rows x d_emb].
ad::Var encode(ad::Tape& tape, const LocalizerModel& model, ad::Var descriptors, Mode mode);

/// Node half of the first pair layer, node_embs * W_node. Constant across steps for one map.
ad::Var pair_node_term(ad::Tape& tape, const LocalizerModel& model, ad::Var node_embs);

/// Pair features x_t [n x d_x] from the current embedding [1 x d_emb]. Equivalent to a shared FC
/// applied to each concatenated (current, node) row.
ad::Var pair_features(ad::Tape& tape, const LocalizerModel& model, ad::Var current_emb, ad::Var node_term,
                      Mode mode);

ad::Var gin_aggregate(ad::Tape& tape, const ParamSet& ps, const GinLayer& gin, ad::Var x,
                      std::shared_ptr<const AdjacencyList> adjacency, Mode mode);

struct GclstmOutput {
  ad::Var h;
  ad::Var c;
  ad::Var input_gate;
  ad::Var forget_gate;
  ad::Var output_gate;
};

ad::Var zero_state(ad::Tape& tape, std::size_t n, std::size_t d_h);

GclstmOutput gclstm_step(ad::Tape& tape, const LocalizerModel& model, ad::Var x,
                         std::shared_ptr<const AdjacencyList> adjacency, ad::Var h_prev, ad::Var c_prev,
                         Mode mode);

/// Per-node FC bypassing the recurrent layer: [n x d_x] -> [n x d_skip].
ad::Var skip_path(ad::Tape& tape, const LocalizerModel& model, ad::Var x, Mode mode);

/// Single-frame replacement for the recurrent layer: [n x d_x] -> [n x d_h].
ad::Var frame_layers(ad::Tape& tape, const LocalizerModel& model, ad::Var x, Mode mode);

/// Per-node likelihoods as one row [1 x n]; `skip` is ignored by the no_skip variant.
ad::Var identify_logits(ad::Tape& tape, const LocalizerModel& model, ad::Var h, std::optional<ad::Var> skip,
                        Mode mode);

struct StepVars {
  ad::Var logits;  // [1 x n]
  ad::Var h;
  ad::Var c;
};

/// One full step on a tape: pair features -> {recurrent layer, skip} -> identification logits.
StepVars forward_step(ad::Tape& tape, const LocalizerModel& model, ad::Var current_emb, ad::Var node_term,
                      std::shared_ptr<const AdjacencyList> adjacency, ad::Var h_prev, ad::Var c_prev, Mode mode);

/// Mean cross-entropy of a whole observation window on one tape.
/// observations: [T x d_obs]; targets index nodes of `map`.
ad::Var window_loss(ad::Tape& tape, const LocalizerModel& model, const TopoMap& map, const Tensor& observations,
                    const std::vector<NodeId>& targets, Mode mode);

// Inference API (values only, one fresh tape per call).

struct GCLSTMState {
  Tensor h;  // [n x d_h]
  Tensor c;  // [n x d_h]
};

GCLSTMState reset_state(std::size_t n, std::size_t d_h);

/// Node embeddings of a map, computed once and reused across steps.
struct MapEncoding {
  Tensor node_embeddings;  // [n x d_emb]
};

MapEncoding encode_map(const LocalizerModel& model, const TopoMap& map);

struct StepResult {
  Tensor probabilities;  // [1 x n], sums to 1
  NodeId predicted;
  GCLSTMState state;
};

/// Index of the largest entry; ties go to the smallest index.
NodeId argmax_node(std::span<const double> values);

/// encode -> pair features -> recurrent/skip -> identify, for one observation.
/// A state whose row count differs from the map is rejected; pass reset_state for a fresh stream.
StepResult localize_step(const LocalizerModel& model, const GCLSTMState& state, std::span<const double> observation,
                         const TopoMap& map, const MapEncoding* encoding = nullptr);

/// Stateful localization stream bound to one map.
class LocalizerStream {
 public:
  LocalizerStream(const LocalizerModel& model, const TopoMap& map);
  void reset();
  const StepResult& step(std::span<const double> observation);
  const GCLSTMState& state() const { return state_; }

 private:
  const LocalizerModel* model_;
  const TopoMap* map_;
  MapEncoding encoding_;
  GCLSTMState state_;
  StepResult last_;
};

}  // namespace topoloc
