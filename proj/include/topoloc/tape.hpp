#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "topoloc/params.hpp"
#include "topoloc/tensor.hpp"

namespace topoloc::ad {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Adjacency lists shared between the forward record and its adjoint.
using Adjacency = std::vector<std::vector<std::size_t>>;

/// Batch statistics observed by a training-mode batch_norm, keyed by the
/// running-mean parameter index so callers can fold them into running stats.
struct BatchStat {
  std::size_t running_mean_index;
  std::size_t running_var_index;
  Tensor mean;
  Tensor var;
};

/// Records primal operations and replays their adjoints in reverse order.
/// Single-threaded; separate tapes may be used concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to parameter `index` of `params`; repeated calls return the same leaf.
  Var param(const ParamSet& params, std::size_t index);
  Var param(const ParamSet& params, const std::string& name);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  /// Throws std::invalid_argument for a non-scalar loss.
  void backward(Var loss);

  /// Gradient w.r.t. each parameter of `params` (zeros for parameters not on the path).
  std::vector<Tensor> param_grads(const ParamSet& params) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Accumulated adjoint of node `id`; empty before backward reaches it.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  void record_batch_stat(BatchStat s) { batch_stats_.push_back(std::move(s)); }
  const std::vector<BatchStat>& batch_stats() const { return batch_stats_; }

  // Used by primitive implementations.
  using Adjoint = std::function<void(Tape&, std::size_t self)>;
  Var push(Tensor value, Adjoint adjoint);
  Tensor& grad_mut(std::size_t id);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Adjoint adjoint;
  };
  std::vector<Node> nodes_;
  std::map<std::pair<const ParamSet*, std::size_t>, std::size_t> param_leaves_;
  std::vector<BatchStat> batch_stats_;
};

// Primitives. Each throws std::invalid_argument on shape mismatch.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x[n x d] + r[1 x d] broadcast over rows.
Var add_row(Var x, Var r);
/// x[n x d] (.) w[1 x d] broadcast over rows.
Var mul_row(Var x, Var w);
Var scale(Var x, double s);
/// x * s for a 1x1 Var s.
Var mul_scalar(Var x, Var s);
Var hadamard(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
Var transpose(Var x);
/// Column sums: [n x d] -> [1 x d].
Var sum_rows(Var x);
/// Sum of all entries -> 1x1.
Var sum_all(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var softmax_rows(Var x);
/// -log softmax(logits)[target] for a single-row logits tensor; returns 1x1.
Var cross_entropy(Var logits, std::size_t target);
/// out[i] = sum_{j in adjacency[i]} x[j].
Var neighbor_sum(Var x, std::shared_ptr<const Adjacency> adjacency);

/// Per-column normalization over the row (batch) dimension, then gamma/beta affine.
/// Training mode uses the batch statistics and records them on the tape; evaluation
/// mode uses the running statistics stored in `params`.
struct BatchNormRef {
  const ParamSet* params = nullptr;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;
};
Var batch_norm(Var x, const BatchNormRef& ref, bool training, double eps = 1e-5);

}  // namespace topoloc::ad
