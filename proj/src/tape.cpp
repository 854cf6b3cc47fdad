#include "topoloc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "topoloc/kernels.hpp"

namespace topoloc::ad {

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("Vars from different tapes");
  return *a.tape;
}

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw std::invalid_argument("unbound Var");
  return *a.tape;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Tensor value, Adjoint adjoint) {
  nodes_.push_back({std::move(value), Tensor{}, std::move(adjoint)});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::param(const ParamSet& params, std::size_t index) {
  const auto key = std::make_pair(&params, index);
  if (auto it = param_leaves_.find(key); it != param_leaves_.end()) return Var{this, it->second};
  Var v = push(params[index].value, nullptr);
  param_leaves_.emplace(key, v.id);
  return v;
}

Var Tape::param(const ParamSet& params, const std::string& name) {
  return param(params, params.index_of(name));
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss recorded on another tape");
  if (value(loss.id).size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + value(loss.id).shape_str());
  grad_mut(loss.id)[0] += 1.0;
  // Nodes are appended after their inputs, so descending id is a reverse topological order.
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (n.adjoint && !n.grad.empty()) n.adjoint(*this, k);
  }
}

std::vector<Tensor> Tape::param_grads(const ParamSet& params) const {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = param_leaves_.find({&params, i});
    if (it != param_leaves_.end() && !nodes_[it->second].grad.empty()) {
      out.push_back(nodes_[it->second].grad);
    } else {
      out.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(m, n);
  kernels::gemm_nn(A.data(), B.data(), C.data(), m, k, n);
  return t.push(std::move(C), [ia = a.id, ib = b.id, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    kernels::gemm_nt(g.data(), tp.value(ib).data(), tp.grad_mut(ia).data(), m, n, k);
    kernels::gemm_tn(tp.value(ia).data(), g.data(), tp.grad_mut(ib).data(), k, m, n);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Tensor y = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  return t.push(std::move(y), [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    for (std::size_t id : {ia, ib}) {
      Tensor& d = tp.grad_mut(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var add_row(Var x, Var r) {
  Tape& t = tape_of(x, r);
  const Tensor& X = x.value();
  const Tensor& R = r.value();
  if (R.rows() != 1 || R.cols() != X.cols()) shape_error("add_row", X, R);
  Tensor y = X;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += R[j];
  return t.push(std::move(y), [ix = x.id, ir = r.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    Tensor& dr = tp.grad_mut(ir);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dr[j] += g(i, j);
  });
}

Var mul_row(Var x, Var w) {
  Tape& t = tape_of(x, w);
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  if (W.rows() != 1 || W.cols() != X.cols()) shape_error("mul_row", X, W);
  Tensor y = X;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) *= W[j];
  return t.push(std::move(y), [ix = x.id, iw = w.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Xv = tp.value(ix);
    const Tensor& Wv = tp.value(iw);
    Tensor& dx = tp.grad_mut(ix);
    Tensor& dw = tp.grad_mut(iw);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        dx(i, j) += g(i, j) * Wv[j];
        dw[j] += g(i, j) * Xv(i, j);
      }
  });
}

Var scale(Var x, double s) {
  Tape& t = tape_of(x);
  Tensor y = map(x.value(), [s](double v) { return v * s; });
  return t.push(std::move(y), [ix = x.id, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += s * g[i];
  });
}

Var mul_scalar(Var x, Var s) {
  Tape& t = tape_of(x, s);
  if (s.value().size() != 1) shape_error("mul_scalar", x.value(), s.value());
  const double sv = s.value()[0];
  Tensor y = map(x.value(), [sv](double v) { return v * sv; });
  return t.push(std::move(y), [ix = x.id, is = s.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Xv = tp.value(ix);
    const double sv = tp.value(is)[0];
    Tensor& dx = tp.grad_mut(ix);
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dx[i] += sv * g[i];
      acc += g[i] * Xv[i];
    }
    tp.grad_mut(is)[0] += acc;
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (!A.same_shape(B)) shape_error("hadamard", A, B);
  Tensor y(A.rows(), A.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = A[i] * B[i];
  return t.push(std::move(y), [ia = a.id, ib = b.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Av = tp.value(ia);
    const Tensor& Bv = tp.value(ib);
    {
      Tensor& da = tp.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * Bv[i];
    }
    Tensor& db = tp.grad_mut(ib);
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * Av[i];
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rows() != B.rows()) shape_error("concat_cols", A, B);
  const std::size_t ca = A.cols(), cb = B.cols();
  Tensor y(A.rows(), ca + cb);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) y(i, j) = A(i, j);
    for (std::size_t j = 0; j < cb; ++j) y(i, ca + j) = B(i, j);
  }
  return t.push(std::move(y), [ia = a.id, ib = b.id, ca, cb](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& da = tp.grad_mut(ia);
    Tensor& db = tp.grad_mut(ib);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < ca; ++j) da(i, j) += g(i, j);
      for (std::size_t j = 0; j < cb; ++j) db(i, j) += g(i, ca + j);
    }
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  if (begin + count > X.cols())
    throw std::invalid_argument("slice_cols: range exceeds " + X.shape_str());
  Tensor y(X.rows(), count);
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) y(i, j) = X(i, begin + j);
  return t.push(std::move(y), [ix = x.id, begin](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx(i, begin + j) += g(i, j);
  });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  if (begin + count > X.rows())
    throw std::invalid_argument("slice_rows: range exceeds " + X.shape_str());
  const std::size_t c = X.cols();
  std::vector<double> d(X.data().begin() + begin * c, X.data().begin() + (begin + count) * c);
  return t.push(Tensor(count, c, std::move(d)), [ix = x.id, begin, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[begin * c + i] += g[i];
  });
}

Var transpose(Var x) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  Tensor y(X.cols(), X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) y(j, i) = X(i, j);
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx(j, i) += g(i, j);
  });
}

Var sum_rows(Var x) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  Tensor y(1, X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) y[j] += X(i, j);
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < dx.rows(); ++i)
      for (std::size_t j = 0; j < dx.cols(); ++j) dx(i, j) += g[j];
  });
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t.push(Tensor::scalar(s), [ix = x.id](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
  });
}

Var sigmoid(Var x) {
  Tape& t = tape_of(x);
  Tensor y = map(x.value(), [](double v) {
    // Split by sign so exp never overflows.
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * Y[i] * (1.0 - Y[i]);
  });
}

Var tanh(Var x) {
  Tape& t = tape_of(x);
  Tensor y = map(x.value(), [](double v) { return std::tanh(v); });
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - Y[i] * Y[i]);
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Tensor y = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& X = tp.value(ix);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (X[i] > 0.0) dx[i] += g[i];
  });
}

Var softmax_rows(Var x) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  Tensor y(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    auto in = X.row_span(i);
    auto out = y.row_span(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) z += out[j] = std::exp(in[j] - mx);
    for (double& v : out) v /= z;
  }
  return t.push(std::move(y), [ix = x.id](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const Tensor& Y = tp.value(self);
    Tensor& dx = tp.grad_mut(ix);
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < Y.cols(); ++j) dot += g(i, j) * Y(i, j);
      for (std::size_t j = 0; j < Y.cols(); ++j) dx(i, j) += Y(i, j) * (g(i, j) - dot);
    }
  });
}

Var cross_entropy(Var logits, std::size_t target) {
  Tape& t = tape_of(logits);
  const Tensor& L = logits.value();
  if (L.rows() != 1) throw std::invalid_argument("cross_entropy: logits must be one row, got " + L.shape_str());
  if (target >= L.cols())
    throw std::invalid_argument("cross_entropy: target " + std::to_string(target) +
                                " out of range for " + std::to_string(L.cols()) + " classes");
  const double mx = *std::max_element(L.data().begin(), L.data().end());
  double z = 0.0;
  for (double v : L.data()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return t.push(Tensor::scalar(lse - L[target]), [il = logits.id, target, lse](Tape& tp, std::size_t self) {
    const double g = tp.out_grad(self)[0];
    const Tensor& Lv = tp.value(il);
    Tensor& dl = tp.grad_mut(il);
    for (std::size_t j = 0; j < Lv.size(); ++j) dl[j] += g * std::exp(Lv[j] - lse);
    dl[target] -= g;
  });
}

Var neighbor_sum(Var x, std::shared_ptr<const Adjacency> adjacency) {
  Tape& t = tape_of(x);
  const Tensor& X = x.value();
  if (adjacency->size() != X.rows())
    throw std::invalid_argument("neighbor_sum: adjacency has " + std::to_string(adjacency->size()) +
                                " nodes, features " + X.shape_str());
  for (const auto& nb : *adjacency)
    for (std::size_t j : nb)
      if (j >= X.rows()) throw std::invalid_argument("neighbor_sum: neighbor index out of range");
  Tensor y(X.rows(), X.cols());
  kernels::neighbor_sum(X.data(), *adjacency, y.data(), X.cols());
  return t.push(std::move(y), [ix = x.id, adjacency](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < adjacency->size(); ++i)
      for (std::size_t j : (*adjacency)[i])
        for (std::size_t q = 0; q < d; ++q) dx(j, q) += g(i, q);
  });
}

Var batch_norm(Var x, const BatchNormRef& ref, bool training, double eps) {
  Tape& t = tape_of(x);
  const Tensor X = x.value();  // copy: registering gamma/beta below may reallocate the node list
  const ParamSet& ps = *ref.params;
  const std::size_t n = X.rows(), d = X.cols();
  if (ps[ref.gamma].value.cols() != d) shape_error("batch_norm", X, ps[ref.gamma].value);
  Var gamma = t.param(ps, ref.gamma);
  Var beta = t.param(ps, ref.beta);

  Tensor mean(1, d), var(1, d);
  if (training) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += X(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = X(i, j) - mean[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(n);
    t.record_batch_stat({ref.running_mean, ref.running_var, mean, var});
  } else {
    mean = ps[ref.running_mean].value;
    var = ps[ref.running_var].value;
  }
  Tensor inv_std(1, d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  Tensor xhat(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xhat(i, j) = (X(i, j) - mean[j]) * inv_std[j];

  Var normalized = t.push(xhat, [ix = x.id, xhat, inv_std, training](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    Tensor& dx = tp.grad_mut(ix);
    const std::size_t rows = g.rows(), cols = g.cols();
    if (!training) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) dx(i, j) += g(i, j) * inv_std[j];
      return;
    }
    const double inv_n = 1.0 / static_cast<double>(rows);
    for (std::size_t j = 0; j < cols; ++j) {
      double sg = 0.0, sgx = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        sg += g(i, j);
        sgx += g(i, j) * xhat(i, j);
      }
      for (std::size_t i = 0; i < rows; ++i)
        dx(i, j) += inv_std[j] * (g(i, j) - inv_n * sg - xhat(i, j) * inv_n * sgx);
    }
  });
  return add_row(mul_row(normalized, gamma), beta);
}

}  // namespace topoloc::ad
