#include "topoloc/localizer.hpp"

#include <stdexcept>

namespace topoloc {

using ad::Tape;
using ad::Var;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_skip: return "no_skip";
    case Variant::single_frame: return "single_frame";
  }
  return "full";
}

Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_skip") return Variant::no_skip;
  if (s == "single_frame") return Variant::single_frame;
  throw std::invalid_argument("unknown model variant '" + s + "'");
}

void ModelDims::validate() const {
  for (std::size_t v : {d_obs, d_emb, d_x, d_h, d_skip, enc_hidden, pair_hidden, gin_hidden, head_hidden})
    if (v == 0) throw std::invalid_argument("ModelDims: all dimensions must be positive");
}

nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"d_obs", d.d_obs},           {"d_emb", d.d_emb},
          {"d_x", d.d_x},               {"d_h", d.d_h},
          {"d_skip", d.d_skip},         {"enc_hidden", d.enc_hidden},
          {"pair_hidden", d.pair_hidden}, {"gin_hidden", d.gin_hidden},
          {"head_hidden", d.head_hidden}, {"variant", to_string(d.variant)},
          {"batch_norm", d.batch_norm}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.d_obs = j.value("d_obs", d.d_obs);
  d.d_emb = j.value("d_emb", d.d_emb);
  d.d_x = j.value("d_x", d.d_x);
  d.d_h = j.value("d_h", d.d_h);
  d.d_skip = j.value("d_skip", d.d_skip);
  d.enc_hidden = j.value("enc_hidden", d.enc_hidden);
  d.pair_hidden = j.value("pair_hidden", d.pair_hidden);
  d.gin_hidden = j.value("gin_hidden", d.gin_hidden);
  d.head_hidden = j.value("head_hidden", d.head_hidden);
  d.variant = variant_from_string(j.value("variant", std::string("full")));
  d.batch_norm = j.value("batch_norm", false);
  d.validate();
  return d;
}

Dense add_dense(ParamSet& ps, const std::string& prefix, std::size_t in, std::size_t out, bool relu, bool bn,
                ParamGroup group, std::mt19937_64& rng) {
  Dense d;
  d.weight = ps.add(prefix + ".w", glorot_uniform(in, out, rng), group);
  d.bias = ps.add(prefix + ".b", Tensor(1, out), group);
  d.relu = relu;
  if (bn) {
    ad::BatchNormRef ref;
    ref.params = nullptr;  // bound at use time
    ref.gamma = ps.add(prefix + ".bn.gamma", Tensor(1, out, 1.0), group);
    ref.beta = ps.add(prefix + ".bn.beta", Tensor(1, out), group);
    ref.running_mean = ps.add(prefix + ".bn.mean", Tensor(1, out), ParamGroup::buffer);
    ref.running_var = ps.add(prefix + ".bn.var", Tensor(1, out, 1.0), ParamGroup::buffer);
    d.bn = ref;
  }
  return d;
}

GinLayer add_gin(ParamSet& ps, const std::string& prefix, std::size_t d_in, std::size_t d_hidden,
                 std::size_t d_out, bool bn, std::mt19937_64& rng) {
  GinLayer g;
  g.eps = ps.add(prefix + ".eps", Tensor(1, 1));
  g.hidden = add_dense(ps, prefix + ".l0", d_in, d_hidden, true, bn, ParamGroup::main, rng);
  g.out = add_dense(ps, prefix + ".l1", d_hidden, d_out, false, false, ParamGroup::main, rng);
  return g;
}

std::pair<ParamSet, LocalizerLayout> build_parameters(const ModelDims& dims, std::mt19937_64& rng) {
  dims.validate();
  ParamSet ps;
  LocalizerLayout L;
  const bool bn = dims.batch_norm;
  const auto enc = ParamGroup::encoder;
  L.encoder.push_back(add_dense(ps, "encoder.l0", dims.d_obs, dims.enc_hidden, true, false, enc, rng));
  L.encoder.push_back(add_dense(ps, "encoder.l1", dims.enc_hidden, dims.enc_hidden, true, false, enc, rng));
  L.encoder.push_back(add_dense(ps, "encoder.l2", dims.enc_hidden, dims.d_emb, false, false, enc, rng));

  // The first pair layer acts on concat(current, node); its weight is stored as the
  // two row blocks so the node half can be computed once per map.
  {
    Tensor w = glorot_uniform(2 * dims.d_emb, dims.pair_hidden, rng);
    Tensor top(dims.d_emb, dims.pair_hidden), bottom(dims.d_emb, dims.pair_hidden);
    for (std::size_t i = 0; i < dims.d_emb; ++i)
      for (std::size_t j = 0; j < dims.pair_hidden; ++j) {
        top(i, j) = w(i, j);
        bottom(i, j) = w(dims.d_emb + i, j);
      }
    L.pair_current = ps.add("pair.l0.w_current", std::move(top));
    L.pair_node = ps.add("pair.l0.w_node", std::move(bottom));
    L.pair_first.bias = ps.add("pair.l0.b", Tensor(1, dims.pair_hidden));
    L.pair_first.relu = true;
    if (bn) {
      ad::BatchNormRef ref;
      ref.gamma = ps.add("pair.l0.bn.gamma", Tensor(1, dims.pair_hidden, 1.0));
      ref.beta = ps.add("pair.l0.bn.beta", Tensor(1, dims.pair_hidden));
      ref.running_mean = ps.add("pair.l0.bn.mean", Tensor(1, dims.pair_hidden), ParamGroup::buffer);
      ref.running_var = ps.add("pair.l0.bn.var", Tensor(1, dims.pair_hidden, 1.0), ParamGroup::buffer);
      L.pair_first.bn = ref;
    }
  }
  L.pair_second = add_dense(ps, "pair.l1", dims.pair_hidden, dims.d_x, true, bn, ParamGroup::main, rng);

  if (dims.variant == Variant::single_frame) {
    L.frame.push_back(add_dense(ps, "frame.l0", dims.d_x, dims.d_h, true, bn, ParamGroup::main, rng));
    L.frame.push_back(add_dense(ps, "frame.l1", dims.d_h, dims.d_h, true, bn, ParamGroup::main, rng));
  } else {
    for (int k = 1; k <= 8; ++k) {
      // Odd slots read x_t, even slots read h_{t-1}.
      const std::size_t d_in = (k % 2 == 1) ? dims.d_x : dims.d_h;
      L.gins.push_back(add_gin(ps, "gclstm.gin" + std::to_string(k), d_in, dims.gin_hidden, dims.d_h, bn, rng));
    }
    L.w_ci = ps.add("gclstm.w_ci", Tensor(1, dims.d_h));
    L.w_cf = ps.add("gclstm.w_cf", Tensor(1, dims.d_h));
    L.w_co = ps.add("gclstm.w_co", Tensor(1, dims.d_h));
    L.b_i = ps.add("gclstm.b_i", Tensor(1, dims.d_h));
    L.b_f = ps.add("gclstm.b_f", Tensor(1, dims.d_h, 1.0));
    L.b_c = ps.add("gclstm.b_c", Tensor(1, dims.d_h));
    L.b_o = ps.add("gclstm.b_o", Tensor(1, dims.d_h));
  }

  std::size_t head_in = dims.d_h;
  if (dims.variant != Variant::no_skip) {
    L.skip = add_dense(ps, "skip", dims.d_x, dims.d_skip, true, bn, ParamGroup::main, rng);
    head_in += dims.d_skip;
  }
  L.head_hidden = add_dense(ps, "head.l0", head_in, dims.head_hidden, true, bn, ParamGroup::main, rng);
  L.head_out = add_dense(ps, "head.l1", dims.head_hidden, 1, false, false, ParamGroup::main, rng);
  return {std::move(ps), std::move(L)};
}

LocalizerModel::LocalizerModel(ModelDims dims, ParamSet params, LocalizerLayout layout)
    : dims_(dims), params_(std::move(params)), layout_(std::move(layout)) {}

LocalizerModel LocalizerModel::create(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto [ps, layout] = build_parameters(dims, rng);
  return LocalizerModel(dims, std::move(ps), std::move(layout));
}

LocalizerModel LocalizerModel::zeros(const ModelDims& dims) {
  LocalizerModel m = create(dims, 0);
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    Param& p = m.params_[i];
    const bool unit = p.name.ends_with(".bn.gamma") || p.name.ends_with(".bn.var");
    p.value.fill(unit ? 1.0 : 0.0);
  }
  return m;
}

LocalizerModel LocalizerModel::from_params(const ModelDims& dims, ParamSet params) {
  LocalizerModel m = create(dims, 0);
  if (params.size() != m.params_.size())
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                                std::to_string(m.params_.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != m.params_[i].name || !params[i].value.same_shape(m.params_[i].value))
      throw std::invalid_argument("checkpoint parameter '" + params[i].name + "' " + params[i].value.shape_str() +
                                  " does not match model parameter '" + m.params_[i].name + "' " +
                                  m.params_[i].value.shape_str());
  }
  m.params_ = std::move(params);
  return m;
}

void LocalizerModel::update_running_stats(const std::vector<ad::BatchStat>& stats, double momentum) {
  for (const auto& s : stats) {
    Tensor& rm = params_[s.running_mean_index].value;
    Tensor& rv = params_[s.running_var_index].value;
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = (1.0 - momentum) * rm[j] + momentum * s.mean[j];
      rv[j] = (1.0 - momentum) * rv[j] + momentum * s.var[j];
    }
  }
}

namespace {

Var finish_dense(Tape&, const ParamSet& ps, const Dense& layer, Var pre, Mode mode) {
  Var y = pre;
  if (layer.bn) {
    ad::BatchNormRef ref = *layer.bn;
    ref.params = &ps;
    y = ad::batch_norm(y, ref, mode == Mode::training);
  }
  return layer.relu ? ad::relu(y) : y;
}

}  // namespace

Var apply_dense(Tape& tape, const ParamSet& ps, const Dense& layer, Var x, Mode mode) {
  Var pre = ad::add_row(ad::matmul(x, tape.param(ps, layer.weight)), tape.param(ps, layer.bias));
  return finish_dense(tape, ps, layer, pre, mode);
}

Var encode(Tape& tape, const LocalizerModel& model, Var descriptors, Mode mode) {
  if (descriptors.cols() != model.dims().d_obs)
    throw std::invalid_argument("encode: descriptor dimension " + std::to_string(descriptors.cols()) +
                                " != d_obs " + std::to_string(model.dims().d_obs));
  Var y = descriptors;
  for (const Dense& l : model.layout().encoder) y = apply_dense(tape, model.params(), l, y, mode);
  return y;
}

Var pair_node_term(Tape& tape, const LocalizerModel& model, Var node_embs) {
  if (node_embs.cols() != model.dims().d_emb)
    throw std::invalid_argument("pair_features: node embedding dimension mismatch");
  return ad::matmul(node_embs, tape.param(model.params(), model.layout().pair_node));
}

Var pair_features(Tape& tape, const LocalizerModel& model, Var current_emb, Var node_term, Mode mode) {
  const auto& L = model.layout();
  const ParamSet& ps = model.params();
  if (current_emb.rows() != 1 || current_emb.cols() != model.dims().d_emb)
    throw std::invalid_argument("pair_features: current embedding must be 1 x d_emb, got " +
                                current_emb.value().shape_str());
  Var cur = ad::add(ad::matmul(current_emb, tape.param(ps, L.pair_current)), tape.param(ps, L.pair_first.bias));
  Var first = finish_dense(tape, ps, L.pair_first, ad::add_row(node_term, cur), mode);
  return apply_dense(tape, ps, L.pair_second, first, mode);
}

Var gin_aggregate(Tape& tape, const ParamSet& ps, const GinLayer& gin, Var x,
                  std::shared_ptr<const AdjacencyList> adjacency, Mode mode) {
  Var eps = tape.param(ps, gin.eps);
  Var agg = ad::add(ad::add(x, ad::mul_scalar(x, eps)), ad::neighbor_sum(x, std::move(adjacency)));
  Var hidden = apply_dense(tape, ps, gin.hidden, agg, mode);
  return apply_dense(tape, ps, gin.out, hidden, mode);
}

Var zero_state(Tape& tape, std::size_t n, std::size_t d_h) { return tape.constant(Tensor(n, d_h)); }

GclstmOutput gclstm_step(Tape& tape, const LocalizerModel& model, Var x,
                         std::shared_ptr<const AdjacencyList> adjacency, Var h_prev, Var c_prev, Mode mode) {
  const auto& L = model.layout();
  const ParamSet& ps = model.params();
  if (L.gins.size() != 8) throw std::invalid_argument("gclstm_step: model has no recurrent layer");
  const std::size_t n = x.rows();
  if (h_prev.rows() != n || c_prev.rows() != n || h_prev.cols() != model.dims().d_h ||
      c_prev.cols() != model.dims().d_h)
    throw std::invalid_argument("gclstm_step: state " + h_prev.value().shape_str() + " does not match " +
                                std::to_string(n) + " nodes x d_h " + std::to_string(model.dims().d_h));
  if (x.cols() != model.dims().d_x) throw std::invalid_argument("gclstm_step: input dimension mismatch");

  auto G = [&](int k, Var in) { return gin_aggregate(tape, ps, L.gins[k - 1], in, adjacency, mode); };
  auto P = [&](std::size_t idx) { return tape.param(ps, idx); };

  Var i_gate = ad::sigmoid(ad::add_row(
      ad::add(ad::add(G(1, x), G(2, h_prev)), ad::mul_row(c_prev, P(L.w_ci))), P(L.b_i)));
  Var f_gate = ad::sigmoid(ad::add_row(
      ad::add(ad::add(G(3, x), G(4, h_prev)), ad::mul_row(c_prev, P(L.w_cf))), P(L.b_f)));
  Var candidate = ad::tanh(ad::add_row(ad::add(G(5, x), G(6, h_prev)), P(L.b_c)));
  Var c = ad::add(ad::hadamard(f_gate, c_prev), ad::hadamard(i_gate, candidate));
  Var o_gate = ad::sigmoid(ad::add_row(
      ad::add(ad::add(G(7, x), G(8, h_prev)), ad::mul_row(c, P(L.w_co))), P(L.b_o)));
  Var h = ad::hadamard(o_gate, ad::tanh(c));
  return {h, c, i_gate, f_gate, o_gate};
}

Var skip_path(Tape& tape, const LocalizerModel& model, Var x, Mode mode) {
  const auto& L = model.layout();
  if (!L.skip) throw std::invalid_argument("skip_path: model variant has no skip path");
  if (x.cols() != model.dims().d_x) throw std::invalid_argument("skip_path: input dimension mismatch");
  return apply_dense(tape, model.params(), *L.skip, x, mode);
}

Var frame_layers(Tape& tape, const LocalizerModel& model, Var x, Mode mode) {
  Var y = x;
  for (const Dense& l : model.layout().frame) y = apply_dense(tape, model.params(), l, y, mode);
  return y;
}

Var identify_logits(Tape& tape, const LocalizerModel& model, Var h, std::optional<Var> skip, Mode mode) {
  const auto& L = model.layout();
  Var feat = h;
  if (L.skip) {
    if (!skip) throw std::invalid_argument("identify: model expects skip features");
    if (skip->rows() != h.rows()) throw std::invalid_argument("identify: skip/h row mismatch");
    feat = ad::concat_cols(h, *skip);
  }
  Var hidden = apply_dense(tape, model.params(), L.head_hidden, feat, mode);
  Var out = apply_dense(tape, model.params(), L.head_out, hidden, mode);
  return ad::transpose(out);
}

StepVars forward_step(Tape& tape, const LocalizerModel& model, Var current_emb, Var node_term,
                      std::shared_ptr<const AdjacencyList> adjacency, Var h_prev, Var c_prev, Mode mode) {
  Var x = pair_features(tape, model, current_emb, node_term, mode);
  std::optional<Var> skip;
  if (model.layout().skip) skip = skip_path(tape, model, x, mode);
  if (model.dims().variant == Variant::single_frame) {
    Var h = frame_layers(tape, model, x, mode);
    return {identify_logits(tape, model, h, skip, mode), h, c_prev};
  }
  GclstmOutput g = gclstm_step(tape, model, x, std::move(adjacency), h_prev, c_prev, mode);
  return {identify_logits(tape, model, g.h, skip, mode), g.h, g.c};
}

Var window_loss(Tape& tape, const LocalizerModel& model, const TopoMap& map, const Tensor& observations,
                const std::vector<NodeId>& targets, Mode mode) {
  if (observations.rows() != targets.size() || targets.empty())
    throw std::invalid_argument("window_loss: " + std::to_string(observations.rows()) + " observations vs " +
                                std::to_string(targets.size()) + " targets");
  const std::size_t n = map.size(), d = map.descriptor_dim();
  Tensor node_desc(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) node_desc(i, j) = map.nodes()[i].descriptor[j];
  Var node_embs = encode(tape, model, tape.constant(std::move(node_desc)), mode);
  Var node_term = pair_node_term(tape, model, node_embs);
  Var obs_embs = encode(tape, model, tape.constant(observations), mode);

  auto adjacency = map.undirected_ptr();
  Var h = zero_state(tape, n, model.dims().d_h);
  Var c = h;
  std::optional<Var> total;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    StepVars s = forward_step(tape, model, ad::slice_rows(obs_embs, t, 1), node_term, adjacency, h, c, mode);
    h = s.h;
    c = s.c;
    Var ce = ad::cross_entropy(s.logits, targets[t].index);
    total = total ? ad::add(*total, ce) : ce;
  }
  return ad::scale(*total, 1.0 / static_cast<double>(targets.size()));
}

GCLSTMState reset_state(std::size_t n, std::size_t d_h) {
  if (n == 0 || d_h == 0) throw std::invalid_argument("reset_state: n and d_h must be positive");
  return {Tensor(n, d_h), Tensor(n, d_h)};
}

namespace {

Tensor descriptor_matrix(const TopoMap& map) {
  const std::size_t n = map.size(), d = map.descriptor_dim();
  Tensor m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = map.nodes()[i].descriptor[j];
  return m;
}

}  // namespace

MapEncoding encode_map(const LocalizerModel& model, const TopoMap& map) {
  if (map.descriptor_dim() != model.dims().d_obs)
    throw std::invalid_argument("map descriptor dimension " + std::to_string(map.descriptor_dim()) +
                                " != model d_obs " + std::to_string(model.dims().d_obs));
  Tape tape;
  Var e = encode(tape, model, tape.constant(descriptor_matrix(map)), Mode::eval);
  return {e.value()};
}

NodeId argmax_node(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax_node: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return NodeId{best};
}

StepResult localize_step(const LocalizerModel& model, const GCLSTMState& state, std::span<const double> observation,
                         const TopoMap& map, const MapEncoding* encoding) {
  const ModelDims& dims = model.dims();
  if (observation.size() != dims.d_obs)
    throw std::invalid_argument("localize_step: observation dimension " + std::to_string(observation.size()) +
                                " != d_obs " + std::to_string(dims.d_obs));
  if (map.empty()) throw std::invalid_argument("localize_step: empty map");
  if (state.h.rows() != map.size() || state.h.cols() != dims.d_h || !state.c.same_shape(state.h))
    throw std::invalid_argument("localize_step: state " + state.h.shape_str() + " does not match map of " +
                                std::to_string(map.size()) + " nodes");
  MapEncoding local;
  if (encoding == nullptr) {
    local = encode_map(model, map);
    encoding = &local;
  }
  Tape tape;
  Var node_term = pair_node_term(tape, model, tape.constant(encoding->node_embeddings));
  Var cur = encode(tape, model, tape.constant(Tensor(1, observation.size(), {observation.begin(), observation.end()})),
                   Mode::eval);
  StepVars s = forward_step(tape, model, cur, node_term, map.undirected_ptr(), tape.constant(state.h),
                            tape.constant(state.c), Mode::eval);
  Var probs = ad::softmax_rows(s.logits);
  StepResult r;
  r.probabilities = probs.value();
  r.predicted = argmax_node(r.probabilities.data());
  r.state = {s.h.value(), s.c.value()};
  return r;
}

LocalizerStream::LocalizerStream(const LocalizerModel& model, const TopoMap& map)
    : model_(&model), map_(&map), encoding_(encode_map(model, map)) {
  reset();
}

void LocalizerStream::reset() { state_ = reset_state(map_->size(), model_->dims().d_h); }

const StepResult& LocalizerStream::step(std::span<const double> observation) {
  last_ = localize_step(*model_, state_, observation, *map_, &encoding_);
  state_ = last_.state;
  return last_;
}

}  // namespace topoloc
