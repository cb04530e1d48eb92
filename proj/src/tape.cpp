#include "bss/tape.hpp"

#include <algorithm>
#include <cmath>

#include "bss/kernels.hpp"

namespace bss {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                      b.shape().str());
  }
}

// Per-class sums used by both the dice forward and backward passes.
struct DiceSums {
  std::vector<double> inter, pred, target;
};

DiceSums dice_sums(const Tensor& pred, const Tensor& target) {
  const index_t c = pred.shape()[0];
  const index_t spatial = pred.numel() / c;
  DiceSums s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0),
             std::vector<double>(c, 0.0)};
  for (index_t ch = 0; ch < c; ++ch) {
    const double* p = pred.data() + ch * spatial;
    const double* t = target.data() + ch * spatial;
    double si = 0.0, sp = 0.0, st = 0.0;
    for (index_t v = 0; v < spatial; ++v) {
      si += p[v] * t[v];
      sp += p[v];
      st += t[v];
    }
    s.inter[ch] = si;
    s.pred[ch] = sp;
    s.target[ch] = st;
  }
  return s;
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw ConfigError("Tape: node id " + std::to_string(id) + " out of range");
  }
}

const Tensor& Tape::value(NodeId id) const {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)].value;
}

NodeId Tape::parameter(const std::string& name, Tensor value) {
  if (param_ids_.count(name)) throw ConfigError("Tape: duplicate parameter '" + name + "'");
  if (!value.all_finite()) throw NumericError("Tape: parameter '" + name + "' has non-finite values");
  Node n{OpKind::kParameter, {}, std::move(value)};
  n.name = name;
  const NodeId id = push(std::move(n));
  param_names_.push_back(name);
  param_ids_[name] = id;
  return id;
}

NodeId Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("Tape: constant has non-finite values");
  return push(Node{OpKind::kConstant, {}, std::move(value)});
}

NodeId Tape::parameter_id(const std::string& name) const {
  auto it = param_ids_.find(name);
  if (it == param_ids_.end()) throw ConfigError("Tape: unknown parameter '" + name + "'");
  return it->second;
}

void Tape::set_parameter(const std::string& name, Tensor value) {
  Node& n = nodes_[static_cast<std::size_t>(parameter_id(name))];
  if (value.shape() != n.value.shape()) {
    throw ConfigError("Tape: set_parameter '" + name + "' shape " + value.shape().str() +
                      " != " + n.value.shape().str());
  }
  n.value = std::move(value);
}

void Tape::compute(Node& n) const {
  switch (n.kind) {
    case OpKind::kParameter:
    case OpKind::kConstant:
      break;
    case OpKind::kConv3d: {
      const Tensor& in = nodes_[n.inputs[0]].value;
      const Tensor& w = nodes_[n.inputs[1]].value;
      const Tensor& b = nodes_[n.inputs[2]].value;
      kernels::conv3d_forward(n.value, in, w, b, n.stride);
      break;
    }
    case OpKind::kUpsample2:
      kernels::upsample2_forward(n.value, nodes_[n.inputs[0]].value);
      break;
    case OpKind::kRelu:
      kernels::relu_forward(n.value, nodes_[n.inputs[0]].value);
      break;
    case OpKind::kSigmoid:
      kernels::sigmoid_forward(n.value, nodes_[n.inputs[0]].value);
      break;
    case OpKind::kChannelSoftmax:
      kernels::channel_softmax_forward(n.value, nodes_[n.inputs[0]].value);
      break;
    case OpKind::kAdd: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      n.value = Tensor(a.shape());
      for (index_t i = 0; i < a.numel(); ++i) n.value[i] = a[i] + b[i];
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      n.value = Tensor(a.shape());
      for (index_t i = 0; i < a.numel(); ++i) n.value[i] = a[i] * b[i];
      break;
    }
    case OpKind::kConcatChannels: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Tensor& b = nodes_[n.inputs[1]].value;
      std::vector<index_t> dims = a.shape().dims();
      dims[0] += b.shape()[0];
      n.value = Tensor(Shape(dims));
      std::copy(a.data(), a.data() + a.numel(), n.value.data());
      std::copy(b.data(), b.data() + b.numel(), n.value.data() + a.numel());
      break;
    }
    case OpKind::kReduceSum:
    case OpKind::kReduceMean: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      double acc = 0.0;
      for (index_t i = 0; i < a.numel(); ++i) acc += a[i];
      if (n.kind == OpKind::kReduceMean) acc /= static_cast<double>(a.numel());
      n.value = Tensor(Shape{1});
      n.value[0] = acc;
      break;
    }
    case OpKind::kSliceDepth: {
      const Tensor& a = nodes_[n.inputs[0]].value;
      const Shape& s = a.shape();
      const index_t c = s[0], d = s[1], h = s[2], w = s[3];
      n.value = Tensor(Shape{c, h, w});
      for (index_t ch = 0; ch < c; ++ch) {
        const double* src = a.data() + ((ch * d + n.slice_index) * h) * w;
        std::copy(src, src + h * w, n.value.data() + ch * h * w);
      }
      break;
    }
    case OpKind::kDiceLoss: {
      const Tensor& p = nodes_[n.inputs[0]].value;
      if (!p.all_finite()) throw NumericError("dice_loss: non-finite prediction");
      const DiceSums s = dice_sums(p, n.aux);
      const index_t c = p.shape()[0];
      double loss = 0.0;
      for (index_t ch = 0; ch < c; ++ch) {
        loss += 1.0 - (2.0 * s.inter[ch] + n.eps) / (s.pred[ch] + s.target[ch] + n.eps);
      }
      n.value = Tensor(Shape{1});
      n.value[0] = loss / static_cast<double>(c);
      break;
    }
  }
}

NodeId Tape::conv3d(NodeId input, NodeId weight, NodeId bias, index_t stride) {
  check_id(input);
  check_id(weight);
  check_id(bias);
  // Shape validation happens inside the kernel (it names offending axes).
  Node n{OpKind::kConv3d, {input, weight, bias}, Tensor{}};
  n.stride = stride;
  compute(n);
  return push(std::move(n));
}

NodeId Tape::upsample2(NodeId input) {
  check_id(input);
  Node n{OpKind::kUpsample2, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId input) {
  check_id(input);
  Node n{OpKind::kRelu, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId input) {
  check_id(input);
  Node n{OpKind::kSigmoid, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::channel_softmax(NodeId input) {
  check_id(input);
  Node n{OpKind::kChannelSoftmax, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  require_same_shape("add", nodes_[a].value, nodes_[b].value);
  Node n{OpKind::kAdd, {a, b}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  require_same_shape("mul", nodes_[a].value, nodes_[b].value);
  Node n{OpKind::kMul, {a, b}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::concat_channels(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Shape& sa = nodes_[a].value.shape();
  const Shape& sb = nodes_[b].value.shape();
  if (sa.rank() != sb.rank()) {
    throw ConfigError("concat_channels: rank mismatch " + sa.str() + " vs " + sb.str());
  }
  for (index_t i = 1; i < sa.rank(); ++i) {
    if (sa[i] != sb[i]) {
      throw ConfigError("concat_channels: non-channel axis " + std::to_string(i) +
                        " differs: " + sa.str() + " vs " + sb.str());
    }
  }
  Node n{OpKind::kConcatChannels, {a, b}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::reduce_sum(NodeId input) {
  check_id(input);
  Node n{OpKind::kReduceSum, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::reduce_mean(NodeId input) {
  check_id(input);
  Node n{OpKind::kReduceMean, {input}, Tensor{}};
  compute(n);
  return push(std::move(n));
}

NodeId Tape::slice_depth(NodeId input, index_t k) {
  check_id(input);
  const Shape& s = nodes_[input].value.shape();
  if (s.rank() != 4) throw ConfigError("slice_depth: input must be (C,D,H,W), got " + s.str());
  if (k < 0 || k >= s[1]) {
    throw ConfigError("slice_depth: index " + std::to_string(k) + " out of range [0," +
                      std::to_string(s[1]) + ")");
  }
  Node n{OpKind::kSliceDepth, {input}, Tensor{}};
  n.slice_index = k;
  compute(n);
  return push(std::move(n));
}

NodeId Tape::dice_loss(NodeId pred_probs, Tensor target, double eps) {
  check_id(pred_probs);
  require_same_shape("dice_loss", nodes_[pred_probs].value, target);
  if (!target.all_finite()) throw NumericError("dice_loss: non-finite target");
  Node n{OpKind::kDiceLoss, {pred_probs}, Tensor{}};
  n.aux = std::move(target);
  n.eps = eps;
  compute(n);
  return push(std::move(n));
}

NodeId Tape::evaluate(const std::string& primitive, const std::vector<NodeId>& inputs,
                      const EvalAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ConfigError("evaluate(" + primitive + "): expected " + std::to_string(n) +
                        " inputs, got " + std::to_string(inputs.size()));
    }
  };
  if (primitive == "conv3d") {
    need(3);
    return conv3d(inputs[0], inputs[1], inputs[2], attrs.stride);
  }
  if (primitive == "upsample2") {
    need(1);
    return upsample2(inputs[0]);
  }
  if (primitive == "relu") {
    need(1);
    return relu(inputs[0]);
  }
  if (primitive == "sigmoid") {
    need(1);
    return sigmoid(inputs[0]);
  }
  if (primitive == "channel_softmax") {
    need(1);
    return channel_softmax(inputs[0]);
  }
  if (primitive == "add") {
    need(2);
    return add(inputs[0], inputs[1]);
  }
  if (primitive == "mul") {
    need(2);
    return mul(inputs[0], inputs[1]);
  }
  if (primitive == "concat_channels") {
    need(2);
    return concat_channels(inputs[0], inputs[1]);
  }
  if (primitive == "reduce_sum") {
    need(1);
    return reduce_sum(inputs[0]);
  }
  if (primitive == "reduce_mean") {
    need(1);
    return reduce_mean(inputs[0]);
  }
  if (primitive == "slice_depth") {
    need(1);
    return slice_depth(inputs[0], attrs.slice_index);
  }
  if (primitive == "dice_loss") {
    need(1);
    return dice_loss(inputs[0], attrs.target, attrs.eps);
  }
  throw ConfigError("evaluate: unsupported primitive '" + primitive + "'");
}

void Tape::recompute() {
  for (Node& n : nodes_) compute(n);
}

std::map<std::string, Tensor> Tape::backward(NodeId loss) const {
  check_id(loss);
  const Node& loss_node = nodes_[static_cast<std::size_t>(loss)];
  if (loss_node.value.numel() != 1) {
    throw ConfigError("backward: loss must be scalar, got shape " + loss_node.value.shape().str());
  }

  std::vector<Tensor> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  auto touch = [&](NodeId id) {
    if (!live[static_cast<std::size_t>(id)]) {
      adj[static_cast<std::size_t>(id)] = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
      live[static_cast<std::size_t>(id)] = true;
    }
    return &adj[static_cast<std::size_t>(id)];
  };
  touch(loss)->operator[](0) = 1.0;

  auto accumulate = [](Tensor* dst, const Tensor& src) {
    for (index_t i = 0; i < dst->numel(); ++i) (*dst)[i] += src[i];
  };

  for (NodeId id = loss; id >= 0; --id) {
    const std::size_t i = static_cast<std::size_t>(id);
    if (!live[i]) continue;
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    switch (n.kind) {
      case OpKind::kParameter:
      case OpKind::kConstant:
        break;
      case OpKind::kConv3d: {
        const Tensor& in = nodes_[n.inputs[0]].value;
        const Tensor& w = nodes_[n.inputs[1]].value;
        Tensor gin(in.shape());
        kernels::conv3d_backward_input(gin, g, w, n.stride);
        accumulate(touch(n.inputs[0]), gin);
        Tensor gw(w.shape());
        kernels::conv3d_backward_weight(gw, g, in, n.stride);
        accumulate(touch(n.inputs[1]), gw);
        Tensor gb;
        kernels::conv3d_backward_bias(gb, g);
        accumulate(touch(n.inputs[2]), gb);
        break;
      }
      case OpKind::kUpsample2: {
        Tensor gin(nodes_[n.inputs[0]].value.shape());
        kernels::upsample2_backward(gin, g);
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kRelu: {
        Tensor gin;
        kernels::relu_backward(gin, g, nodes_[n.inputs[0]].value);
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kSigmoid: {
        Tensor gin;
        kernels::sigmoid_backward(gin, g, n.value);
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kChannelSoftmax: {
        Tensor gin;
        kernels::channel_softmax_backward(gin, g, n.value);
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kAdd: {
        accumulate(touch(n.inputs[0]), g);
        accumulate(touch(n.inputs[1]), g);
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor ga(a.shape()), gb(b.shape());
        for (index_t k = 0; k < a.numel(); ++k) {
          ga[k] = g[k] * b[k];
          gb[k] = g[k] * a[k];
        }
        accumulate(touch(n.inputs[0]), ga);
        accumulate(touch(n.inputs[1]), gb);
        break;
      }
      case OpKind::kConcatChannels: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor ga(a.shape()), gb(b.shape());
        std::copy(g.data(), g.data() + a.numel(), ga.data());
        std::copy(g.data() + a.numel(), g.data() + a.numel() + b.numel(), gb.data());
        accumulate(touch(n.inputs[0]), ga);
        accumulate(touch(n.inputs[1]), gb);
        break;
      }
      case OpKind::kReduceSum: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        Tensor gin(a.shape(), g[0]);
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kReduceMean: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        Tensor gin(a.shape(), g[0] / static_cast<double>(a.numel()));
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kSliceDepth: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Shape& s = a.shape();
        const index_t c = s[0], d = s[1], h = s[2], w = s[3];
        Tensor gin(s);
        for (index_t ch = 0; ch < c; ++ch) {
          double* dst = gin.data() + ((ch * d + n.slice_index) * h) * w;
          const double* src = g.data() + ch * h * w;
          std::copy(src, src + h * w, dst);
        }
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
      case OpKind::kDiceLoss: {
        const Tensor& p = nodes_[n.inputs[0]].value;
        const Tensor& t = n.aux;
        const index_t c = p.shape()[0];
        const index_t spatial = p.numel() / c;
        const DiceSums s = dice_sums(p, t);
        Tensor gin(p.shape());
        const double scale = g[0] / static_cast<double>(c);
        for (index_t ch = 0; ch < c; ++ch) {
          const double denom = s.pred[ch] + s.target[ch] + n.eps;
          const double numer = 2.0 * s.inter[ch] + n.eps;
          const double* tp = t.data() + ch * spatial;
          double* gp = gin.data() + ch * spatial;
          for (index_t v = 0; v < spatial; ++v) {
            gp[v] = scale * (numer / (denom * denom) - 2.0 * tp[v] / denom);
          }
        }
        accumulate(touch(n.inputs[0]), gin);
        break;
      }
    }
  }

  std::map<std::string, Tensor> grads;
  for (const std::string& name : param_names_) {
    const NodeId id = param_ids_.at(name);
    if (live[static_cast<std::size_t>(id)]) {
      grads[name] = adj[static_cast<std::size_t>(id)];
    } else {
      grads[name] = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    }
  }
  return grads;
}

double grad_check(const std::function<NodeId(Tape&, Rng&)>& builder, Rng& rng, double eps,
                  index_t coords_per_param) {
  if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");
  Tape tape;
  const NodeId loss = builder(tape, rng);
  const auto grads = tape.backward(loss);

  double max_rel = 0.0;
  for (const std::string& name : tape.parameter_names()) {
    const Tensor base = tape.value(tape.parameter_id(name));
    const Tensor& analytic = grads.at(name);
    const index_t n = base.numel();
    std::vector<index_t> coords;
    if (coords_per_param <= 0 || coords_per_param >= n) {
      coords.resize(static_cast<std::size_t>(n));
      for (index_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (index_t i = 0; i < coords_per_param; ++i) {
        coords.push_back(static_cast<index_t>(rng.uniform_index(static_cast<std::uint64_t>(n))));
      }
    }
    for (index_t i : coords) {
      Tensor t = base;
      t[i] = base[i] + eps;
      tape.set_parameter(name, t);
      tape.recompute();
      const double f_plus = tape.value(loss)[0];
      t[i] = base[i] - eps;
      tape.set_parameter(name, t);
      tape.recompute();
      const double f_minus = tape.value(loss)[0];
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
    tape.set_parameter(name, base);
    tape.recompute();
  }
  return max_rel;
}

}  // namespace bss
