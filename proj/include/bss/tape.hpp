#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bss/rng.hpp"
#include "bss/tensor.hpp"

namespace bss {

using NodeId = index_t;

enum class OpKind {
  kParameter,
  kConstant,
  kConv3d,
  kUpsample2,
  kRelu,
  kSigmoid,
  kChannelSoftmax,
  kAdd,
  kMul,
  kConcatChannels,
  kReduceSum,
  kReduceMean,
  kSliceDepth,
  kDiceLoss,
};

/// Attributes for the string-dispatched Tape::evaluate entry point.
struct EvalAttrs {
  index_t stride = 1;
  index_t slice_index = 0;
  Tensor target;
  double eps = 1e-5;
};

/// Reverse-mode computation graph over dense tensors. Nodes are appended in
/// topological order (inputs always precede their consumers) and forward
/// values are computed eagerly. backward() fills one gradient per parameter;
/// the tape stays valid for set_parameter + recompute cycles, which is what
/// finite-difference checking uses.
class Tape {
 public:
  // Leaves.
  NodeId parameter(const std::string& name, Tensor value);
  NodeId constant(Tensor value);

  // Primitives.
  NodeId conv3d(NodeId input, NodeId weight, NodeId bias, index_t stride = 1);
  NodeId upsample2(NodeId input);
  NodeId relu(NodeId input);
  NodeId sigmoid(NodeId input);
  NodeId channel_softmax(NodeId input);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId concat_channels(NodeId a, NodeId b);
  NodeId reduce_sum(NodeId input);
  NodeId reduce_mean(NodeId input);
  /// (C, D, H, W) -> (C, H, W) plane at depth k. Gradient is zero outside k.
  NodeId slice_depth(NodeId input, index_t k);
  /// Soft Dice loss of a probability map against a constant target of the
  /// same shape (one-hot or probabilities), averaged over classes.
  NodeId dice_loss(NodeId pred_probs, Tensor target, double eps = 1e-5);

  /// String-dispatched entry point; unknown primitives are rejected.
  NodeId evaluate(const std::string& primitive, const std::vector<NodeId>& inputs,
                  const EvalAttrs& attrs = EvalAttrs());

  const Tensor& value(NodeId id) const;
  index_t size() const { return static_cast<index_t>(nodes_.size()); }

  const std::vector<std::string>& parameter_names() const { return param_names_; }
  NodeId parameter_id(const std::string& name) const;
  void set_parameter(const std::string& name, Tensor value);

  /// Re-runs the whole forward pass in insertion order with current leaves.
  void recompute();

  /// Gradients of a scalar loss w.r.t. every parameter; unreachable
  /// parameters get zero gradients of their own shape.
  std::map<std::string, Tensor> backward(NodeId loss) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    index_t stride = 1;       // conv3d
    index_t slice_index = 0;  // slice_depth
    Tensor aux;               // dice target
    double eps = 0.0;         // dice smoothing
    std::string name;         // parameter
  };

  NodeId push(Node n);
  void compute(Node& n) const;
  void check_id(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<std::string> param_names_;
  std::map<std::string, NodeId> param_ids_;
};

/// Max over all checked parameter coordinates of
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|), with numeric the
/// central difference (f(x+eps) - f(x-eps)) / 2 eps. coords_per_param == 0
/// checks every coordinate; otherwise that many are sampled per parameter.
double grad_check(const std::function<NodeId(Tape&, Rng&)>& builder, Rng& rng, double eps,
                  index_t coords_per_param = 0);

}  // namespace bss
