#include "bss/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "bss/kernels.hpp"

namespace bss {

Tensor one_hot(const LabelVolume& labels) {
  labels.validate();
  Tensor t(Shape{labels.num_classes, labels.depth, labels.height, labels.width});
  const index_t n = labels.numel();
  for (index_t i = 0; i < n; ++i) {
    t[static_cast<index_t>(labels.classes[static_cast<std::size_t>(i)]) * n + i] = 1.0;
  }
  return t;
}

Tensor one_hot_slice(const Label2d& label, index_t num_classes) {
  Tensor t(Shape{num_classes, label.height, label.width});
  const index_t n = label.height * label.width;
  for (index_t i = 0; i < n; ++i) {
    const auto c = label.classes[static_cast<std::size_t>(i)];
    if (c < 0 || c >= num_classes) {
      throw ConfigError("one_hot_slice: class " + std::to_string(c) + " outside [0," +
                        std::to_string(num_classes) + ")");
    }
    t[static_cast<index_t>(c) * n + i] = 1.0;
  }
  return t;
}

double dice_loss_value(const Tensor& pred_probs, const Tensor& target, double eps) {
  if (pred_probs.shape() != target.shape()) {
    throw ConfigError("dice_loss: shape mismatch " + pred_probs.shape().str() + " vs " +
                      target.shape().str());
  }
  const index_t c = pred_probs.shape()[0];
  const index_t spatial = pred_probs.numel() / c;
  double loss = 0.0;
  for (index_t ch = 0; ch < c; ++ch) {
    const double* p = pred_probs.data() + ch * spatial;
    const double* t = target.data() + ch * spatial;
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (index_t v = 0; v < spatial; ++v) {
      inter += p[v] * t[v];
      sp += p[v];
      st += t[v];
    }
    loss += 1.0 - (2.0 * inter + eps) / (sp + st + eps);
  }
  return loss / static_cast<double>(c);
}

SupervisedLossNodes supervised_loss(Tape& tape, NodeId pred_labeled, index_t slice_index,
                                    const Label2d& slice_label, NodeId pred_synth,
                                    const LabelVolume& synth_label) {
  const index_t num_classes = tape.value(pred_labeled).shape()[0];
  SupervisedLossNodes nodes{};
  nodes.slice_term = tape.dice_loss(tape.slice_depth(pred_labeled, slice_index),
                                    one_hot_slice(slice_label, num_classes));
  nodes.synth_term = tape.dice_loss(pred_synth, one_hot(synth_label));
  nodes.sum = tape.add(nodes.slice_term, nodes.synth_term);
  return nodes;
}

NodeId unsupervised_loss(Tape& tape, NodeId pred_mixed, const LabelVolume& mixed_pseudo_label) {
  return tape.dice_loss(pred_mixed, one_hot(mixed_pseudo_label));
}

LabelVolume argmax_classes(const Tensor& probs) {
  const Shape& s = probs.shape();
  if (s.rank() != 4) throw ConfigError("argmax_classes: expected (C,D,H,W), got " + s.str());
  LabelVolume out(s[1], s[2], s[3], s[0]);
  const index_t c = s[0], n = s[1] * s[2] * s[3];
  for (index_t i = 0; i < n; ++i) {
    index_t best = 0;
    double best_p = probs[i];
    for (index_t ch = 1; ch < c; ++ch) {
      if (probs[ch * n + i] > best_p) {  // strict: ties keep the lowest class
        best_p = probs[ch * n + i];
        best = ch;
      }
    }
    out.classes[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

namespace {

void require_same_grid(const LabelVolume& a, const LabelVolume& b, const char* op) {
  if (a.depth != b.depth || a.height != b.height || a.width != b.width ||
      a.num_classes != b.num_classes) {
    throw ConfigError(std::string(op) + ": label grids differ in dims or class count");
  }
}

std::vector<kernels::Point3> surface_voxels(const LabelVolume& l, std::int32_t cls) {
  std::vector<kernels::Point3> out;
  for (index_t z = 0; z < l.depth; ++z) {
    for (index_t y = 0; y < l.height; ++y) {
      for (index_t x = 0; x < l.width; ++x) {
        if (l.at(z, y, x) != cls) continue;
        bool boundary = z == 0 || z == l.depth - 1 || y == 0 || y == l.height - 1 || x == 0 ||
                        x == l.width - 1;
        if (!boundary) {
          boundary = l.at(z - 1, y, x) != cls || l.at(z + 1, y, x) != cls ||
                     l.at(z, y - 1, x) != cls || l.at(z, y + 1, x) != cls ||
                     l.at(z, y, x - 1) != cls || l.at(z, y, x + 1) != cls;
        }
        if (boundary) out.push_back({z, y, x});
      }
    }
  }
  return out;
}

bool has_class(const LabelVolume& l, std::int32_t cls) {
  return std::find(l.classes.begin(), l.classes.end(), cls) != l.classes.end();
}

}  // namespace

DscResult dsc_metric(const LabelVolume& pred, const LabelVolume& target) {
  require_same_grid(pred, target, "dsc_metric");
  DscResult r;
  double sum = 0.0;
  for (std::int32_t cls = 1; cls < target.num_classes; ++cls) {
    index_t a = 0, b = 0, inter = 0;
    for (index_t i = 0; i < pred.numel(); ++i) {
      const bool in_a = pred.classes[static_cast<std::size_t>(i)] == cls;
      const bool in_b = target.classes[static_cast<std::size_t>(i)] == cls;
      a += in_a;
      b += in_b;
      inter += in_a && in_b;
    }
    const double dsc =
        (a + b == 0) ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
    r.per_class.push_back(dsc);
    sum += dsc;
  }
  r.mean = sum / static_cast<double>(target.num_classes - 1);
  return r;
}

AsdResult asd_metric(const LabelVolume& pred, const LabelVolume& target) {
  require_same_grid(pred, target, "asd_metric");
  AsdResult r;
  double sum = 0.0;
  index_t defined = 0;
  for (std::int32_t cls = 1; cls < target.num_classes; ++cls) {
    if (!has_class(pred, cls) || !has_class(target, cls)) {
      r.per_class.push_back(std::nullopt);
      continue;
    }
    const auto sa = surface_voxels(pred, cls);
    const auto sb = surface_voxels(target, cls);
    const auto d_ab = kernels::nearest_surface_distances(sa, sb);
    const auto d_ba = kernels::nearest_surface_distances(sb, sa);
    double acc = 0.0;
    for (double d : d_ab) acc += d;
    for (double d : d_ba) acc += d;
    const double asd = acc / static_cast<double>(d_ab.size() + d_ba.size());
    r.per_class.push_back(asd);
    sum += asd;
    ++defined;
  }
  if (defined > 0) r.mean = sum / static_cast<double>(defined);
  return r;
}

}  // namespace bss
