#pragma once

#include <optional>
#include <vector>

#include "bss/tape.hpp"
#include "bss/volume.hpp"

namespace bss {

/// Per-iteration loss decomposition; total is the exact sum of the parts.
struct LossReport {
  double total = 0.0;
  double sup_slice = 0.0;
  double sup_synth = 0.0;
  double unsup = 0.0;
};

Tensor one_hot(const LabelVolume& labels);                       // (C, D, H, W)
Tensor one_hot_slice(const Label2d& label, index_t num_classes); // (C, H, W)

/// Soft Dice loss evaluated eagerly (no tape); same formula as
/// Tape::dice_loss: mean over classes of 1 - (2*inter + eps)/(sums + eps).
double dice_loss_value(const Tensor& pred_probs, const Tensor& target, double eps = 1e-5);

struct SupervisedLossNodes {
  NodeId slice_term;  // Dice restricted to the annotated depth slice
  NodeId synth_term;  // Dice over the synthesized volumetric pair
  NodeId sum;
};

/// Two supervised terms for barely-annotated data: the annotated slice of
/// the labeled prediction, and the full synthesized pair. Slices other than
/// the annotated one receive zero gradient by construction.
SupervisedLossNodes supervised_loss(Tape& tape, NodeId pred_labeled, index_t slice_index,
                                    const Label2d& slice_label, NodeId pred_synth,
                                    const LabelVolume& synth_label);

/// Consistency term: Dice between the student prediction on the mixed input
/// and the (constant) mixed hardened pseudo-label.
NodeId unsupervised_loss(Tape& tape, NodeId pred_mixed, const LabelVolume& mixed_pseudo_label);

/// Hardens a probability map, ties resolved to the lowest class index.
LabelVolume argmax_classes(const Tensor& probs);

/// Dice similarity coefficient per foreground class; a class empty on both
/// sides scores 1.
struct DscResult {
  std::vector<double> per_class;  // classes 1..num_classes-1
  double mean = 0.0;
};
DscResult dsc_metric(const LabelVolume& pred, const LabelVolume& target);

/// Average symmetric surface distance per foreground class in voxel units.
/// Undefined (empty optional) when either side has no foreground; surfaces
/// use 6-neighborhoods with the volume border counting as background.
struct AsdResult {
  std::vector<std::optional<double>> per_class;
  std::optional<double> mean;  // mean over classes where defined
};
AsdResult asd_metric(const LabelVolume& pred, const LabelVolume& target);

}  // namespace bss
