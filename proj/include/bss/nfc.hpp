#pragma once

#include <utility>
#include <vector>

#include "bss/rng.hpp"
#include "bss/volume.hpp"

namespace bss {

enum class StackStrategy { kSequential, kRandom, kWithNoise };

StackStrategy parse_stack_strategy(const std::string& name);
std::string stack_strategy_name(StackStrategy s);

/// Slice-to-volume synthesis hyperparameters. The window is stored as a
/// fraction of the slice side and resolved to voxels at call time; an
/// absolute voxel count takes precedence when set.
struct NfcConfig {
  double window_fraction = 0.5;
  index_t window_voxels = 0;  // 0 = use window_fraction
  index_t stride = 8;
  StackStrategy stack_strategy = StackStrategy::kSequential;
  double noise_insert_prob = 0.2;

  index_t resolve_window(index_t slice_h, index_t slice_w) const;
};

/// Ordered square tiles cut from one slice, row-major over window positions.
struct PatchSequence {
  index_t patch = 0;  // tile side (H_p == W_p == window)
  std::vector<std::vector<double>> patches;
  std::vector<std::pair<index_t, index_t>> origins;  // (row, col) offsets
};

struct LabelPatchSequence {
  index_t patch = 0;
  std::vector<std::vector<std::int32_t>> patches;
  std::vector<std::pair<index_t, index_t>> origins;
};

/// Number of sliding windows: (floor((H-k)/s)+1) * (floor((W-k)/s)+1).
index_t patch_count(index_t slice_h, index_t slice_w, index_t window, index_t stride);

PatchSequence divide(const std::vector<double>& plane, index_t slice_h, index_t slice_w,
                     index_t window, index_t stride);
LabelPatchSequence divide_labels(const std::vector<std::int32_t>& plane, index_t slice_h,
                                 index_t slice_w, index_t window, index_t stride);

/// Stacking order shared between an image and its label: entries >= 0 index a
/// patch, -1 marks an inserted noise slot.
std::vector<index_t> make_stack_plan(index_t num_patches, StackStrategy strategy,
                                     double noise_insert_prob, Rng& rng);

struct StackedPair {
  index_t depth = 0, height = 0, width = 0;
  std::vector<double> image;          // (depth, k, k)
  std::vector<std::int32_t> labels;   // (depth, k, k)
};

/// Stacks image and label patches into a cropped volume pair along depth.
/// Noise slots draw voxels from Normal(noise_mean, noise_std) clamped to
/// [0,1] and get an all-background label.
StackedPair stack(const PatchSequence& image, const LabelPatchSequence& labels,
                  StackStrategy strategy, double noise_insert_prob, Rng& rng,
                  double noise_mean = 0.5, double noise_std = 0.1);

/// Per-depth-slice resize of a stacked pair: corner-aligned bilinear for the
/// image, nearest neighbor for the labels (creates no new classes).
std::vector<double> resize_image_stack(const std::vector<double>& stack, index_t depth,
                                       index_t in_h, index_t in_w, index_t out_h, index_t out_w);
std::vector<std::int32_t> resize_label_stack(const std::vector<std::int32_t>& stack,
                                             index_t depth, index_t in_h, index_t in_w,
                                             index_t out_h, index_t out_w);

/// Full slice-to-volume synthesis: divide -> stack -> resize applied to the
/// annotated slice and its label. Reads no slice other than the annotated
/// one; output height/width equal the source volume's.
std::pair<Volume, LabelVolume> synthesize(const Volume& volume, const SliceAnnotation& annotation,
                                          index_t num_classes, const NfcConfig& config, Rng& rng);

}  // namespace bss
