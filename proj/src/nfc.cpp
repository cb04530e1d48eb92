#include "bss/nfc.hpp"

#include <algorithm>
#include <cmath>

#include "bss/kernels.hpp"

namespace bss {

StackStrategy parse_stack_strategy(const std::string& name) {
  if (name == "sequential") return StackStrategy::kSequential;
  if (name == "random") return StackStrategy::kRandom;
  if (name == "with_noise") return StackStrategy::kWithNoise;
  throw ConfigError("unknown stack strategy '" + name +
                    "' (expected sequential|random|with_noise)");
}

std::string stack_strategy_name(StackStrategy s) {
  switch (s) {
    case StackStrategy::kSequential: return "sequential";
    case StackStrategy::kRandom: return "random";
    case StackStrategy::kWithNoise: return "with_noise";
  }
  return "?";
}

index_t NfcConfig::resolve_window(index_t slice_h, index_t slice_w) const {
  index_t k = window_voxels > 0
                  ? window_voxels
                  : static_cast<index_t>(window_fraction *
                                         static_cast<double>(std::min(slice_h, slice_w)));
  if (k < 1) throw ConfigError("nfc: resolved window size must be >= 1");
  if (k > std::min(slice_h, slice_w)) {
    throw ConfigError("nfc: window " + std::to_string(k) + " exceeds slice " +
                      std::to_string(slice_h) + "x" + std::to_string(slice_w));
  }
  return k;
}

index_t patch_count(index_t slice_h, index_t slice_w, index_t window, index_t stride) {
  if (stride < 1) throw ConfigError("nfc: stride must be >= 1");
  if (window > slice_h || window > slice_w) {
    throw ConfigError("nfc: window " + std::to_string(window) + " exceeds slice " +
                      std::to_string(slice_h) + "x" + std::to_string(slice_w));
  }
  return ((slice_h - window) / stride + 1) * ((slice_w - window) / stride + 1);
}

namespace {

template <typename T, typename Seq>
Seq divide_impl(const std::vector<T>& plane, index_t h, index_t w, index_t k, index_t s) {
  if (static_cast<index_t>(plane.size()) != h * w) {
    throw ConfigError("divide: plane size does not match dims");
  }
  (void)patch_count(h, w, k, s);  // validates window/stride
  Seq seq;
  seq.patch = k;
  for (index_t oy = 0; oy + k <= h; oy += s) {
    for (index_t ox = 0; ox + k <= w; ox += s) {
      std::vector<T> tile(static_cast<std::size_t>(k * k));
      for (index_t y = 0; y < k; ++y) {
        const T* src = plane.data() + (oy + y) * w + ox;
        std::copy(src, src + k, tile.data() + y * k);
      }
      seq.patches.push_back(std::move(tile));
      seq.origins.emplace_back(oy, ox);
    }
  }
  return seq;
}

}  // namespace

PatchSequence divide(const std::vector<double>& plane, index_t slice_h, index_t slice_w,
                     index_t window, index_t stride) {
  return divide_impl<double, PatchSequence>(plane, slice_h, slice_w, window, stride);
}

LabelPatchSequence divide_labels(const std::vector<std::int32_t>& plane, index_t slice_h,
                                 index_t slice_w, index_t window, index_t stride) {
  return divide_impl<std::int32_t, LabelPatchSequence>(plane, slice_h, slice_w, window, stride);
}

std::vector<index_t> make_stack_plan(index_t num_patches, StackStrategy strategy,
                                     double noise_insert_prob, Rng& rng) {
  if (num_patches < 1) throw ConfigError("stack: patch sequence is empty");
  std::vector<index_t> plan(static_cast<std::size_t>(num_patches));
  for (index_t j = 0; j < num_patches; ++j) plan[static_cast<std::size_t>(j)] = j;
  switch (strategy) {
    case StackStrategy::kSequential:
      break;
    case StackStrategy::kRandom:
      rng.shuffle(plan);
      break;
    case StackStrategy::kWithNoise: {
      std::vector<index_t> noisy;
      for (index_t j = 0; j < num_patches; ++j) {
        if (rng.uniform() < noise_insert_prob) noisy.push_back(-1);
        noisy.push_back(j);
      }
      plan = std::move(noisy);
      break;
    }
  }
  return plan;
}

StackedPair stack(const PatchSequence& image, const LabelPatchSequence& labels,
                  StackStrategy strategy, double noise_insert_prob, Rng& rng, double noise_mean,
                  double noise_std) {
  if (image.patches.empty()) throw ConfigError("stack: patch sequence is empty");
  if (image.patches.size() != labels.patches.size()) {
    throw ConfigError("stack: image has " + std::to_string(image.patches.size()) +
                      " patches but label has " + std::to_string(labels.patches.size()));
  }
  const index_t k = image.patch;
  const index_t d = static_cast<index_t>(image.patches.size());
  const auto plan = make_stack_plan(d, strategy, noise_insert_prob, rng);

  StackedPair out;
  out.depth = static_cast<index_t>(plan.size());
  out.height = k;
  out.width = k;
  out.image.resize(static_cast<std::size_t>(out.depth * k * k));
  out.labels.assign(static_cast<std::size_t>(out.depth * k * k), 0);
  for (std::size_t z = 0; z < plan.size(); ++z) {
    double* img_dst = out.image.data() + static_cast<index_t>(z) * k * k;
    std::int32_t* lbl_dst = out.labels.data() + static_cast<index_t>(z) * k * k;
    if (plan[z] < 0) {
      for (index_t i = 0; i < k * k; ++i) {
        img_dst[i] = std::clamp(rng.normal(noise_mean, noise_std), 0.0, 1.0);
      }
      // label slice stays all-background
    } else {
      const auto& img = image.patches[static_cast<std::size_t>(plan[z])];
      const auto& lbl = labels.patches[static_cast<std::size_t>(plan[z])];
      std::copy(img.begin(), img.end(), img_dst);
      std::copy(lbl.begin(), lbl.end(), lbl_dst);
    }
  }
  return out;
}

std::vector<double> resize_image_stack(const std::vector<double>& stack, index_t depth,
                                       index_t in_h, index_t in_w, index_t out_h, index_t out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize: target dims must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(depth * out_h * out_w));
  std::vector<double> plane_in(static_cast<std::size_t>(in_h * in_w));
  std::vector<double> plane_out;
  for (index_t z = 0; z < depth; ++z) {
    std::copy(stack.begin() + z * in_h * in_w, stack.begin() + (z + 1) * in_h * in_w,
              plane_in.begin());
    kernels::resize_bilinear_2d(plane_out, out_h, out_w, plane_in, in_h, in_w);
    std::copy(plane_out.begin(), plane_out.end(), out.begin() + z * out_h * out_w);
  }
  return out;
}

std::vector<std::int32_t> resize_label_stack(const std::vector<std::int32_t>& stack, index_t depth,
                                             index_t in_h, index_t in_w, index_t out_h,
                                             index_t out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize: target dims must be >= 1");
  std::vector<std::int32_t> out(static_cast<std::size_t>(depth * out_h * out_w));
  std::vector<std::int32_t> plane_in(static_cast<std::size_t>(in_h * in_w));
  std::vector<std::int32_t> plane_out;
  for (index_t z = 0; z < depth; ++z) {
    std::copy(stack.begin() + z * in_h * in_w, stack.begin() + (z + 1) * in_h * in_w,
              plane_in.begin());
    kernels::resize_nearest_2d_int(plane_out, out_h, out_w, plane_in, in_h, in_w);
    std::copy(plane_out.begin(), plane_out.end(), out.begin() + z * out_h * out_w);
  }
  return out;
}

std::pair<Volume, LabelVolume> synthesize(const Volume& volume, const SliceAnnotation& annotation,
                                          index_t num_classes, const NfcConfig& config, Rng& rng) {
  const Slice2d slice = extract_slice(volume, annotation.slice_index);
  if (annotation.label2d.height != volume.height || annotation.label2d.width != volume.width) {
    throw ConfigError("synthesize: annotation label dims do not match volume slice");
  }
  const index_t h = volume.height, w = volume.width;
  const index_t k = config.resolve_window(h, w);

  // Noise statistics come from the annotated slice itself (channel mean/std).
  double mean = 0.0;
  for (double v : slice.values) mean += v;
  mean /= static_cast<double>(slice.values.size());
  double var = 0.0;
  for (double v : slice.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / static_cast<double>(slice.values.size()));

  const LabelPatchSequence label_patches =
      divide_labels(annotation.label2d.classes, h, w, k, config.stride);
  const index_t d = static_cast<index_t>(label_patches.patches.size());
  const auto plan = make_stack_plan(d, config.stack_strategy, config.noise_insert_prob, rng);
  const index_t out_depth = static_cast<index_t>(plan.size());

  Volume image(volume.channels, out_depth, h, w);
  LabelVolume label(out_depth, h, w, num_classes);

  for (index_t c = 0; c < volume.channels; ++c) {
    std::vector<double> plane(static_cast<std::size_t>(h * w));
    std::copy(slice.values.begin() + c * h * w, slice.values.begin() + (c + 1) * h * w,
              plane.begin());
    const PatchSequence patches = divide(plane, h, w, k, config.stride);
    std::vector<double> stacked(static_cast<std::size_t>(out_depth * k * k));
    for (std::size_t z = 0; z < plan.size(); ++z) {
      double* dst = stacked.data() + static_cast<index_t>(z) * k * k;
      if (plan[z] < 0) {
        for (index_t i = 0; i < k * k; ++i) {
          dst[i] = std::clamp(rng.normal(mean, stddev), 0.0, 1.0);
        }
      } else {
        const auto& tile = patches.patches[static_cast<std::size_t>(plan[z])];
        std::copy(tile.begin(), tile.end(), dst);
      }
    }
    std::vector<double> resized = resize_image_stack(stacked, out_depth, k, k, h, w);
    std::copy(resized.begin(), resized.end(),
              image.voxels.begin() + c * out_depth * h * w);
  }

  std::vector<std::int32_t> lbl_stacked(static_cast<std::size_t>(out_depth * k * k), 0);
  for (std::size_t z = 0; z < plan.size(); ++z) {
    if (plan[z] >= 0) {
      const auto& tile = label_patches.patches[static_cast<std::size_t>(plan[z])];
      std::copy(tile.begin(), tile.end(), lbl_stacked.data() + static_cast<index_t>(z) * k * k);
    }
  }
  label.classes = resize_label_stack(lbl_stacked, out_depth, k, k, h, w);
  return {std::move(image), std::move(label)};
}

}  // namespace bss
