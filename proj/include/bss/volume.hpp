#pragma once

#include <cstdint>
#include <vector>

#include "bss/common.hpp"
#include "bss/tensor.hpp"

namespace bss {

/// Single 2D plane of a volume, one row-major (H, W) grid per channel.
struct Slice2d {
  index_t channels = 1, height = 0, width = 0;
  std::vector<double> values;  // (C, H, W)

  double& at(index_t c, index_t y, index_t x) {
    return values[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  double at(index_t c, index_t y, index_t x) const {
    return values[static_cast<std::size_t>((c * height + y) * width + x)];
  }
};

struct Label2d {
  index_t height = 0, width = 0;
  std::vector<std::int32_t> classes;  // (H, W)

  std::int32_t& at(index_t y, index_t x) {
    return classes[static_cast<std::size_t>(y * width + x)];
  }
  std::int32_t at(index_t y, index_t x) const {
    return classes[static_cast<std::size_t>(y * width + x)];
  }
};

/// Dense intensity grid over (channels, depth, height, width). Intensities
/// are normalized to [0,1] on ingestion; immutable by convention afterwards.
struct Volume {
  index_t channels = 1, depth = 0, height = 0, width = 0;
  std::vector<double> voxels;

  Volume() = default;
  Volume(index_t c, index_t d, index_t h, index_t w)
      : channels(c), depth(d), height(h), width(w),
        voxels(static_cast<std::size_t>(c * d * h * w), 0.0) {
    if (c < 1 || d < 1 || h < 1 || w < 1) throw ConfigError("Volume: all dims must be >= 1");
  }

  index_t numel() const { return channels * depth * height * width; }
  double& at(index_t c, index_t z, index_t y, index_t x) {
    return voxels[static_cast<std::size_t>(((c * depth + z) * height + y) * width + x)];
  }
  double at(index_t c, index_t z, index_t y, index_t x) const {
    return voxels[static_cast<std::size_t>(((c * depth + z) * height + y) * width + x)];
  }

  Tensor to_tensor() const {
    return Tensor(Shape{channels, depth, height, width}, voxels);
  }
  static Volume from_tensor(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.rank() != 4) throw ConfigError("Volume: tensor must be (C,D,H,W), got " + s.str());
    Volume v(s[0], s[1], s[2], s[3]);
    v.voxels = t.vec();
    return v;
  }
};

/// Integer class grid over (depth, height, width), classes in [0, num_classes).
struct LabelVolume {
  index_t depth = 0, height = 0, width = 0;
  index_t num_classes = 2;
  std::vector<std::int32_t> classes;

  LabelVolume() = default;
  LabelVolume(index_t d, index_t h, index_t w, index_t nc)
      : depth(d), height(h), width(w), num_classes(nc),
        classes(static_cast<std::size_t>(d * h * w), 0) {
    if (nc < 2) throw ConfigError("LabelVolume: num_classes must be >= 2");
  }

  index_t numel() const { return depth * height * width; }
  std::int32_t& at(index_t z, index_t y, index_t x) {
    return classes[static_cast<std::size_t>((z * height + y) * width + x)];
  }
  std::int32_t at(index_t z, index_t y, index_t x) const {
    return classes[static_cast<std::size_t>((z * height + y) * width + x)];
  }

  void validate() const {
    for (std::int32_t c : classes) {
      if (c < 0 || c >= num_classes) {
        throw ConfigError("LabelVolume: class " + std::to_string(c) + " outside [0," +
                          std::to_string(num_classes) + ")");
      }
    }
  }
};

/// The one annotated plane of a barely-labeled volume: slice index plus its
/// 2D class grid.
struct SliceAnnotation {
  index_t slice_index = 0;
  Label2d label2d;
};

struct BarelyLabeledItem {
  Volume volume;
  SliceAnnotation annotation;
  index_t num_classes = 2;
};

struct BarelyLabeledSet {
  std::vector<BarelyLabeledItem> items;
};

/// Unlabeled pool; by construction it also contains (copies of) every
/// labeled volume.
struct UnlabeledSet {
  std::vector<Volume> volumes;
};

/// Depth-k plane of a volume, all channels. Pure read.
Slice2d extract_slice(const Volume& v, index_t k);

/// Writes a plane back at depth k (test utility; inverse of extract_slice).
void insert_slice(Volume& v, index_t k, const Slice2d& plane);

/// Min-max normalization to [0,1]; constant volumes map to all-zeros.
/// Non-finite input is rejected.
Volume normalize(const Volume& v);

}  // namespace bss
