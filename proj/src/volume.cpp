#include "bss/volume.hpp"

#include <algorithm>
#include <cmath>

namespace bss {

Slice2d extract_slice(const Volume& v, index_t k) {
  if (k < 0 || k >= v.depth) {
    throw ConfigError("extract_slice: index " + std::to_string(k) + " outside [0," +
                      std::to_string(v.depth) + ")");
  }
  Slice2d s;
  s.channels = v.channels;
  s.height = v.height;
  s.width = v.width;
  s.values.resize(static_cast<std::size_t>(v.channels * v.height * v.width));
  for (index_t c = 0; c < v.channels; ++c) {
    const double* src = v.voxels.data() + ((c * v.depth + k) * v.height) * v.width;
    std::copy(src, src + v.height * v.width, s.values.data() + c * v.height * v.width);
  }
  return s;
}

void insert_slice(Volume& v, index_t k, const Slice2d& plane) {
  if (k < 0 || k >= v.depth) {
    throw ConfigError("insert_slice: index " + std::to_string(k) + " outside [0," +
                      std::to_string(v.depth) + ")");
  }
  if (plane.channels != v.channels || plane.height != v.height || plane.width != v.width) {
    throw ConfigError("insert_slice: plane dims do not match volume");
  }
  for (index_t c = 0; c < v.channels; ++c) {
    const double* src = plane.values.data() + c * v.height * v.width;
    std::copy(src, src + v.height * v.width,
              v.voxels.data() + ((c * v.depth + k) * v.height) * v.width);
  }
}

Volume normalize(const Volume& v) {
  if (v.voxels.empty()) throw ConfigError("normalize: empty volume");
  double lo = v.voxels[0], hi = v.voxels[0];
  for (double x : v.voxels) {
    if (!std::isfinite(x)) throw ConfigError("normalize: non-finite voxel value");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Volume out = v;
  if (hi == lo) {
    std::fill(out.voxels.begin(), out.voxels.end(), 0.0);
    return out;
  }
  const double scale = 1.0 / (hi - lo);
  for (double& x : out.voxels) x = (x - lo) * scale;
  return out;
}

}  // namespace bss
