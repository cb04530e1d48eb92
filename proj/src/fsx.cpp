#include "bss/fsx.hpp"

#include <algorithm>
#include <cmath>

namespace bss {

index_t FreqMask::count() const {
  index_t n = 0;
  for (auto v : ones) n += v;
  return n;
}

BlendMode parse_blend_mode(const std::string& name) {
  if (name == "global_scaled") return BlendMode::kGlobalScaled;
  if (name == "convex_inside_mask") return BlendMode::kConvexInsideMask;
  throw ConfigError("unknown blend mode '" + name +
                    "' (expected global_scaled|convex_inside_mask)");
}

std::string blend_mode_name(BlendMode m) {
  return m == BlendMode::kGlobalScaled ? "global_scaled" : "convex_inside_mask";
}

void FsxConfig::validate() const {
  if (alpha_lo < 0.0 || alpha_hi > 1.0 || alpha_lo > alpha_hi) {
    throw ConfigError("fsx: alpha range must satisfy 0 <= lo <= hi <= 1");
  }
  if (beta < 0.0 || beta > 1.0) throw ConfigError("fsx: beta must lie in [0,1]");
  if (cutmix_ratio_lo <= 0.0 || cutmix_ratio_hi > 1.0 || cutmix_ratio_lo > cutmix_ratio_hi) {
    throw ConfigError("fsx: cutmix ratio range must satisfy 0 < lo <= hi <= 1");
  }
}

FreqMask center_mask(index_t depth, index_t height, index_t width, double beta) {
  if (beta < 0.0 || beta > 1.0) throw ConfigError("center_mask: beta must lie in [0,1]");
  FreqMask m;
  m.depth = depth;
  m.height = height;
  m.width = width;
  m.beta = beta;
  m.ones.assign(static_cast<std::size_t>(depth * height * width), 0);
  const auto side = [beta](index_t n) {
    return static_cast<index_t>(std::ceil(beta * static_cast<double>(n)));
  };
  const index_t ld = side(depth), lh = side(height), lw = side(width);
  if (ld == 0 || lh == 0 || lw == 0) return m;
  const index_t z0 = depth / 2 - ld / 2;
  const index_t y0 = height / 2 - lh / 2;
  const index_t x0 = width / 2 - lw / 2;
  for (index_t z = z0; z < z0 + ld; ++z) {
    for (index_t y = y0; y < y0 + lh; ++y) {
      for (index_t x = x0; x < x0 + lw; ++x) {
        m.ones[static_cast<std::size_t>((z * height + y) * width + x)] = 1;
      }
    }
  }
  return m;
}

namespace {

void require_same_dims(const Volume& a, const Volume& b, const char* op) {
  if (a.channels != b.channels || a.depth != b.depth || a.height != b.height ||
      a.width != b.width) {
    throw ConfigError(std::string(op) + ": operand dims differ");
  }
}

// Mixed amplitude for the output that keeps `own` content; `other` supplies
// the counterpart style.
double blend_amplitude(double a_own, double a_other, double alpha, bool inside, BlendMode mode) {
  if (mode == BlendMode::kGlobalScaled) {
    return inside ? alpha * a_own : (1.0 - alpha) * a_other;
  }
  return inside ? (1.0 - alpha) * a_other + alpha * a_own : a_other;
}

Volume rebuild_clamped(const Spectrum& base_phase, const std::vector<double>& mixed_amp) {
  const index_t n = base_phase.bins_per_channel();
  Volume out(base_phase.channels, base_phase.depth, base_phase.height, base_phase.width);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  std::vector<double> real_out;
  for (index_t c = 0; c < base_phase.channels; ++c) {
    for (index_t i = 0; i < n; ++i) {
      const double a = mixed_amp[static_cast<std::size_t>(c * n + i)];
      const double p = base_phase.phase[static_cast<std::size_t>(c * n + i)];
      buf[static_cast<std::size_t>(i)] = {a * std::cos(p), a * std::sin(p)};
    }
    fft::symmetrize_centered(buf, base_phase.depth, base_phase.height, base_phase.width);
    fft::inverse_centered(buf, base_phase.depth, base_phase.height, base_phase.width, real_out);
    for (index_t i = 0; i < n; ++i) {
      out.voxels[static_cast<std::size_t>(c * n + i)] =
          std::clamp(real_out[static_cast<std::size_t>(i)], 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

FreqMixResult frequency_mixup(const Volume& original, const Volume& synthesized, double alpha,
                              const FreqMask& mask, BlendMode mode) {
  require_same_dims(original, synthesized, "frequency_mixup");
  if (mask.depth != original.depth || mask.height != original.height ||
      mask.width != original.width) {
    throw ConfigError("frequency_mixup: mask dims do not match volumes");
  }
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("frequency_mixup: alpha must lie in [0,1]");

  const Spectrum spec_orig = analyze(original);
  const Spectrum spec_synth = analyze(synthesized);
  const index_t n = spec_orig.bins_per_channel();
  const index_t c_total = original.channels * n;

  std::vector<double> amp_synth_mixed(static_cast<std::size_t>(c_total));
  std::vector<double> amp_orig_mixed(static_cast<std::size_t>(c_total));
  for (index_t c = 0; c < original.channels; ++c) {
    for (index_t i = 0; i < n; ++i) {
      const bool inside = mask.ones[static_cast<std::size_t>(i)] != 0;
      const std::size_t idx = static_cast<std::size_t>(c * n + i);
      const double a_o = spec_orig.amplitude[idx];
      const double a_s = spec_synth.amplitude[idx];
      amp_synth_mixed[idx] = blend_amplitude(a_s, a_o, alpha, inside, mode);
      amp_orig_mixed[idx] = blend_amplitude(a_o, a_s, alpha, inside, mode);
    }
  }

  FreqMixResult r;
  r.perturbed_synth = rebuild_clamped(spec_synth, amp_synth_mixed);
  r.perturbed_orig = rebuild_clamped(spec_orig, amp_orig_mixed);
  return r;
}

SpatialMask random_cuboid_mask(index_t depth, index_t height, index_t width, double ratio_lo,
                               double ratio_hi, Rng& rng) {
  if (!(ratio_lo > 0.0) || ratio_lo > ratio_hi || ratio_hi > 1.0) {
    throw ConfigError("random_cuboid_mask: ratio range must satisfy 0 < lo <= hi <= 1");
  }
  const double total = static_cast<double>(depth * height * width);

  // Enumerate (dz, dy) pairs admitting at least one dx with the volume
  // fraction inside the range; exact by construction.
  struct Pair {
    index_t dz, dy, x_lo, x_hi;
  };
  std::vector<Pair> feasible;
  for (index_t dz = 1; dz <= depth; ++dz) {
    for (index_t dy = 1; dy <= height; ++dy) {
      const double plane = static_cast<double>(dz * dy);
      index_t x_lo = static_cast<index_t>(std::ceil(ratio_lo * total / plane - 1e-12));
      index_t x_hi = static_cast<index_t>(std::floor(ratio_hi * total / plane + 1e-12));
      x_lo = std::max<index_t>(x_lo, 1);
      x_hi = std::min<index_t>(x_hi, width);
      if (x_lo <= x_hi) feasible.push_back({dz, dy, x_lo, x_hi});
    }
  }
  if (feasible.empty()) {
    throw ConfigError("random_cuboid_mask: no cuboid realizes a fraction in [" +
                      std::to_string(ratio_lo) + "," + std::to_string(ratio_hi) + "] for shape " +
                      std::to_string(depth) + "x" + std::to_string(height) + "x" +
                      std::to_string(width));
  }

  const Pair& p = feasible[rng.uniform_index(feasible.size())];
  const index_t dx = rng.uniform_int(p.x_lo, p.x_hi);

  SpatialMask m;
  m.depth = depth;
  m.height = height;
  m.width = width;
  m.dz = p.dz;
  m.dy = p.dy;
  m.dx = dx;
  m.z0 = rng.uniform_int(0, depth - p.dz);
  m.y0 = rng.uniform_int(0, height - p.dy);
  m.x0 = rng.uniform_int(0, width - dx);
  m.ones.assign(static_cast<std::size_t>(depth * height * width), 0);
  for (index_t z = m.z0; z < m.z0 + m.dz; ++z) {
    for (index_t y = m.y0; y < m.y0 + m.dy; ++y) {
      for (index_t x = m.x0; x < m.x0 + m.dx; ++x) {
        m.ones[static_cast<std::size_t>((z * height + y) * width + x)] = 1;
      }
    }
  }
  return m;
}

namespace {
void require_mask_dims(index_t d, index_t h, index_t w, const SpatialMask& m, const char* op) {
  if (m.depth != d || m.height != h || m.width != w) {
    throw ConfigError(std::string(op) + ": mask dims do not match operands");
  }
}
}  // namespace

Volume spatial_mixup(const Volume& a, const Volume& b, const SpatialMask& m) {
  require_same_dims(a, b, "spatial_mixup");
  require_mask_dims(a.depth, a.height, a.width, m, "spatial_mixup");
  Volume out = b;
  const index_t n = a.depth * a.height * a.width;
  for (index_t c = 0; c < a.channels; ++c) {
    for (index_t i = 0; i < n; ++i) {
      if (m.ones[static_cast<std::size_t>(i)]) {
        out.voxels[static_cast<std::size_t>(c * n + i)] =
            a.voxels[static_cast<std::size_t>(c * n + i)];
      }
    }
  }
  return out;
}

LabelVolume spatial_mixup(const LabelVolume& a, const LabelVolume& b, const SpatialMask& m) {
  if (a.depth != b.depth || a.height != b.height || a.width != b.width ||
      a.num_classes != b.num_classes) {
    throw ConfigError("spatial_mixup: label operand dims differ");
  }
  require_mask_dims(a.depth, a.height, a.width, m, "spatial_mixup");
  LabelVolume out = b;
  for (index_t i = 0; i < a.numel(); ++i) {
    if (m.ones[static_cast<std::size_t>(i)]) {
      out.classes[static_cast<std::size_t>(i)] = a.classes[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

Tensor spatial_mixup(const Tensor& a, const Tensor& b, const SpatialMask& m) {
  if (a.shape() != b.shape()) {
    throw ConfigError("spatial_mixup: tensor shapes differ: " + a.shape().str() + " vs " +
                      b.shape().str());
  }
  if (a.shape().rank() != 4) {
    throw ConfigError("spatial_mixup: expected (C,D,H,W) tensors, got " + a.shape().str());
  }
  require_mask_dims(a.shape()[1], a.shape()[2], a.shape()[3], m, "spatial_mixup");
  Tensor out = b;
  const index_t c = a.shape()[0];
  const index_t n = a.numel() / c;
  for (index_t ch = 0; ch < c; ++ch) {
    for (index_t i = 0; i < n; ++i) {
      if (m.ones[static_cast<std::size_t>(i)]) out[ch * n + i] = a[ch * n + i];
    }
  }
  return out;
}

}  // namespace bss
