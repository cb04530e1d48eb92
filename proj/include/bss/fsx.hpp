#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bss/fourier.hpp"
#include "bss/rng.hpp"
#include "bss/tensor.hpp"
#include "bss/volume.hpp"

namespace bss {

/// Centered binary cuboid over DC-centered frequency coordinates; selects the
/// low-frequency band for amplitude mixing.
struct FreqMask {
  index_t depth = 0, height = 0, width = 0;
  double beta = 0.0;
  std::vector<std::uint8_t> ones;  // (D, H, W)

  bool at(index_t z, index_t y, index_t x) const {
    return ones[static_cast<std::size_t>((z * height + y) * width + x)] != 0;
  }
  index_t count() const;
};

/// Single axis-aligned random cuboid used for spatial region mixing; the same
/// mask is shared between images and segmentation maps.
struct SpatialMask {
  index_t depth = 0, height = 0, width = 0;
  index_t z0 = 0, y0 = 0, x0 = 0;  // cuboid corner (inclusive)
  index_t dz = 0, dy = 0, dx = 0;  // cuboid extents
  std::vector<std::uint8_t> ones;  // (D, H, W)

  bool at(index_t z, index_t y, index_t x) const {
    return ones[static_cast<std::size_t>((z * height + y) * width + x)] != 0;
  }
  double fraction() const {
    return static_cast<double>(dz * dy * dx) / static_cast<double>(depth * height * width);
  }
};

/// Amplitude blending rule. kGlobalScaled follows the mixing formula as
/// published: outside the mask the kept amplitude is still scaled by
/// (1 - alpha). kConvexInsideMask leaves amplitudes outside the mask
/// untouched and blends convexly inside (the conventional variant).
enum class BlendMode { kGlobalScaled, kConvexInsideMask };

BlendMode parse_blend_mode(const std::string& name);
std::string blend_mode_name(BlendMode m);

struct FsxConfig {
  double alpha_lo = 0.0, alpha_hi = 1.0;
  double beta = 0.1;
  double cutmix_ratio_lo = 0.25, cutmix_ratio_hi = 0.5;
  BlendMode blend_mode = BlendMode::kGlobalScaled;

  void validate() const;
};

/// Centered cuboid of ones with side ceil(beta * axis) per axis, containing
/// the DC bin. beta=0 gives all zeros, beta=1 all ones.
FreqMask center_mask(index_t depth, index_t height, index_t width, double beta);

struct FreqMixResult {
  Volume perturbed_synth;  // style-perturbed synthesized volume (phase kept)
  Volume perturbed_orig;   // counterpart with roles of the operands swapped
};

/// Amplitude Mix-Up between an original volume and a synthesized volume.
/// Both outputs keep their own phase spectra; mixed spectra are projected
/// back onto the conjugate-symmetric subspace (phase-preserving) before the
/// inverse transform so reconstructions stay real even when the mask is not
/// symmetric under frequency negation. Outputs are clamped to [0,1].
FreqMixResult frequency_mixup(const Volume& original, const Volume& synthesized, double alpha,
                              const FreqMask& mask, BlendMode mode);

/// Random cuboid whose ones-fraction lies within [ratio_lo, ratio_hi], with
/// the position uniform among valid placements. Rejects shapes for which no
/// cuboid in the range exists.
SpatialMask random_cuboid_mask(index_t depth, index_t height, index_t width, double ratio_lo,
                               double ratio_hi, Rng& rng);

/// out = a where mask is one, b elsewhere (exact voxel selection).
Volume spatial_mixup(const Volume& a, const Volume& b, const SpatialMask& m);
LabelVolume spatial_mixup(const LabelVolume& a, const LabelVolume& b, const SpatialMask& m);
/// Channel-wise variant for probability maps shaped (C, D, H, W).
Tensor spatial_mixup(const Tensor& a, const Tensor& b, const SpatialMask& m);

}  // namespace bss
