#pragma once

#include <complex>
#include <vector>

#include "bss/volume.hpp"

namespace bss {

/// Amplitude/phase decomposition of a volume's 3D DFT, DC-centered.
/// The forward transform is unnormalized, so Parseval reads
/// sum |x|^2 = sum A^2 / (D*H*W).
struct Spectrum {
  index_t channels = 1, depth = 0, height = 0, width = 0;
  std::vector<double> amplitude;  // (C, D, H, W), >= 0
  std::vector<double> phase;      // (C, D, H, W), in (-pi, pi]

  index_t bins_per_channel() const { return depth * height * width; }
};

struct Reconstruction {
  Volume volume;
  /// Max |imaginary part| of the inverse transform in volume units; tiny for
  /// conjugate-symmetric-consistent (amplitude, phase) pairs.
  double imag_residual = 0.0;
};

Spectrum analyze(const Volume& v);

/// Inverse transform of (amplitude, phase). Returns the real part and the
/// imaginary residual; pairs whose residual exceeds 1e-6 of the peak
/// amplitude are rejected as conjugate-symmetry violations.
Reconstruction reconstruct(const Spectrum& s);

namespace fft {

/// DC-centered unnormalized 3D DFT of one real (D, H, W) grid.
std::vector<std::complex<double>> forward_centered(const double* vol, index_t d, index_t h,
                                                   index_t w);

/// Inverse of forward_centered, normalized by 1/(D*H*W). Fills `real_out`
/// and returns max |imaginary| over voxels (also normalized).
double inverse_centered(const std::vector<std::complex<double>>& shifted, index_t d, index_t h,
                        index_t w, std::vector<double>& real_out);

/// Index of the negated frequency of DC-centered index (z, y, x), flattened.
index_t negated_index(index_t z, index_t y, index_t x, index_t d, index_t h, index_t w);

/// Projects a centered spectrum onto the conjugate-symmetric subspace:
/// S[i] <- (S[i] + conj(S[-i])) / 2. Identity for spectra of real signals;
/// preserves phase at every bin when the input phase is already antisymmetric.
void symmetrize_centered(std::vector<std::complex<double>>& s, index_t d, index_t h, index_t w);

}  // namespace fft

}  // namespace bss
