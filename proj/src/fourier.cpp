#include "bss/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace bss {

namespace {

// FFTW plan creation/destruction is not thread-safe; execution is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

void run_dft(std::vector<std::complex<double>>& buf, index_t d, index_t h, index_t w, int sign) {
  fftw_complex* p = reinterpret_cast<fftw_complex*>(buf.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    plan = fftw_plan_dft_3d(static_cast<int>(d), static_cast<int>(h), static_cast<int>(w), p, p,
                            sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    fftw_destroy_plan(plan);
  }
}

index_t center(index_t n) { return n / 2; }

// shifted index of unshifted frequency k: (k + c) mod n
index_t shift_of(index_t k, index_t n) { return (k + center(n)) % n; }
// unshifted frequency of shifted index i: (i - c) mod n
index_t unshift_of(index_t i, index_t n) { return (i - center(n) + n) % n; }

}  // namespace

namespace fft {

std::vector<std::complex<double>> forward_centered(const double* vol, index_t d, index_t h,
                                                   index_t w) {
  const index_t n = d * h * w;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = {vol[i], 0.0};
  run_dft(buf, d, h, w, FFTW_FORWARD);

  std::vector<std::complex<double>> shifted(static_cast<std::size_t>(n));
  for (index_t kz = 0; kz < d; ++kz) {
    const index_t sz = shift_of(kz, d);
    for (index_t ky = 0; ky < h; ++ky) {
      const index_t sy = shift_of(ky, h);
      for (index_t kx = 0; kx < w; ++kx) {
        shifted[static_cast<std::size_t>((sz * h + sy) * w + shift_of(kx, w))] =
            buf[static_cast<std::size_t>((kz * h + ky) * w + kx)];
      }
    }
  }
  return shifted;
}

double inverse_centered(const std::vector<std::complex<double>>& shifted, index_t d, index_t h,
                        index_t w, std::vector<double>& real_out) {
  const index_t n = d * h * w;
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  for (index_t iz = 0; iz < d; ++iz) {
    const index_t kz = unshift_of(iz, d);
    for (index_t iy = 0; iy < h; ++iy) {
      const index_t ky = unshift_of(iy, h);
      for (index_t ix = 0; ix < w; ++ix) {
        buf[static_cast<std::size_t>((kz * h + ky) * w + unshift_of(ix, w))] =
            shifted[static_cast<std::size_t>((iz * h + iy) * w + ix)];
      }
    }
  }
  run_dft(buf, d, h, w, FFTW_BACKWARD);

  real_out.resize(static_cast<std::size_t>(n));
  const double scale = 1.0 / static_cast<double>(n);
  double imag_max = 0.0;
  for (index_t i = 0; i < n; ++i) {
    real_out[static_cast<std::size_t>(i)] = buf[static_cast<std::size_t>(i)].real() * scale;
    imag_max = std::max(imag_max, std::abs(buf[static_cast<std::size_t>(i)].imag()) * scale);
  }
  return imag_max;
}

index_t negated_index(index_t z, index_t y, index_t x, index_t d, index_t h, index_t w) {
  const index_t nz = (2 * center(d) - z + d) % d;
  const index_t ny = (2 * center(h) - y + h) % h;
  const index_t nx = (2 * center(w) - x + w) % w;
  return (nz * h + ny) * w + nx;
}

void symmetrize_centered(std::vector<std::complex<double>>& s, index_t d, index_t h, index_t w) {
  const std::vector<std::complex<double>> tmp = s;
  for (index_t z = 0; z < d; ++z) {
    for (index_t y = 0; y < h; ++y) {
      for (index_t x = 0; x < w; ++x) {
        const index_t i = (z * h + y) * w + x;
        const index_t j = negated_index(z, y, x, d, h, w);
        s[static_cast<std::size_t>(i)] =
            0.5 * (tmp[static_cast<std::size_t>(i)] + std::conj(tmp[static_cast<std::size_t>(j)]));
      }
    }
  }
}

}  // namespace fft

Spectrum analyze(const Volume& v) {
  Spectrum s;
  s.channels = v.channels;
  s.depth = v.depth;
  s.height = v.height;
  s.width = v.width;
  const index_t n = s.bins_per_channel();
  s.amplitude.resize(static_cast<std::size_t>(v.channels * n));
  s.phase.resize(static_cast<std::size_t>(v.channels * n));
  for (index_t c = 0; c < v.channels; ++c) {
    const auto spec = fft::forward_centered(v.voxels.data() + c * n, v.depth, v.height, v.width);
    for (index_t i = 0; i < n; ++i) {
      const auto& z = spec[static_cast<std::size_t>(i)];
      s.amplitude[static_cast<std::size_t>(c * n + i)] = std::abs(z);
      s.phase[static_cast<std::size_t>(c * n + i)] = std::arg(z);
    }
  }
  return s;
}

Reconstruction reconstruct(const Spectrum& s) {
  const index_t n = s.bins_per_channel();
  if (static_cast<index_t>(s.amplitude.size()) != s.channels * n ||
      s.amplitude.size() != s.phase.size()) {
    throw ConfigError("reconstruct: amplitude/phase sizes do not match spectrum dims");
  }
  Reconstruction r;
  r.volume = Volume(s.channels, s.depth, s.height, s.width);
  double amp_max = 0.0;
  for (double a : s.amplitude) amp_max = std::max(amp_max, a);

  std::vector<std::complex<double>> buf(static_cast<std::size_t>(n));
  std::vector<double> real_out;
  for (index_t c = 0; c < s.channels; ++c) {
    for (index_t i = 0; i < n; ++i) {
      const double a = s.amplitude[static_cast<std::size_t>(c * n + i)];
      const double p = s.phase[static_cast<std::size_t>(c * n + i)];
      buf[static_cast<std::size_t>(i)] = {a * std::cos(p), a * std::sin(p)};
    }
    const double imag = fft::inverse_centered(buf, s.depth, s.height, s.width, real_out);
    r.imag_residual = std::max(r.imag_residual, imag);
    std::copy(real_out.begin(), real_out.end(), r.volume.voxels.begin() + c * n);
  }
  // Residual and amplitude compared at the same (unnormalized) scale.
  if (r.imag_residual * static_cast<double>(n) > 1e-6 * amp_max) {
    throw NumericError("reconstruct: conjugate-symmetry violation, imaginary residual " +
                       std::to_string(r.imag_residual));
  }
  return r;
}

}  // namespace bss
