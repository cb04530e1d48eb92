// Kernel benchmark: OpenMP-parallel implementations against the serial
// reference, at the shapes the training loop actually uses.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "bss/kernels.hpp"
#include "bss/rng.hpp"

using namespace bss;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Tensor random_tensor(const Shape& s, Rng& rng) {
  Tensor t(s);
  for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void report(const std::string& name, double gflop, double serial_ms, double parallel_ms) {
  std::printf("%-28s %9.2f ms serial (%5.2f GF/s) %9.2f ms parallel (%5.2f GF/s)  x%.2f\n",
              name.c_str(), serial_ms, gflop / serial_ms, parallel_ms, gflop / parallel_ms,
              serial_ms / parallel_ms);
}

}  // namespace

int main() {
  Rng rng(1);

  struct ConvCase {
    const char* name;
    index_t ci, co, d, h, w, stride;
    int reps;
  };
  const ConvCase cases[] = {
      {"conv3d 1->4 @32x64x64", 1, 4, 32, 64, 64, 1, 3},
      {"conv3d 8->4 @32x64x64", 8, 4, 32, 64, 64, 1, 3},
      {"conv3d 8->8 @16x32x32", 8, 8, 16, 32, 32, 1, 5},
      {"conv3d 4->8 s2 @32x64x64", 4, 8, 32, 64, 64, 2, 5},
  };

  std::printf("%-28s %25s %27s\n", "kernel", "serial", "parallel");
  for (const ConvCase& c : cases) {
    Tensor in = random_tensor(Shape{c.ci, c.d, c.h, c.w}, rng);
    Tensor w = random_tensor(Shape{c.co, c.ci, 3, 3, 3}, rng);
    Tensor b = random_tensor(Shape{c.co}, rng);
    Tensor out;
    kernels::conv3d_forward(out, in, w, b, c.stride);
    const double out_n = static_cast<double>(out.numel());
    const double gflop = 2.0 * out_n * static_cast<double>(c.ci) * 27.0 / 1e6;  // per ms basis

    const double sp = time_ms([&] { kernels::serial::conv3d_forward(out, in, w, b, c.stride); },
                              c.reps);
    const double pp = time_ms([&] { kernels::conv3d_forward(out, in, w, b, c.stride); }, c.reps);
    report(std::string(c.name) + " fwd", gflop, sp, pp);

    Tensor gout = random_tensor(out.shape(), rng);
    Tensor gin(in.shape());
    const double gi_s = time_ms(
        [&] { kernels::serial::conv3d_backward_input(gin, gout, w, c.stride); }, c.reps);
    const double gi_p =
        time_ms([&] { kernels::conv3d_backward_input(gin, gout, w, c.stride); }, c.reps);
    report(std::string(c.name) + " bwd-in", gflop, gi_s, gi_p);

    Tensor gw(w.shape());
    const double gw_s = time_ms(
        [&] { kernels::serial::conv3d_backward_weight(gw, gout, in, c.stride); }, c.reps);
    const double gw_p =
        time_ms([&] { kernels::conv3d_backward_weight(gw, gout, in, c.stride); }, c.reps);
    report(std::string(c.name) + " bwd-w", gflop, gw_s, gw_p);
  }

  {
    Tensor in = random_tensor(Shape{2, 32, 64, 64}, rng);
    Tensor out;
    const double gflop = static_cast<double>(in.numel()) * 8.0 / 1e6;
    const double sp = time_ms([&] { kernels::serial::channel_softmax_forward(out, in); }, 10);
    const double pp = time_ms([&] { kernels::channel_softmax_forward(out, in); }, 10);
    report("softmax 2ch @32x64x64", gflop, sp, pp);
  }

  {
    std::vector<double> plane(64 * 64);
    for (auto& v : plane) v = rng.uniform();
    std::vector<double> out;
    const double gflop = 112.0 * 112.0 * 8.0 / 1e6;
    const double sp =
        time_ms([&] { kernels::serial::resize_bilinear_2d(out, 112, 112, plane, 64, 64); }, 50);
    const double pp =
        time_ms([&] { kernels::resize_bilinear_2d(out, 112, 112, plane, 64, 64); }, 50);
    report("bilinear 64^2 -> 112^2", gflop, sp, pp);
  }

  {
    std::vector<kernels::Point3> a, b;
    Rng prng(2);
    for (int i = 0; i < 3000; ++i) {
      a.push_back({prng.uniform_int(0, 63), prng.uniform_int(0, 63), prng.uniform_int(0, 63)});
      b.push_back({prng.uniform_int(0, 63), prng.uniform_int(0, 63), prng.uniform_int(0, 63)});
    }
    const double gflop = 3000.0 * 3000.0 * 8.0 / 1e6;
    const double sp = time_ms([&] { kernels::serial::nearest_surface_distances(a, b); }, 3);
    const double pp = time_ms([&] { kernels::nearest_surface_distances(a, b); }, 3);
    report("surface dist 3k x 3k", gflop, sp, pp);
  }

  return 0;
}
