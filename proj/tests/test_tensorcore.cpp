#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bss/kernels.hpp"
#include "bss/tape.hpp"

using namespace bss;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(s);
  for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("relu example") {
  Tape tape;
  NodeId x = tape.constant(Tensor(Shape{3}, {-1.0, 0.0, 2.0}));
  NodeId y = tape.relu(x);
  CHECK(tape.value(y)[0] == 0.0);
  CHECK(tape.value(y)[1] == 0.0);
  CHECK(tape.value(y)[2] == 2.0);
}

TEST_CASE("channel softmax symmetry example") {
  Tape tape;
  NodeId x = tape.constant(Tensor(Shape{2, 1}, {0.0, 0.0}));
  NodeId y = tape.channel_softmax(x);
  CHECK(tape.value(y)[0] == doctest::Approx(0.5));
  CHECK(tape.value(y)[1] == doctest::Approx(0.5));
}

TEST_CASE("conv3d identity-shaped kernel doubles the volume") {
  Rng rng(7);
  Tape tape;
  NodeId x = tape.constant(random_tensor(Shape{1, 3, 4, 5}, rng, 0.0, 1.0));
  NodeId w = tape.constant(Tensor(Shape{1, 1, 1, 1, 1}, {2.0}));
  NodeId b = tape.constant(Tensor(Shape{1}, {0.0}));
  NodeId y = tape.conv3d(x, w, b, 1);
  const Tensor& in = tape.value(x);
  const Tensor& out = tape.value(y);
  REQUIRE(out.shape() == in.shape());
  for (index_t i = 0; i < in.numel(); ++i) CHECK(out[i] == doctest::Approx(2.0 * in[i]));
}

TEST_CASE("conv3d shape algebra: floor((in + 2p - k)/s) + 1") {
  // All configs used by the segmentation net: 3x3x3 stride 1 and 2, 1x1x1.
  struct Cfg {
    index_t in, k, stride;
  };
  for (Cfg c : {Cfg{8, 3, 1}, Cfg{8, 3, 2}, Cfg{7, 3, 1}, Cfg{7, 3, 2}, Cfg{32, 3, 2},
                Cfg{64, 3, 1}, Cfg{5, 1, 1}}) {
    const index_t pad = c.k / 2;
    const index_t expect = (c.in + 2 * pad - c.k) / c.stride + 1;
    Shape out = kernels::conv3d_output_shape(Shape{1, c.in, c.in, c.in},
                                             Shape{2, 1, c.k, c.k, c.k}, c.stride);
    CHECK(out[1] == expect);
    CHECK(out[2] == expect);
    CHECK(out[3] == expect);
  }
}

TEST_CASE("conv3d rejects mismatched channels naming the axes") {
  Tape tape;
  NodeId x = tape.constant(Tensor(Shape{2, 4, 4, 4}));
  NodeId w = tape.constant(Tensor(Shape{3, 1, 3, 3, 3}));
  NodeId b = tape.constant(Tensor(Shape{3}));
  CHECK_THROWS_AS(tape.conv3d(x, w, b, 1), ConfigError);
}

TEST_CASE("evaluate rejects unsupported primitives") {
  Tape tape;
  NodeId x = tape.constant(Tensor(Shape{2}));
  CHECK_THROWS_AS(tape.evaluate("batchnorm", {x}), ConfigError);
  CHECK(tape.value(tape.evaluate("relu", {x})).numel() == 2);
}

TEST_CASE("backward of sum gives ones") {
  Tape tape;
  NodeId p = tape.parameter("p", Tensor(Shape{3}, {0.3, -0.2, 5.0}));
  NodeId loss = tape.reduce_sum(p);
  auto grads = tape.backward(loss);
  for (index_t i = 0; i < 3; ++i) CHECK(grads.at("p")[i] == 1.0);
}

TEST_CASE("backward of sum of squares gives 2p") {
  Tape tape;
  NodeId p = tape.parameter("p", Tensor(Shape{2}, {1.0, 2.0}));
  NodeId loss = tape.reduce_sum(tape.mul(p, p));
  auto grads = tape.backward(loss);
  CHECK(grads.at("p")[0] == doctest::Approx(2.0));
  CHECK(grads.at("p")[1] == doctest::Approx(4.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  NodeId p = tape.parameter("p", Tensor(Shape{3}));
  CHECK_THROWS_AS(tape.backward(p), ConfigError);
}

TEST_CASE("unreachable parameters get zero gradients") {
  Tape tape;
  NodeId p = tape.parameter("used", Tensor(Shape{2}, {1.0, 1.0}));
  tape.parameter("unused", Tensor(Shape{4}, {1.0, 2.0, 3.0, 4.0}));
  auto grads = tape.backward(tape.reduce_sum(p));
  CHECK(grads.at("unused").shape() == Shape{4});
  for (index_t i = 0; i < 4; ++i) CHECK(grads.at("unused")[i] == 0.0);
}

TEST_CASE("grad_check: linear model is exact") {
  Rng rng(11);
  double err = grad_check(
      [](Tape& t, Rng& r) {
        Tensor v(Shape{5});
        for (index_t i = 0; i < 5; ++i) v[i] = r.uniform(-1.0, 1.0);
        NodeId p = t.parameter("p", v);
        return t.reduce_sum(p);
      },
      rng, 1e-4);
  CHECK(err < 1e-10);
}

TEST_CASE("grad_check: every primitive passes finite differences on 20 seeds") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    // conv3d stride 1 + relu + reduce_mean
    CHECK(grad_check(
              [](Tape& t, Rng& r) {
                NodeId x = t.parameter("x", random_tensor(Shape{2, 3, 4, 4}, r));
                NodeId w = t.parameter("w", random_tensor(Shape{3, 2, 3, 3, 3}, r, -0.5, 0.5));
                NodeId b = t.parameter("b", random_tensor(Shape{3}, r, -0.1, 0.1));
                return t.reduce_mean(t.relu(t.conv3d(x, w, b, 1)));
              },
              rng, 1e-4) < 1e-4);
    // conv3d stride 2
    CHECK(grad_check(
              [](Tape& t, Rng& r) {
                NodeId x = t.parameter("x", random_tensor(Shape{1, 4, 4, 4}, r));
                NodeId w = t.parameter("w", random_tensor(Shape{2, 1, 3, 3, 3}, r, -0.5, 0.5));
                NodeId b = t.parameter("b", random_tensor(Shape{2}, r, -0.1, 0.1));
                return t.reduce_mean(t.conv3d(x, w, b, 2));
              },
              rng, 1e-4) < 1e-4);
    // upsample + mul + add + concat + sigmoid + softmax + reduce_sum
    CHECK(grad_check(
              [](Tape& t, Rng& r) {
                NodeId x = t.parameter("x", random_tensor(Shape{2, 2, 2, 2}, r));
                NodeId y = t.parameter("y", random_tensor(Shape{2, 4, 4, 4}, r));
                NodeId up = t.upsample2(x);
                NodeId m = t.mul(up, y);
                NodeId c = t.concat_channels(m, t.sigmoid(y));
                NodeId s = t.channel_softmax(c);
                return t.reduce_sum(t.mul(s, s));
              },
              rng, 1e-4) < 1e-4);
    // slice_depth + dice
    CHECK(grad_check(
              [](Tape& t, Rng& r) {
                NodeId x = t.parameter("x", random_tensor(Shape{2, 3, 4, 4}, r));
                NodeId probs = t.channel_softmax(t.slice_depth(x, 1));
                Tensor target(Shape{2, 4, 4});
                for (index_t i = 0; i < 16; ++i) {
                  const bool fg = r.uniform() < 0.4;
                  target[i] = fg ? 0.0 : 1.0;
                  target[16 + i] = fg ? 1.0 : 0.0;
                }
                return t.dice_loss(probs, target);
              },
              rng, 1e-4) < 1e-4);
  }
}

TEST_CASE("grad_check: conv+relu+dice composition") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    double err = grad_check(
        [](Tape& t, Rng& r) {
          NodeId x = t.parameter("x", random_tensor(Shape{1, 4, 4, 4}, r, 0.1, 0.9));
          NodeId w1 = t.parameter("w1", random_tensor(Shape{3, 1, 3, 3, 3}, r, -0.4, 0.4));
          NodeId b1 = t.parameter("b1", random_tensor(Shape{3}, r, 0.0, 0.1));
          NodeId h = t.relu(t.conv3d(x, w1, b1, 1));
          NodeId w2 = t.parameter("w2", random_tensor(Shape{2, 3, 1, 1, 1}, r, -0.4, 0.4));
          NodeId b2 = t.parameter("b2", random_tensor(Shape{2}, r, 0.0, 0.1));
          NodeId probs = t.channel_softmax(t.conv3d(h, w2, b2, 1));
          Tensor target(Shape{2, 4, 4, 4});
          for (index_t i = 0; i < 64; ++i) {
            const bool fg = r.uniform() < 0.3;
            target[i] = fg ? 0.0 : 1.0;
            target[64 + i] = fg ? 1.0 : 0.0;
          }
          return t.dice_loss(probs, target);
        },
        rng, 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("grad_check: sigmoid chain at saturation stays within relative floor") {
  Rng rng(3);
  double err = grad_check(
      [](Tape& t, Rng& r) {
        Tensor v(Shape{4});
        for (index_t i = 0; i < 4; ++i) v[i] = r.uniform() < 0.5 ? -20.0 : 20.0;
        NodeId p = t.parameter("p", v);
        return t.reduce_sum(t.sigmoid(t.sigmoid(p)));
      },
      rng, 1e-4);
  CHECK(err < 1e-3);
}

TEST_CASE("forward and gradients are deterministic") {
  auto run = [](Tensor* grad_out) {
    Rng rng(99);
    Tape tape;
    NodeId x = tape.parameter("x", random_tensor(Shape{2, 4, 6, 6}, rng));
    NodeId w = tape.parameter("w", random_tensor(Shape{4, 2, 3, 3, 3}, rng));
    NodeId b = tape.parameter("b", random_tensor(Shape{4}, rng));
    NodeId loss = tape.reduce_mean(tape.channel_softmax(tape.conv3d(x, w, b, 1)));
    *grad_out = tape.backward(loss).at("w");
    return tape.value(loss);
  };
  Tensor g1, g2;
  Tensor l1 = run(&g1), l2 = run(&g2);
  CHECK(l1.same_bits(l2));
  CHECK(g1.same_bits(g2));
}

TEST_CASE("tape reusable after backward") {
  Tape tape;
  NodeId p = tape.parameter("p", Tensor(Shape{2}, {1.0, 2.0}));
  NodeId loss = tape.reduce_sum(tape.mul(p, p));
  (void)tape.backward(loss);
  tape.set_parameter("p", Tensor(Shape{2}, {3.0, 1.0}));
  tape.recompute();
  CHECK(tape.value(loss)[0] == doctest::Approx(10.0));
  auto grads = tape.backward(loss);
  CHECK(grads.at("p")[0] == doctest::Approx(6.0));
}

TEST_CASE("parallel kernels match serial reference bit-exactly") {
  Rng rng(123);
  // conv3d forward/backward, both strides
  for (index_t stride : {1L, 2L}) {
    Tensor in = random_tensor(Shape{3, 6, 8, 9}, rng);
    Tensor w = random_tensor(Shape{4, 3, 3, 3, 3}, rng);
    Tensor b = random_tensor(Shape{4}, rng);
    Tensor out_p, out_s;
    kernels::conv3d_forward(out_p, in, w, b, stride);
    kernels::serial::conv3d_forward(out_s, in, w, b, stride);
    CHECK(out_p.same_bits(out_s));

    Tensor gout = random_tensor(out_p.shape(), rng);
    Tensor gin_p(in.shape()), gin_s(in.shape());
    kernels::conv3d_backward_input(gin_p, gout, w, stride);
    kernels::serial::conv3d_backward_input(gin_s, gout, w, stride);
    CHECK(gin_p.same_bits(gin_s));

    Tensor gw_p(w.shape()), gw_s(w.shape());
    kernels::conv3d_backward_weight(gw_p, gout, in, stride);
    kernels::serial::conv3d_backward_weight(gw_s, gout, in, stride);
    CHECK(gw_p.same_bits(gw_s));

    Tensor gb_p, gb_s;
    kernels::conv3d_backward_bias(gb_p, gout);
    kernels::serial::conv3d_backward_bias(gb_s, gout);
    CHECK(gb_p.same_bits(gb_s));
  }
  // softmax + upsample
  {
    Tensor in = random_tensor(Shape{3, 4, 5, 5}, rng);
    Tensor a, b2;
    kernels::channel_softmax_forward(a, in);
    kernels::serial::channel_softmax_forward(b2, in);
    CHECK(a.same_bits(b2));
    Tensor g = random_tensor(in.shape(), rng);
    Tensor ga, gb;
    kernels::channel_softmax_backward(ga, g, a);
    kernels::serial::channel_softmax_backward(gb, g, a);
    CHECK(ga.same_bits(gb));

    Tensor up_p, up_s;
    kernels::upsample2_forward(up_p, in);
    kernels::serial::upsample2_forward(up_s, in);
    CHECK(up_p.same_bits(up_s));
  }
  // bilinear resize
  {
    std::vector<double> plane(13 * 17);
    for (auto& v : plane) v = rng.uniform();
    std::vector<double> out_p, out_s;
    kernels::resize_bilinear_2d(out_p, 29, 31, plane, 13, 17);
    kernels::serial::resize_bilinear_2d(out_s, 29, 31, plane, 13, 17);
    CHECK(out_p == out_s);
  }
}
