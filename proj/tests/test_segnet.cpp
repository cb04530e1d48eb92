#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bss/objectives.hpp"
#include "bss/segnet.hpp"

using namespace bss;

namespace {

Tensor random_volume_tensor(index_t c, index_t d, index_t h, index_t w, Rng& rng) {
  Tensor t(Shape{c, d, h, w});
  for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

SegNetConfig tiny_config() {
  SegNetConfig cfg;
  cfg.base_channels = 2;
  cfg.levels = 2;
  cfg.num_classes = 2;
  return cfg;
}

}  // namespace

TEST_CASE("init is deterministic per seed and seeds differ") {
  SegNetConfig cfg = tiny_config();
  Rng a(5), b(5), c(6);
  ParameterSet pa = segnet_init(cfg, a);
  ParameterSet pb = segnet_init(cfg, b);
  ParameterSet pc = segnet_init(cfg, c);
  REQUIRE(pa.congruent(pb));
  REQUIRE(pa.congruent(pc));
  bool same_ab = true, same_ac = true;
  for (std::size_t i = 0; i < pa.entries().size(); ++i) {
    same_ab = same_ab && pa.entries()[i].second.same_bits(pb.entries()[i].second);
    same_ac = same_ac && pa.entries()[i].second.same_bits(pc.entries()[i].second);
  }
  CHECK(same_ab);
  CHECK(!same_ac);
}

TEST_CASE("init respects the He-uniform bound and zero biases") {
  SegNetConfig cfg = tiny_config();
  Rng rng(17);
  ParameterSet p = segnet_init(cfg, rng);
  for (const auto& [name, t] : p.entries()) {
    if (name.ends_with(".b")) {
      for (index_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
    } else {
      const Shape& s = t.shape();
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3] * s[4]);
      const double bound = std::sqrt(6.0 / fan_in);
      for (index_t i = 0; i < t.numel(); ++i) {
        CHECK(std::abs(t[i]) <= bound);
      }
    }
  }
}

TEST_CASE("forward produces a per-voxel probability simplex") {
  SegNetConfig cfg = tiny_config();
  Rng rng(3);
  ParameterSet p = segnet_init(cfg, rng);
  Tensor in = random_volume_tensor(1, 8, 8, 8, rng);
  Tensor out = segnet_forward(cfg, p, in);
  REQUIRE(out.shape() == Shape{2, 8, 8, 8});
  for (index_t v = 0; v < 512; ++v) {
    const double sum = out[v] + out[512 + v];
    CHECK(std::abs(sum - 1.0) < 1e-6);
    CHECK(out[v] >= 0.0);
  }
}

TEST_CASE("zero-initialized head gives the uniform distribution") {
  SegNetConfig cfg = tiny_config();
  Rng rng(4);
  ParameterSet p = segnet_init(cfg, rng);
  Tensor& hw = p.at("head.w");
  for (index_t i = 0; i < hw.numel(); ++i) hw[i] = 0.0;
  Tensor in = random_volume_tensor(1, 8, 8, 8, rng);
  Tensor out = segnet_forward(cfg, p, in);
  for (index_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("teacher and student paths compute the same function") {
  SegNetConfig cfg = tiny_config();
  Rng rng(9);
  ParameterSet p = segnet_init(cfg, rng);
  Tensor in = random_volume_tensor(1, 8, 8, 8, rng);
  Tensor eager = segnet_forward(cfg, p, in);

  Tape tape;
  auto ids = segnet_register(cfg, tape, p);
  NodeId out = segnet_forward(cfg, tape, ids, in);
  CHECK(tape.value(out).same_bits(eager));
}

TEST_CASE("forward rejects indivisible dims and states the required padding") {
  SegNetConfig cfg = tiny_config();
  Rng rng(11);
  ParameterSet p = segnet_init(cfg, rng);
  Tensor in = random_volume_tensor(1, 6, 8, 8, rng);
  try {
    segnet_forward(cfg, p, in);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("pad by 2") != std::string::npos);
  }
}

TEST_CASE("gradient flow through the full network at 8x8x8") {
  Rng rng(21);
  const double err = grad_check(
      [](Tape& t, Rng& r) {
        SegNetConfig cfg = tiny_config();
        ParameterSet p = segnet_init(cfg, r);
        auto ids = segnet_register(cfg, t, p);
        Tensor in = random_volume_tensor(1, 8, 8, 8, r);
        NodeId probs = segnet_forward(cfg, t, ids, in);
        LabelVolume target(8, 8, 8, 2);
        for (index_t z = 2; z < 6; ++z) {
          for (index_t y = 2; y < 6; ++y) {
            for (index_t x = 2; x < 6; ++x) target.at(z, y, x) = 1;
          }
        }
        return t.dice_loss(probs, one_hot(target));
      },
      rng, 1e-4, 24);
  CHECK(err < 1e-4);
}

TEST_CASE("interior translation covariance at the downsample factor") {
  SegNetConfig cfg = tiny_config();
  Rng rng(31);
  ParameterSet p = segnet_init(cfg, rng);
  const index_t f = cfg.downsample_factor();  // 4
  Tensor in = random_volume_tensor(1, 16, 16, 16, rng);
  // shift along x by f (wrap ignored; compare interior only)
  Tensor shifted(in.shape());
  for (index_t z = 0; z < 16; ++z) {
    for (index_t y = 0; y < 16; ++y) {
      for (index_t x = 0; x < 16; ++x) {
        const index_t sx = (x + f) % 16;
        shifted[(z * 16 + y) * 16 + sx] = in[(z * 16 + y) * 16 + x];
      }
    }
  }
  Tensor out_a = segnet_forward(cfg, p, in);
  Tensor out_b = segnet_forward(cfg, p, shifted);
  // borders excluded generously (receptive field of the two-level net)
  const index_t m = 6;
  for (index_t z = m; z < 16 - m; ++z) {
    for (index_t y = m; y < 16 - m; ++y) {
      for (index_t x = m; x < 16 - m - f; ++x) {
        const double a = out_a[(z * 16 + y) * 16 + x];
        const double b = out_b[(z * 16 + y) * 16 + x + f];
        CHECK(a == doctest::Approx(b).epsilon(1e-9));
      }
    }
  }
}
