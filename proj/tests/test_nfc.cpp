#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "bss/nfc.hpp"

using namespace bss;

namespace {

// Brute-force oracle: enumerate every offset pair and keep those that are on
// the stride lattice with the window fully inside the slice.
std::vector<std::pair<index_t, index_t>> enumerate_windows(index_t h, index_t w, index_t k,
                                                           index_t s) {
  std::vector<std::pair<index_t, index_t>> out;
  for (index_t y = 0; y < h; ++y) {
    for (index_t x = 0; x < w; ++x) {
      if (y % s == 0 && x % s == 0 && y + k <= h && x + k <= w) out.emplace_back(y, x);
    }
  }
  return out;
}

std::vector<double> iota_plane(index_t h, index_t w) {
  std::vector<double> p(static_cast<std::size_t>(h * w));
  for (index_t i = 0; i < h * w; ++i) p[static_cast<std::size_t>(i)] = static_cast<double>(i);
  return p;
}

}  // namespace

TEST_CASE("divide: 112x112 slice with defaults gives 64 patches of 56x56") {
  auto plane = iota_plane(112, 112);
  PatchSequence seq = divide(plane, 112, 112, 56, 8);
  CHECK(seq.patches.size() == 64);
  CHECK(seq.patch == 56);
  CHECK(patch_count(112, 112, 56, 8) == 64);
  CHECK(enumerate_windows(112, 112, 56, 8).size() == 64);
}

TEST_CASE("divide: window equal to slice gives exactly one patch equal to the slice") {
  auto plane = iota_plane(9, 9);
  PatchSequence seq = divide(plane, 9, 9, 9, 3);
  REQUIRE(seq.patches.size() == 1);
  CHECK(seq.patches[0] == plane);
}

TEST_CASE("divide: 8x8 slice, k=4, s=4 gives the four quadrants row-major") {
  auto plane = iota_plane(8, 8);
  PatchSequence seq = divide(plane, 8, 8, 4, 4);
  REQUIRE(seq.patches.size() == 4);
  CHECK(seq.origins[0] == std::make_pair<index_t, index_t>(0, 0));
  CHECK(seq.origins[1] == std::make_pair<index_t, index_t>(0, 4));
  CHECK(seq.origins[2] == std::make_pair<index_t, index_t>(4, 0));
  CHECK(seq.origins[3] == std::make_pair<index_t, index_t>(4, 4));
  CHECK(seq.patches[1][0] == 4.0);   // top-right quadrant starts at column 4
  CHECK(seq.patches[2][0] == 32.0);  // bottom-left starts at row 4
}

TEST_CASE("divide matches brute-force enumeration on 200 random configurations") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const index_t h = rng.uniform_int(4, 64);
    const index_t w = rng.uniform_int(4, 64);
    const index_t k = rng.uniform_int(1, std::min(h, w));
    const index_t s = rng.uniform_int(1, 16);
    auto expected = enumerate_windows(h, w, k, s);
    auto plane = iota_plane(h, w);
    PatchSequence seq = divide(plane, h, w, k, s);
    REQUIRE(seq.origins == expected);
    CHECK(patch_count(h, w, k, s) == static_cast<index_t>(expected.size()));
    // every tile matches its window content
    for (std::size_t j = 0; j < seq.patches.size(); ++j) {
      const auto [oy, ox] = seq.origins[j];
      for (index_t y = 0; y < k; ++y) {
        for (index_t x = 0; x < k; ++x) {
          REQUIRE(seq.patches[j][static_cast<std::size_t>(y * k + x)] ==
                  plane[static_cast<std::size_t>((oy + y) * w + ox + x)]);
        }
      }
    }
  }
}

TEST_CASE("divide rejects invalid window and stride") {
  auto plane = iota_plane(8, 8);
  CHECK_THROWS_AS(divide(plane, 8, 8, 9, 2), ConfigError);
  CHECK_THROWS_AS(divide(plane, 8, 8, 4, 0), ConfigError);
}

namespace {

std::pair<PatchSequence, LabelPatchSequence> toy_patches(index_t d, index_t k) {
  PatchSequence img;
  LabelPatchSequence lbl;
  img.patch = lbl.patch = k;
  for (index_t j = 0; j < d; ++j) {
    img.patches.emplace_back(static_cast<std::size_t>(k * k), 0.001 * static_cast<double>(j));
    lbl.patches.emplace_back(static_cast<std::size_t>(k * k),
                             static_cast<std::int32_t>(j % 3));
    img.origins.emplace_back(0, 0);
    lbl.origins.emplace_back(0, 0);
  }
  return {img, lbl};
}

}  // namespace

TEST_CASE("stack sequential keeps order") {
  auto [img, lbl] = toy_patches(64, 4);
  Rng rng(1);
  StackedPair out = stack(img, lbl, StackStrategy::kSequential, 0.0, rng);
  REQUIRE(out.depth == 64);
  for (index_t j = 0; j < 64; ++j) {
    CHECK(out.image[static_cast<std::size_t>(j * 16)] == 0.001 * static_cast<double>(j));
    CHECK(out.labels[static_cast<std::size_t>(j * 16)] == static_cast<std::int32_t>(j % 3));
  }
}

TEST_CASE("stack random permutes image and label identically") {
  auto [img, lbl] = toy_patches(20, 3);
  Rng rng(77);
  StackedPair out = stack(img, lbl, StackStrategy::kRandom, 0.0, rng);
  REQUIRE(out.depth == 20);
  std::multiset<double> in_vals, out_vals;
  for (index_t j = 0; j < 20; ++j) {
    in_vals.insert(img.patches[static_cast<std::size_t>(j)][0]);
    out_vals.insert(out.image[static_cast<std::size_t>(j * 9)]);
    // pairing is preserved: image value v = 0.001*j must sit with label j%3
    const double v = out.image[static_cast<std::size_t>(j * 9)];
    const auto src = static_cast<index_t>(std::lround(v / 0.001));
    CHECK(out.labels[static_cast<std::size_t>(j * 9)] == static_cast<std::int32_t>(src % 3));
  }
  CHECK(in_vals == out_vals);

  // determinism per seed
  Rng rng2(77);
  StackedPair out2 = stack(img, lbl, StackStrategy::kRandom, 0.0, rng2);
  CHECK(out.image == out2.image);
  CHECK(out.labels == out2.labels);
}

TEST_CASE("stack with_noise at probability zero equals sequential") {
  auto [img, lbl] = toy_patches(12, 4);
  Rng rng_a(5), rng_b(5);
  StackedPair a = stack(img, lbl, StackStrategy::kWithNoise, 0.0, rng_a);
  StackedPair b = stack(img, lbl, StackStrategy::kSequential, 0.0, rng_b);
  CHECK(a.image == b.image);
  CHECK(a.labels == b.labels);
}

TEST_CASE("stack with_noise inserts background-labeled noise slices") {
  auto [img, lbl] = toy_patches(40, 4);
  for (auto& p : lbl.patches) std::fill(p.begin(), p.end(), 1);  // all-foreground labels
  Rng rng(9);
  StackedPair out = stack(img, lbl, StackStrategy::kWithNoise, 0.5, rng, 0.5, 0.05);
  CHECK(out.depth > 40);
  index_t noise_slices = 0;
  for (index_t z = 0; z < out.depth; ++z) {
    if (out.labels[static_cast<std::size_t>(z * 16)] == 0) {
      ++noise_slices;
      for (index_t i = 0; i < 16; ++i) {
        const double v = out.image[static_cast<std::size_t>(z * 16 + i)];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  CHECK(noise_slices == out.depth - 40);
}

TEST_CASE("stack rejects empty and mismatched sequences") {
  PatchSequence img;
  LabelPatchSequence lbl;
  img.patch = lbl.patch = 2;
  Rng rng(1);
  CHECK_THROWS_AS(stack(img, lbl, StackStrategy::kSequential, 0.0, rng), ConfigError);
  img.patches.emplace_back(4, 0.0);
  CHECK_THROWS_AS(stack(img, lbl, StackStrategy::kSequential, 0.0, rng), ConfigError);
}

TEST_CASE("resize to identical dims is bit-exact") {
  Rng rng(4);
  std::vector<double> stack_img(3 * 5 * 5);
  for (auto& v : stack_img) v = rng.uniform();
  auto out = resize_image_stack(stack_img, 3, 5, 5, 5, 5);
  CHECK(out == stack_img);

  std::vector<std::int32_t> stack_lbl(3 * 5 * 5);
  for (auto& v : stack_lbl) v = static_cast<std::int32_t>(rng.uniform_int(0, 2));
  auto lout = resize_label_stack(stack_lbl, 3, 5, 5, 5, 5);
  CHECK(lout == stack_lbl);
}

TEST_CASE("resize of a constant patch stays constant under both interps") {
  std::vector<double> img(4 * 4, 0.37);
  auto out = resize_image_stack(img, 1, 4, 4, 11, 7);
  for (double v : out) CHECK(v == doctest::Approx(0.37));
  std::vector<std::int32_t> lbl(4 * 4, 2);
  auto lout = resize_label_stack(lbl, 1, 4, 4, 11, 7);
  for (auto v : lout) CHECK(v == 2);
}

TEST_CASE("bilinear 2x2 -> 2x4 gives corner-aligned thirds") {
  // hand-evaluated corner-aligned weights
  std::vector<double> img = {0.0, 1.0, 0.0, 1.0};
  auto out = resize_image_stack(img, 1, 2, 2, 2, 4);
  const std::vector<double> row = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
  for (index_t y = 0; y < 2; ++y) {
    for (index_t x = 0; x < 4; ++x) {
      CHECK(out[static_cast<std::size_t>(y * 4 + x)] == doctest::Approx(row[x]).epsilon(1e-12));
    }
  }
}

namespace {

BarelyLabeledItem make_item(index_t d, index_t h, index_t w, index_t k_ann, Rng& rng) {
  BarelyLabeledItem item;
  item.volume = Volume(1, d, h, w);
  for (auto& v : item.volume.voxels) v = rng.uniform();
  item.annotation.slice_index = k_ann;
  item.annotation.label2d.height = h;
  item.annotation.label2d.width = w;
  item.annotation.label2d.classes.assign(static_cast<std::size_t>(h * w), 0);
  // blob of class 1 in the middle
  for (index_t y = h / 4; y < 3 * h / 4; ++y) {
    for (index_t x = w / 4; x < 3 * w / 4; ++x) item.annotation.label2d.at(y, x) = 1;
  }
  return item;
}

}  // namespace

TEST_CASE("synthesize: 112x112 slice with defaults gives 64x112x112") {
  Rng rng(21);
  auto item = make_item(10, 112, 112, 5, rng);
  NfcConfig cfg;  // k = 56, s = 8, sequential
  Rng synth_rng(3);
  auto [img, lbl] = synthesize(item.volume, item.annotation, 2, cfg, synth_rng);
  CHECK(img.depth == 64);
  CHECK(img.height == 112);
  CHECK(img.width == 112);
  CHECK(lbl.depth == 64);
  CHECK(lbl.num_classes == 2);
  lbl.validate();
}

TEST_CASE("synthesize: all-background annotation gives all-background labels") {
  Rng rng(22);
  auto item = make_item(6, 32, 32, 2, rng);
  std::fill(item.annotation.label2d.classes.begin(), item.annotation.label2d.classes.end(), 0);
  NfcConfig cfg;
  cfg.stride = 4;
  Rng synth_rng(3);
  auto [img, lbl] = synthesize(item.volume, item.annotation, 2, cfg, synth_rng);
  for (auto c : lbl.classes) CHECK(c == 0);
}

TEST_CASE("synthesize: seeded determinism with random strategy") {
  Rng rng(23);
  auto item = make_item(6, 32, 32, 2, rng);
  NfcConfig cfg;
  cfg.stride = 4;
  cfg.stack_strategy = StackStrategy::kRandom;
  Rng a(55), b(55);
  auto [img_a, lbl_a] = synthesize(item.volume, item.annotation, 2, cfg, a);
  auto [img_b, lbl_b] = synthesize(item.volume, item.annotation, 2, cfg, b);
  CHECK(img_a.voxels == img_b.voxels);
  CHECK(lbl_a.classes == lbl_b.classes);
}

TEST_CASE("synthesize: locality -- only the annotated slice matters") {
  Rng rng(24);
  auto item = make_item(8, 24, 24, 3, rng);
  NfcConfig cfg;
  cfg.stride = 4;
  Rng a(7);
  auto [img_a, lbl_a] = synthesize(item.volume, item.annotation, 2, cfg, a);
  // scribble over every other slice
  Volume tampered = item.volume;
  for (index_t z = 0; z < tampered.depth; ++z) {
    if (z == item.annotation.slice_index) continue;
    for (index_t y = 0; y < tampered.height; ++y) {
      for (index_t x = 0; x < tampered.width; ++x) tampered.at(0, z, y, x) = 0.123;
    }
  }
  Rng b(7);
  auto [img_b, lbl_b] = synthesize(tampered, item.annotation, 2, cfg, b);
  CHECK(img_a.voxels == img_b.voxels);
  CHECK(lbl_a.classes == lbl_b.classes);
}

TEST_CASE("synthesize: class set of output is a subset of the annotation's") {
  Rng rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    const index_t h = rng.uniform_int(12, 40);
    const index_t w = rng.uniform_int(12, 40);
    auto item = make_item(5, h, w, 1, rng);
    for (auto& c : item.annotation.label2d.classes) {
      c = static_cast<std::int32_t>(rng.uniform_int(0, 3));
    }
    NfcConfig cfg;
    cfg.window_fraction = 0.5;
    cfg.stride = rng.uniform_int(2, 8);
    Rng synth_rng(trial);
    auto [img, lbl] = synthesize(item.volume, item.annotation, 4, cfg, synth_rng);
    std::set<std::int32_t> in_classes(item.annotation.label2d.classes.begin(),
                                      item.annotation.label2d.classes.end());
    std::set<std::int32_t> out_classes(lbl.classes.begin(), lbl.classes.end());
    for (auto c : out_classes) CHECK(in_classes.count(c) == 1);
  }
}
