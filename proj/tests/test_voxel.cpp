#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bss/rng.hpp"
#include "bss/volume.hpp"

using namespace bss;

TEST_CASE("extract_slice returns the requested plane") {
  Volume v(1, 4, 3, 3);
  for (index_t z = 0; z < 4; ++z) {
    for (index_t y = 0; y < 3; ++y) {
      for (index_t x = 0; x < 3; ++x) v.at(0, z, y, x) = static_cast<double>(z);
    }
  }
  Slice2d s = extract_slice(v, 2);
  CHECK(s.height == 3);
  CHECK(s.width == 3);
  for (index_t y = 0; y < 3; ++y) {
    for (index_t x = 0; x < 3; ++x) CHECK(s.at(0, y, x) == 2.0);
  }
}

TEST_CASE("extract_slice rejects out-of-range index") {
  Volume v(1, 4, 3, 3);
  CHECK_THROWS_AS(extract_slice(v, 4), ConfigError);
  CHECK_THROWS_AS(extract_slice(v, -1), ConfigError);
}

TEST_CASE("extract then re-insert leaves the volume unchanged") {
  Rng rng(5);
  Volume v(2, 5, 4, 6);
  for (auto& x : v.voxels) x = rng.uniform();
  const std::vector<double> before = v.voxels;
  for (index_t k = 0; k < v.depth; ++k) {
    Slice2d s = extract_slice(v, k);
    insert_slice(v, k, s);
  }
  CHECK(v.voxels == before);
}

TEST_CASE("normalize maps min-max to [0,1]") {
  Volume v(1, 1, 1, 2);
  v.voxels = {2.0, 4.0};
  Volume n = normalize(v);
  CHECK(n.voxels[0] == 0.0);
  CHECK(n.voxels[1] == 1.0);
}

TEST_CASE("normalize maps constant volumes to zeros") {
  Volume v(1, 2, 2, 2);
  std::fill(v.voxels.begin(), v.voxels.end(), 7.0);
  Volume n = normalize(v);
  for (double x : n.voxels) CHECK(x == 0.0);
}

TEST_CASE("normalize keeps already-normalized values") {
  Volume v(1, 1, 1, 3);
  v.voxels = {0.0, 0.5, 1.0};
  Volume n = normalize(v);
  CHECK(n.voxels == v.voxels);
}

TEST_CASE("normalize rejects non-finite input") {
  Volume v(1, 1, 1, 2);
  v.voxels = {0.0, std::nan("")};
  CHECK_THROWS_AS(normalize(v), ConfigError);
  v.voxels = {0.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(normalize(v), ConfigError);
}

TEST_CASE("label volume validates class range") {
  LabelVolume l(2, 2, 2, 2);
  l.at(0, 0, 0) = 1;
  CHECK_NOTHROW(l.validate());
  l.at(1, 1, 1) = 2;
  CHECK_THROWS_AS(l.validate(), ConfigError);
}
