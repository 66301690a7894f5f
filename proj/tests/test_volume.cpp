#include <gtest/gtest.h>

#include <random>

#include "despeckle/volume.hpp"
#include "test_support.hpp"

namespace despeckle {
namespace {

using testing::random_unit_volume;

Volume3D row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Volume3D({n, 1, 1}, std::move(values));
}

TEST(Volume3D, RejectsBadGeometry) {
  EXPECT_THROW(Volume3D({0, 4, 4}, 0.0), InvalidArgument);
  EXPECT_THROW(Volume3D({2, 2, 1}, 0.0, {1.0, 0.0, 1.0}), InvalidArgument);
  EXPECT_THROW(Volume3D({2, 2, 1}, std::vector<double>(3, 0.0)), InvalidArgument);
  EXPECT_THROW(Volume3D({2, 1, 1}, std::vector<double>{0.0, NAN}), InvalidArgument);
}

TEST(Volume3D, LinearIndexRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> side(1, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    const Volume3D v(d, 0.0);
    for (std::size_t n = 0; n < v.size(); ++n) {
      const Index3 c = v.coords(n);
      ASSERT_EQ(v.index(c.i, c.j, c.k), n);
      ASSERT_EQ(n, c.i + d.nx * (c.j + d.ny * c.k));
    }
  }
}

TEST(VolumeStats, HandCases) {
  const VolumeStats c = volume_stats(Volume3D({4, 4, 2}, 5.0));
  EXPECT_EQ(c.mean, 5.0);
  EXPECT_EQ(c.variance, 0.0);

  const VolumeStats s = volume_stats(Volume3D({2, 2, 1}, {0.0, 2.0, 0.0, 2.0}));
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_DOUBLE_EQ(s.variance, 1.0);
  EXPECT_EQ(s.min, 0.0);
  EXPECT_EQ(s.max, 2.0);

  const VolumeStats h = volume_stats(row({0.0, 1.0}));
  EXPECT_DOUBLE_EQ(h.mean, 0.5);
  EXPECT_DOUBLE_EQ(h.variance, 0.25);
}

TEST(VolumeStats, EmptyVolume) {
  try {
    volume_stats(Volume3D{});
    FAIL() << "expected an error";
  } catch (const DataContractError& e) {
    EXPECT_STREQ(e.what(), "empty volume");
  }
}

TEST(Preprocess, ConstantIsDegenerate) {
  try {
    preprocess(Volume3D({4, 4, 4}, 3.0), {2, 2, 2});
    FAIL() << "expected an error";
  } catch (const DataContractError& e) {
    EXPECT_STREQ(e.what(), "degenerate volume");
  }
}

TEST(Preprocess, RejectsOversizedCrop) {
  EXPECT_THROW(preprocess(random_unit_volume({4, 4, 4}, 1), {5, 4, 4}), InvalidArgument);
}

TEST(Preprocess, AffineWithoutCrop) {
  // Values 8 and 12 alternate: mean 10, population std 2.
  std::vector<double> data(32);
  for (std::size_t n = 0; n < data.size(); ++n) data[n] = n % 2 == 0 ? 8.0 : 12.0;
  const Volume3D v({4, 4, 2}, data);
  const Volume3D out = preprocess(v, v.dims());
  for (std::size_t n = 0; n < out.size(); ++n) {
    EXPECT_DOUBLE_EQ(out.data()[n], (data[n] - 10.0) / 2.0);
  }
  const VolumeStats s = volume_stats(out);
  EXPECT_NEAR(s.mean, 0.0, 1e-12);
  EXPECT_NEAR(s.variance, 1.0, 1e-12);
}

TEST(Preprocess, CentredCropOffsets) {
  const Volume3D v = random_unit_volume({256, 256, 64}, 5);
  const VolumeStats s = volume_stats(v);
  const double sd = std::sqrt(s.variance);
  const Volume3D out = preprocess(v, {128, 128, 32});
  ASSERT_EQ(out.dims(), (Dims{128, 128, 32}));
  for (auto [i, j, k] : {Index3{0, 0, 0}, Index3{127, 127, 31}, Index3{5, 77, 13}}) {
    EXPECT_DOUBLE_EQ(out(i, j, k), (v(i + 64, j + 64, k + 16) - s.mean) / sd);
  }
}

TEST(Preprocess, PropertyZeroMeanUnitVariance) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> side(2, 12);
  std::uniform_real_distribution<double> scale(0.1, 100.0), shift(-50.0, 50.0);
  for (int trial = 0; trial < 40; ++trial) {
    Volume3D v = random_unit_volume({side(rng), side(rng), side(rng)}, rng());
    const double a = scale(rng), b = shift(rng);
    for (double& x : v.data()) x = a * x + b;
    const VolumeStats s = volume_stats(preprocess(v, v.dims()));
    EXPECT_LT(std::abs(s.mean), 1e-6);
    EXPECT_LT(std::abs(s.variance - 1.0), 1e-5);
  }
}

TEST(RescaleUnit, HandCases) {
  const UnitRescale a = rescale_unit(row({0.0, 10.0}));
  EXPECT_EQ(a.volume.data()[0], 0.0);
  EXPECT_EQ(a.volume.data()[1], 1.0);
  EXPECT_EQ(a.min, 0.0);
  EXPECT_EQ(a.max, 10.0);

  const UnitRescale b = rescale_unit(row({-1.0, 0.0, 1.0}));
  EXPECT_DOUBLE_EQ(b.volume.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(b.volume.data()[1], 0.5);
  EXPECT_DOUBLE_EQ(b.volume.data()[2], 1.0);

  EXPECT_THROW(rescale_unit(Volume3D({3, 3, 3}, 2.0)), DataContractError);
}

TEST(RescaleUnit, PropertyRangeAndInverse) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> scale(0.01, 1000.0), shift(-500.0, 500.0);
  for (int trial = 0; trial < 40; ++trial) {
    Volume3D v = random_unit_volume({7, 5, 3}, rng());
    const double a = scale(rng), b = shift(rng);
    for (double& x : v.data()) x = a * x + b;
    const UnitRescale r = rescale_unit(v);
    const Volume3D back = r.invert(r.volume);
    for (std::size_t n = 0; n < v.size(); ++n) {
      const double u = r.volume.data()[n];
      ASSERT_GE(u, 0.0);
      ASSERT_LE(u, 1.0);
      const double x = v.data()[n];
      ASSERT_LE(std::abs(back.data()[n] - x), 1e-6 * std::max(1.0, std::abs(x)));
    }
  }
}

TEST(PadMirror, ZeroIsIdentity) {
  const Volume3D v = random_unit_volume({4, 3, 2}, 9);
  const Volume3D p = pad_mirror(v, {0, 0, 0});
  EXPECT_TRUE(testing::bitwise_equal(v, p));
}

TEST(PadMirror, RowReflection) {
  const double a = 1.0, b = 2.0, c = 3.0;
  const Volume3D r1 = pad_mirror(row({a, b, c}), {1, 0, 0});
  EXPECT_EQ(std::vector<double>(r1.data().begin(), r1.data().end()),
            (std::vector<double>{b, a, b, c, b}));
  const Volume3D r2 = pad_mirror(row({a, b, c}), {2, 0, 0});
  EXPECT_EQ(std::vector<double>(r2.data().begin(), r2.data().end()),
            (std::vector<double>{c, b, a, b, c, b, a}));
}

TEST(PadMirror, RejectsPaddingAsLargeAsVolume) {
  EXPECT_THROW(pad_mirror(row({1.0, 2.0, 3.0}), {3, 0, 0}), InvalidArgument);
  EXPECT_THROW(pad_mirror(Volume3D({4, 4, 2}, 0.0), {1, 1, 2}), InvalidArgument);
}

TEST(PadMirror, PropertyCropInverts) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> side(2, 10);
  for (int trial = 0; trial < 40; ++trial) {
    const Dims d{side(rng), side(rng), side(rng)};
    const Volume3D v = random_unit_volume(d, rng());
    const std::array<std::size_t, 3> r{rng() % d.nx, rng() % d.ny, rng() % d.nz};
    const Volume3D back = crop(pad_mirror(v, r), {r[0], r[1], r[2]}, d);
    ASSERT_TRUE(testing::bitwise_equal(v, back));
  }
}

TEST(MirrorIndex, MatchesPadMirrorAndStaysInRange) {
  EXPECT_EQ(mirror_index(-1, 5), 1);
  EXPECT_EQ(mirror_index(5, 5), 3);
  EXPECT_EQ(mirror_index(-4, 5), 4);
  EXPECT_EQ(mirror_index(-5, 5), 3);
  EXPECT_EQ(mirror_index(7, 1), 0);
  for (std::ptrdiff_t n = 1; n < 7; ++n) {
    for (std::ptrdiff_t i = -30; i < 30; ++i) {
      const auto m = mirror_index(i, n);
      ASSERT_GE(m, 0);
      ASSERT_LT(m, n);
    }
  }
}

}  // namespace
}  // namespace despeckle
