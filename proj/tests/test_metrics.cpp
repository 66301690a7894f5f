#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "despeckle/metrics.hpp"
#include "test_support.hpp"

namespace despeckle {
namespace {

using testing::random_unit_volume;

Volume3D ramp_x(Dims d) {
  Volume3D v(d, 0.0);
  for (std::size_t n = 0; n < v.size(); ++n) v.data()[n] = static_cast<double>(v.coords(n).i);
  return v;
}

TEST(Smpi, IdentityScoresOne) {
  const Volume3D v = random_unit_volume({8, 8, 4}, 1);
  const SmpiReport r = smpi(v, v);
  EXPECT_EQ(r.q, 1.0);
  EXPECT_NEAR(r.smpi, 1.0, 1e-12);
}

TEST(Smpi, ConstantAtMeanScoresZero) {
  const Volume3D v = random_unit_volume({8, 8, 4}, 2);
  const double mu = volume_stats(v).mean;
  const SmpiReport r = smpi(v, Volume3D(v.dims(), mu));
  EXPECT_NEAR(r.smpi, 0.0, 1e-12);
  EXPECT_NEAR(r.q, 1.0, 1e-12);
}

TEST(Smpi, HandComputedHalf) {
  const Volume3D o({2, 2, 1}, {0.0, 2.0, 0.0, 2.0});
  const Volume3D f({2, 2, 1}, {0.5, 1.5, 0.5, 1.5});
  const SmpiReport r = smpi(o, f);
  EXPECT_NEAR(r.mu_o, 1.0, 1e-12);
  EXPECT_NEAR(r.mu_r, 1.0, 1e-12);
  EXPECT_NEAR(r.var_o, 1.0, 1e-12);
  EXPECT_NEAR(r.var_r, 0.25, 1e-12);
  EXPECT_NEAR(r.q, 1.0, 1e-12);
  EXPECT_NEAR(r.smpi, 0.5, 1e-12);
}

TEST(Smpi, Errors) {
  EXPECT_THROW(smpi(Volume3D({2, 2, 1}, 1.0), Volume3D({2, 2, 1}, 1.0)), DataContractError);
  EXPECT_THROW(smpi(random_unit_volume({2, 2, 2}, 1), random_unit_volume({2, 2, 1}, 1)),
               DataContractError);
  try {
    smpi(Volume3D({2, 2, 1}, 1.0), Volume3D({2, 2, 1}, 1.0));
  } catch (const DataContractError& e) {
    EXPECT_STREQ(e.what(), "degenerate original");
  }
}

TEST(Smpi, PropertyScaleBehaviour) {
  // Scaling both volumes by s leaves the std ratio alone and multiplies the
  // mean gap by s, so smpi(s) = (1 + s * gap) * ratio.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Volume3D o = random_unit_volume({6, 5, 4}, rng());
    Volume3D f = random_unit_volume({6, 5, 4}, rng());
    for (double& x : f.data()) x = 0.3 * x + 0.2;
    const SmpiReport base = smpi(o, f);
    const double s = scale(rng);
    Volume3D os = o, fs = f;
    for (double& x : os.data()) x *= s;
    for (double& x : fs.data()) x *= s;
    const SmpiReport scaled = smpi(os, fs);
    const double ratio = std::sqrt(base.var_r) / std::sqrt(base.var_o);
    const double gap = std::abs(base.mu_r - base.mu_o);
    EXPECT_NEAR(std::sqrt(scaled.var_r) / std::sqrt(scaled.var_o), ratio, 1e-12);
    EXPECT_NEAR(scaled.q, 1.0 + s * gap, 1e-12);
    EXPECT_NEAR(scaled.smpi, (1.0 + s * gap) * ratio, 1e-12);
  }
  // With equal means the index is scale invariant.
  const Volume3D o({2, 2, 1}, {0.0, 2.0, 0.0, 2.0});
  const Volume3D f({2, 2, 1}, {0.5, 1.5, 0.5, 1.5});
  Volume3D o3 = o, f3 = f;
  for (double& x : o3.data()) x *= 3.0;
  for (double& x : f3.data()) x *= 3.0;
  EXPECT_NEAR(smpi(o3, f3).smpi, 0.5, 1e-12);
}

TEST(Smpi, UnitScaledUsesOriginalRange) {
  const Volume3D o({2, 2, 1}, {0.0, 200.0, 0.0, 200.0});
  const Volume3D f({2, 2, 1}, {60.0, 160.0, 60.0, 160.0});
  const SmpiReport r = smpi_unit_scaled(o, f);
  // Unit scale: o = [0,1,0,1], f = [0.3,0.8,...]; mu gap 0.05, std ratio 0.5.
  EXPECT_NEAR(r.q, 1.05, 1e-12);
  EXPECT_NEAR(r.smpi, 1.05 * 0.5, 1e-12);
}

TEST(Mse, HandCasesAndSymmetry) {
  const Volume3D a = random_unit_volume({5, 4, 3}, 6);
  const Volume3D b = random_unit_volume({5, 4, 3}, 7);
  EXPECT_EQ(mse(a, a), 0.0);
  EXPECT_EQ(mse(Volume3D({3, 3, 3}, 0.0), Volume3D({3, 3, 3}, 1.0)), 1.0);
  EXPECT_EQ(mse(a, b), mse(b, a));
  EXPECT_GT(mse(a, b), 0.0);
  EXPECT_THROW(mse(a, Volume3D({5, 4, 2}, 0.0)), DataContractError);
}

TEST(Warp, ZeroFieldIsBitwiseIdentity) {
  const Volume3D v = random_unit_volume({9, 7, 5}, 8);
  EXPECT_TRUE(testing::bitwise_equal(warp_trilinear(v, DisplacementField(v.dims())), v));
}

TEST(Warp, IntegerShiftOnRamp) {
  const Volume3D v = ramp_x({6, 3, 2});
  const Volume3D w = warp_trilinear(v, DisplacementField(v.dims(), {-1.0, 0.0, 0.0}));
  for (std::size_t n = 0; n < w.size(); ++n) {
    const auto i = static_cast<double>(w.coords(n).i);
    EXPECT_EQ(w.data()[n], i >= 1 ? i - 1 : 0.0);
  }
}

TEST(Warp, HalfVoxelShiftOnRamp) {
  const Volume3D v = ramp_x({8, 3, 3});
  const Volume3D w = warp_trilinear(v, DisplacementField(v.dims(), {-0.5, 0.0, 0.0}));
  for (std::size_t n = 0; n < w.size(); ++n) {
    const std::size_t i = w.coords(n).i;
    if (i >= 1) {
      EXPECT_NEAR(w.data()[n], static_cast<double>(i) - 0.5, 1e-12);
    }
  }
  EXPECT_EQ(w(0, 1, 1), 0.0);  // clamped at the x = 0 face
}

TEST(Warp, ShiftThereAndBackRestoresInterior) {
  const Volume3D v = random_unit_volume({12, 10, 8}, 9);
  const DisplacementField fwd(v.dims(), {2.0, -1.0, 1.0});
  const DisplacementField back(v.dims(), {-2.0, 1.0, -1.0});
  const Volume3D round = warp_trilinear(warp_trilinear(v, fwd), back);
  for (std::size_t n = 0; n < v.size(); ++n) {
    const Index3 c = v.coords(n);
    if (c.i < 2 || c.i >= 10 || c.j < 1 || c.j >= 9 || c.k < 1 || c.k >= 7) continue;
    EXPECT_EQ(round.data()[n], v.data()[n]);
  }
}

TEST(Warp, GroundTruthFieldRegistersExactly) {
  // fixed = moving shifted by one voxel along y; the true field undoes it.
  const Volume3D moving = random_unit_volume({10, 10, 6}, 10);
  const Volume3D fixed = warp_trilinear(moving, DisplacementField(moving.dims(), {0, 1, 0}));
  const Volume3D warped = warp_trilinear(moving, DisplacementField(moving.dims(), {0, 1, 0}));
  EXPECT_LE(mse(fixed, warped), 1e-10);
  EXPECT_GT(mse(fixed, moving), 1e-3);
}

TEST(Warp, TrilinearMatchesHandInterpolation) {
  const Volume3D v = random_unit_volume({3, 3, 3}, 12);
  std::vector<DisplacementField::Vec> vecs(v.size(), {0.0, 0.0, 0.0});
  vecs[v.index(0, 0, 0)] = {0.25, 0.5, 0.75};
  const Volume3D w = warp_trilinear(v, DisplacementField(v.dims(), vecs));
  double expected = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        expected += (dx ? 0.25 : 0.75) * (dy ? 0.5 : 0.5) * (dz ? 0.75 : 0.25) * v(dx, dy, dz);
  EXPECT_NEAR(w(0, 0, 0), expected, 1e-14);
}

TEST(Warp, DimensionMismatch) {
  EXPECT_THROW(warp_trilinear(Volume3D({4, 4, 4}, 0.0), DisplacementField({4, 4, 3})),
               DataContractError);
  EXPECT_THROW(DisplacementField({2, 2, 2}, {NAN, 0.0, 0.0}), InvalidArgument);
}

}  // namespace
}  // namespace despeckle
