#pragma once

#include <array>
#include <cstdint>
#include <variant>

#include "despeckle/volume.hpp"

namespace despeckle {

/// Parameters of the multiplicative speckle model u = v + v^gamma * eta,
/// eta ~ N(0, sigma^2).
struct SpeckleParams {
  double gamma = 0.5;
  double sigma = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Axis { x = 0, y = 1, z = 2 };

struct ConstantPhantom {
  double level = 0.5;
};

/// Voxels with coordinate < split along `axis` take `low`, the rest `high`.
struct TwoRegionPhantom {
  double low = 0.25;
  double high = 0.75;
  Axis axis = Axis::x;
  std::size_t split = 0;
};

/// Voxels strictly closer than `radius` to `center` take `inclusion`.
struct SphericalInclusionPhantom {
  double background = 0.25;
  double inclusion = 0.75;
  std::array<double, 3> center{};
  double radius = 0.0;
};

/// Linear ramp along x (the axial direction) from `start` at i = 0 to `end`
/// at i = nx - 1.
struct AxialGradientPhantom {
  double start = 0.0;
  double end = 1.0;
};

using PhantomShape = std::variant<ConstantPhantom, TwoRegionPhantom,
                                  SphericalInclusionPhantom, AxialGradientPhantom>;

struct PhantomSpec {
  PhantomShape shape;
  Dims dims;

  void validate() const;
};

/// Noise-free synthetic volume. Deterministic.
Volume3D generate_phantom(const PhantomSpec& spec);

/// Standard normal deviate for voxel `index` under `seed`.
///
/// Two 53-bit uniforms are derived from SplitMix64 applied to the counters
/// 2*index and 2*index+1 (offset by the seed) and combined with the cosine
/// branch of Box-Muller. The value depends only on (seed, index), so any
/// traversal order or thread split yields the same field.
double voxel_normal(std::uint64_t seed, std::uint64_t index);

/// Corrupts `v` with the speckle model. Output is not clamped.
Volume3D apply_speckle(const Volume3D& v, const SpeckleParams& p);

}  // namespace despeckle
