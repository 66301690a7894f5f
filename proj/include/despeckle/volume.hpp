#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <tuple>
#include <vector>

#include "despeckle/error.hpp"

namespace despeckle {

/// Voxel counts along x, y, z.
struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  constexpr std::size_t voxel_count() const { return nx * ny * nz; }
  constexpr std::size_t operator[](std::size_t axis) const {
    return axis == 0 ? nx : (axis == 1 ? ny : nz);
  }
  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

/// Physical voxel size in millimeters.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

struct Index3 {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  friend constexpr bool operator==(const Index3&, const Index3&) = default;
};

/// Dense scalar volume, x fastest-varying, then y, then z.
///
/// Every constructor validates that the dimensions are positive, the spacing
/// is strictly positive, the payload length matches, and all samples are
/// finite. Once built the object is a plain value.
class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims dims, double fill, Spacing spacing = {});
  Volume3D(Dims dims, std::vector<double> data, Spacing spacing = {});

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims_.nx * (j + dims_.ny * k);
  }
  Index3 coords(std::size_t linear) const {
    return {linear % dims_.nx, (linear / dims_.nx) % dims_.ny,
            linear / (dims_.nx * dims_.ny)};
  }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[index(i, j, k)];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[index(i, j, k)];
  }

 private:
  Dims dims_{};
  Spacing spacing_{};
  std::vector<double> data_;
};

struct VolumeStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
  double max = 0.0;
};

VolumeStats volume_stats(const Volume3D& v);

/// Mean-centers and std-normalizes with statistics of the whole input, then
/// keeps the centered sub-volume of size `crop` (offset floor((n - c) / 2)).
Volume3D preprocess(const Volume3D& v, Dims crop);

struct UnitRescale {
  Volume3D volume;
  double min = 0.0;
  double max = 0.0;

  /// Maps a [0,1] volume back to the original intensity range.
  Volume3D invert(const Volume3D& unit) const;
};

/// Affine map of the intensity range onto [0, 1].
UnitRescale rescale_unit(const Volume3D& v);

/// Reflects index `i` (may be negative or past the end) into [0, n) without
/// repeating the edge sample: -1 -> 1, n -> n - 2. Periodic for large offsets.
std::ptrdiff_t mirror_index(std::ptrdiff_t i, std::ptrdiff_t n);

/// Mirror padding by r voxels per axis; requires r < dims componentwise.
Volume3D pad_mirror(const Volume3D& v, std::array<std::size_t, 3> r);

/// pad_mirror without the size restriction; reflection repeats periodically
/// once r reaches the axis length.
Volume3D pad_reflect(const Volume3D& v, std::array<std::size_t, 3> r);

/// Sub-volume starting at `offset` with extent `size`.
Volume3D crop(const Volume3D& v, Index3 offset, Dims size);

}  // namespace despeckle
