#include "despeckle/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace despeckle {

namespace {

void check_geometry(const Dims& dims, const Spacing& spacing) {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
    throw InvalidArgument("invalid dimensions: every axis must be positive");
  }
  if (!(spacing.sx > 0.0) || !(spacing.sy > 0.0) || !(spacing.sz > 0.0) ||
      !std::isfinite(spacing.sx) || !std::isfinite(spacing.sy) ||
      !std::isfinite(spacing.sz)) {
    throw InvalidArgument("invalid spacing: every axis must be strictly positive");
  }
}

}  // namespace

Volume3D::Volume3D(Dims dims, double fill, Spacing spacing)
    : dims_(dims), spacing_(spacing) {
  check_geometry(dims_, spacing_);
  if (!std::isfinite(fill)) {
    throw InvalidArgument("non-finite intensity");
  }
  data_.assign(dims_.voxel_count(), fill);
}

Volume3D::Volume3D(Dims dims, std::vector<double> data, Spacing spacing)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_geometry(dims_, spacing_);
  if (data_.size() != dims_.voxel_count()) {
    throw InvalidArgument("data length " + std::to_string(data_.size()) +
                          " does not match dimensions (" +
                          std::to_string(dims_.voxel_count()) + " voxels)");
  }
  for (double x : data_) {
    if (!std::isfinite(x)) {
      throw InvalidArgument("non-finite intensity");
    }
  }
}

VolumeStats volume_stats(const Volume3D& v) {
  if (v.empty()) {
    throw DataContractError("empty volume");
  }
  const auto data = v.data();
  const double n = static_cast<double>(data.size());

  VolumeStats s;
  s.min = data[0];
  s.max = data[0];
  double sum = 0.0;
  for (double x : data) {
    sum += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean = sum / n;
  // Two-pass keeps the variance exact for constant inputs.
  double ss = 0.0;
  for (double x : data) {
    const double d = x - s.mean;
    ss += d * d;
  }
  s.variance = ss / n;
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

Volume3D preprocess(const Volume3D& v, Dims crop_dims) {
  const Dims& d = v.dims();
  if (crop_dims.nx == 0 || crop_dims.ny == 0 || crop_dims.nz == 0) {
    throw InvalidArgument("invalid dimensions: crop size must be positive");
  }
  if (crop_dims.nx > d.nx || crop_dims.ny > d.ny || crop_dims.nz > d.nz) {
    throw InvalidArgument("crop size exceeds volume dimensions");
  }
  const VolumeStats s = volume_stats(v);
  const double sd = std::sqrt(s.variance);
  if (!(sd > 0.0)) {
    throw DataContractError("degenerate volume");
  }

  const Index3 offset{(d.nx - crop_dims.nx) / 2, (d.ny - crop_dims.ny) / 2,
                      (d.nz - crop_dims.nz) / 2};
  Volume3D out = crop(v, offset, crop_dims);
  for (double& x : out.data()) {
    x = (x - s.mean) / sd;
  }
  return out;
}

UnitRescale rescale_unit(const Volume3D& v) {
  const VolumeStats s = volume_stats(v);
  if (!(s.max > s.min)) {
    throw DataContractError("degenerate volume");
  }
  const double range = s.max - s.min;
  std::vector<double> out(v.data().begin(), v.data().end());
  for (double& x : out) {
    x = std::clamp((x - s.min) / range, 0.0, 1.0);
  }
  return {Volume3D(v.dims(), std::move(out), v.spacing()), s.min, s.max};
}

Volume3D UnitRescale::invert(const Volume3D& unit) const {
  const double range = max - min;
  std::vector<double> out(unit.data().begin(), unit.data().end());
  for (double& x : out) {
    x = min + x * range;
  }
  return Volume3D(unit.dims(), std::move(out), unit.spacing());
}

std::ptrdiff_t mirror_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n <= 1) {
    return 0;
  }
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) {
    i += period;
  }
  return i < n ? i : period - i;
}

Volume3D pad_mirror(const Volume3D& v, std::array<std::size_t, 3> r) {
  const Dims& d = v.dims();
  if (r[0] >= d.nx || r[1] >= d.ny || r[2] >= d.nz) {
    throw InvalidArgument("mirror padding must be smaller than the volume");
  }
  return pad_reflect(v, r);
}

Volume3D pad_reflect(const Volume3D& v, std::array<std::size_t, 3> r) {
  const Dims& d = v.dims();
  const Dims pd{d.nx + 2 * r[0], d.ny + 2 * r[1], d.nz + 2 * r[2]};
  std::vector<double> out(pd.voxel_count());
  const auto nx = static_cast<std::ptrdiff_t>(d.nx);
  const auto ny = static_cast<std::ptrdiff_t>(d.ny);
  const auto nz = static_cast<std::ptrdiff_t>(d.nz);
  std::size_t o = 0;
  for (std::size_t k = 0; k < pd.nz; ++k) {
    const auto sk = static_cast<std::size_t>(
        mirror_index(static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(r[2]), nz));
    for (std::size_t j = 0; j < pd.ny; ++j) {
      const auto sj = static_cast<std::size_t>(
          mirror_index(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(r[1]), ny));
      for (std::size_t i = 0; i < pd.nx; ++i) {
        const auto si = static_cast<std::size_t>(
            mirror_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(r[0]), nx));
        out[o++] = v(si, sj, sk);
      }
    }
  }
  return Volume3D(pd, std::move(out), v.spacing());
}

Volume3D crop(const Volume3D& v, Index3 offset, Dims size) {
  const Dims& d = v.dims();
  if (offset.i + size.nx > d.nx || offset.j + size.ny > d.ny ||
      offset.k + size.nz > d.nz) {
    throw InvalidArgument("crop region exceeds volume dimensions");
  }
  std::vector<double> out;
  out.reserve(size.voxel_count());
  for (std::size_t k = 0; k < size.nz; ++k) {
    for (std::size_t j = 0; j < size.ny; ++j) {
      const std::size_t row = v.index(offset.i, offset.j + j, offset.k + k);
      out.insert(out.end(), v.data().begin() + static_cast<std::ptrdiff_t>(row),
                 v.data().begin() + static_cast<std::ptrdiff_t>(row + size.nx));
    }
  }
  return Volume3D(size, std::move(out), v.spacing());
}

}  // namespace despeckle
