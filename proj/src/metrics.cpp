#include "despeckle/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace despeckle {

namespace {

void require_same_dims(const Dims& a, const Dims& b) {
  if (a != b) {
    throw DataContractError("dimension mismatch");
  }
}

}  // namespace

SmpiReport smpi(const Volume3D& original, const Volume3D& filtered) {
  require_same_dims(original.dims(), filtered.dims());
  const VolumeStats o = volume_stats(original);
  const VolumeStats r = volume_stats(filtered);
  if (!(o.variance > 0.0)) {
    throw DataContractError("degenerate original");
  }
  SmpiReport rep;
  rep.mu_o = o.mean;
  rep.mu_r = r.mean;
  rep.var_o = o.variance;
  rep.var_r = r.variance;
  rep.q = 1.0 + std::abs(r.mean - o.mean);
  rep.smpi = rep.q * std::sqrt(r.variance) / std::sqrt(o.variance);
  return rep;
}

SmpiReport smpi_unit_scaled(const Volume3D& original, const Volume3D& filtered) {
  require_same_dims(original.dims(), filtered.dims());
  const VolumeStats o = volume_stats(original);
  if (!(o.max > o.min)) {
    throw DataContractError("degenerate original");
  }
  const double range = o.max - o.min;
  auto scaled = [&](const Volume3D& v) {
    std::vector<double> out(v.data().begin(), v.data().end());
    for (double& x : out) x = (x - o.min) / range;
    return Volume3D(v.dims(), std::move(out), v.spacing());
  };
  return smpi(scaled(original), scaled(filtered));
}

double mse(const Volume3D& a, const Volume3D& b) {
  require_same_dims(a.dims(), b.dims());
  if (a.empty()) {
    throw DataContractError("empty volume");
  }
  double acc = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double d = x[n] - y[n];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

DisplacementField::DisplacementField(Dims dims, Vec fill)
    : dims_(dims), vectors_(dims.voxel_count(), fill) {
  if (dims.voxel_count() == 0) {
    throw InvalidArgument("invalid dimensions: every axis must be positive");
  }
  if (!std::all_of(fill.begin(), fill.end(), [](double c) { return std::isfinite(c); })) {
    throw InvalidArgument("non-finite displacement");
  }
}

DisplacementField::DisplacementField(Dims dims, std::vector<Vec> vectors)
    : dims_(dims), vectors_(std::move(vectors)) {
  if (dims.voxel_count() == 0) {
    throw InvalidArgument("invalid dimensions: every axis must be positive");
  }
  if (vectors_.size() != dims.voxel_count()) {
    throw InvalidArgument("displacement count does not match dimensions");
  }
  for (const Vec& v : vectors_) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw InvalidArgument("non-finite displacement");
    }
  }
}

Volume3D warp_trilinear(const Volume3D& moving, const DisplacementField& field) {
  require_same_dims(moving.dims(), field.dims());
  const Dims& d = moving.dims();
  const std::array<double, 3> upper{static_cast<double>(d.nx - 1),
                                    static_cast<double>(d.ny - 1),
                                    static_cast<double>(d.nz - 1)};
  const std::array<std::size_t, 3> last{d.nx - 1, d.ny - 1, d.nz - 1};

  Volume3D out(d, 0.0, moving.spacing());
  for (std::size_t n = 0; n < moving.size(); ++n) {
    const Index3 c = moving.coords(n);
    const auto& u = field.at(n);
    const std::array<double, 3> pos{static_cast<double>(c.i) + u[0],
                                    static_cast<double>(c.j) + u[1],
                                    static_cast<double>(c.k) + u[2]};
    std::array<std::size_t, 3> i0{}, i1{};
    std::array<double, 3> t{};
    for (std::size_t a = 0; a < 3; ++a) {
      const double p = std::clamp(pos[a], 0.0, upper[a]);
      const double f = std::floor(p);
      i0[a] = static_cast<std::size_t>(f);
      i1[a] = std::min(i0[a] + 1, last[a]);
      t[a] = p - f;
    }
    // Exact grid positions skip the neighbor so aligned sampling is bitwise.
    auto lerp = [](double a, double b, double w) { return w == 0.0 ? a : a + w * (b - a); };
    const double c00 = lerp(moving(i0[0], i0[1], i0[2]), moving(i1[0], i0[1], i0[2]), t[0]);
    const double c10 = lerp(moving(i0[0], i1[1], i0[2]), moving(i1[0], i1[1], i0[2]), t[0]);
    const double c01 = lerp(moving(i0[0], i0[1], i1[2]), moving(i1[0], i0[1], i1[2]), t[0]);
    const double c11 = lerp(moving(i0[0], i1[1], i1[2]), moving(i1[0], i1[1], i1[2]), t[0]);
    const double c0 = lerp(c00, c10, t[1]);
    const double c1 = lerp(c01, c11, t[1]);
    out.data()[n] = lerp(c0, c1, t[2]);
  }
  return out;
}

}  // namespace despeckle
