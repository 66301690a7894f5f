#include "despeckle/speckle.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace despeckle {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Uniform in (0, 1], so log() below never sees zero.
double unit_open_closed(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

void check_level(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw InvalidArgument(std::string("phantom level ") + name + " must lie in [0, 1]");
  }
}

// 0^0 is taken as 1 so gamma = 0 degenerates to additive noise.
double speckle_scale(double v, double gamma) {
  if (gamma == 0.0) {
    return 1.0;
  }
  return std::pow(v, gamma);
}

}  // namespace

void SpeckleParams::validate() const {
  if (!(gamma >= 0.0 && gamma <= 2.0)) {
    throw InvalidArgument("speckle gamma must lie in [0, 2]");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("speckle sigma must be nonnegative");
  }
}

void PhantomSpec::validate() const {
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
    throw InvalidArgument("invalid dimensions: every axis must be positive");
  }
  struct Visitor {
    const Dims& dims;
    void operator()(const ConstantPhantom& p) const { check_level(p.level, "level"); }
    void operator()(const TwoRegionPhantom& p) const {
      check_level(p.low, "low");
      check_level(p.high, "high");
      if (p.split > dims[static_cast<std::size_t>(p.axis)]) {
        throw InvalidArgument("two-region split lies outside the volume");
      }
    }
    void operator()(const SphericalInclusionPhantom& p) const {
      check_level(p.background, "background");
      check_level(p.inclusion, "inclusion");
      if (!(p.radius >= 0.0) || !std::isfinite(p.radius)) {
        throw InvalidArgument("inclusion radius must be nonnegative");
      }
      for (std::size_t a = 0; a < 3; ++a) {
        const double hi = static_cast<double>(dims[a]) - 1.0;
        if (!(p.center[a] >= 0.0 && p.center[a] <= hi)) {
          throw InvalidArgument("inclusion center lies outside the volume");
        }
      }
    }
    void operator()(const AxialGradientPhantom& p) const {
      check_level(p.start, "start");
      check_level(p.end, "end");
    }
  };
  std::visit(Visitor{dims}, shape);
}

Volume3D generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Dims& d = spec.dims;
  Volume3D v(d, 0.0);

  struct Painter {
    Volume3D& v;
    const Dims& d;
    void operator()(const ConstantPhantom& p) const {
      for (double& x : v.data()) x = p.level;
    }
    void operator()(const TwoRegionPhantom& p) const {
      for (std::size_t n = 0; n < v.size(); ++n) {
        const Index3 c = v.coords(n);
        const std::size_t along =
            p.axis == Axis::x ? c.i : (p.axis == Axis::y ? c.j : c.k);
        v.data()[n] = along < p.split ? p.low : p.high;
      }
    }
    void operator()(const SphericalInclusionPhantom& p) const {
      const double r2 = p.radius * p.radius;
      for (std::size_t n = 0; n < v.size(); ++n) {
        const Index3 c = v.coords(n);
        const double dx = static_cast<double>(c.i) - p.center[0];
        const double dy = static_cast<double>(c.j) - p.center[1];
        const double dz = static_cast<double>(c.k) - p.center[2];
        v.data()[n] = dx * dx + dy * dy + dz * dz < r2 ? p.inclusion : p.background;
      }
    }
    void operator()(const AxialGradientPhantom& p) const {
      const double denom = d.nx > 1 ? static_cast<double>(d.nx - 1) : 1.0;
      for (std::size_t n = 0; n < v.size(); ++n) {
        const double t = static_cast<double>(v.coords(n).i) / denom;
        v.data()[n] = p.start + (p.end - p.start) * t;
      }
    }
  };
  std::visit(Painter{v, d}, spec.shape);
  return v;
}

double voxel_normal(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t base = seed * kGolden;
  const double u1 = unit_open_closed(splitmix64(base + 2 * index));
  const double u2 = unit_open_closed(splitmix64(base + 2 * index + 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Volume3D apply_speckle(const Volume3D& v, const SpeckleParams& p) {
  p.validate();
  for (double x : v.data()) {
    if (x < 0.0) {
      throw DataContractError("speckle model requires nonnegative intensities");
    }
  }
  Volume3D out = v;
  if (p.sigma == 0.0) {
    return out;
  }
  auto data = out.data();
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double eta = p.sigma * voxel_normal(p.seed, n);
    data[n] = data[n] + speckle_scale(data[n], p.gamma) * eta;
  }
  return out;
}

}  // namespace despeckle
