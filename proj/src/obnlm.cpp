#include "despeckle/obnlm.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>

namespace despeckle {

namespace {

using Extent = std::array<std::size_t, 3>;
using Offset = std::array<std::ptrdiff_t, 3>;

std::size_t count_of(const Extent& n) { return n[0] * n[1] * n[2]; }

// Geometry shared by both implementations.
struct Layout {
  Extent block_radius{};   // zero on inactive axes
  Extent search_radius{};  // zero on inactive axes
  Extent pad{};
  std::array<std::vector<std::size_t>, 3> centers;
  std::vector<Offset> offsets;  // step * delta, z outermost, x innermost
  bool dense = false;           // every voxel is a center
};

Layout make_layout(const Volume3D& v, const ObnlmParams& p) {
  validate_filter_input(v, p);
  const Dims& d = v.dims();

  Layout g;
  const std::size_t active = p.mode == FilterMode::full3d ? 3 : 2;
  for (std::size_t a = 0; a < 3; ++a) {
    if (a < active) {
      g.block_radius[a] = p.block_radius;
      g.search_radius[a] = p.search_radius;
      g.pad[a] = p.block_radius + p.search_radius * p.block_step;
      g.centers[a] = block_centers(d[a], p.block_step);
    } else {
      g.centers[a].resize(d[a]);
      for (std::size_t k = 0; k < d[a]; ++k) g.centers[a][k] = k;
    }
  }
  g.dense = p.block_step == 1;

  const auto step = static_cast<std::ptrdiff_t>(p.block_step);
  const auto mz = static_cast<std::ptrdiff_t>(g.search_radius[2]);
  const auto my = static_cast<std::ptrdiff_t>(g.search_radius[1]);
  const auto mx = static_cast<std::ptrdiff_t>(g.search_radius[0]);
  for (std::ptrdiff_t dz = -mz; dz <= mz; ++dz) {
    for (std::ptrdiff_t dy = -my; dy <= my; ++dy) {
      for (std::ptrdiff_t dx = -mx; dx <= mx; ++dx) {
        g.offsets.push_back({step * dx, step * dy, step * dz});
      }
    }
  }
  return g;
}

// Range-reduced Taylor series for exp(x), x <= 0; within a few ulp of
// std::exp down to -700, where the result is clamped. Written without
// branches so the weight loops vectorize.
inline double exp_nonpositive(double x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 0x1.8p52;
  x = x < -700.0 ? -700.0 : x;
  double kd = x * kLog2e + kShifter;
  const std::int64_t k =
      std::bit_cast<std::int64_t>(kd) - std::bit_cast<std::int64_t>(kShifter);
  kd -= kShifter;
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  double poly = 1.0 / 479001600.0;
  poly = poly * r + 1.0 / 39916800.0;
  poly = poly * r + 1.0 / 3628800.0;
  poly = poly * r + 1.0 / 362880.0;
  poly = poly * r + 1.0 / 40320.0;
  poly = poly * r + 1.0 / 5040.0;
  poly = poly * r + 1.0 / 720.0;
  poly = poly * r + 1.0 / 120.0;
  poly = poly * r + 1.0 / 24.0;
  poly = poly * r + 1.0 / 6.0;
  poly = poly * r + 0.5;
  poly = poly * r + 1.0;
  poly = poly * r + 1.0;
  const double scale =
      std::bit_cast<double>(static_cast<std::uint64_t>(k + 1023) << 52);
  return poly * scale;
}

// Sums 2r+1 consecutive samples along `axis`. `out` has extent n with
// n[axis] reduced by 2r.
void box_sum(const std::vector<double>& in, const Extent& n, std::size_t axis,
             std::size_t r, std::vector<double>& out) {
  Extent on = n;
  on[axis] -= 2 * r;
  out.resize(count_of(on));
  const Extent stride{1, n[0], n[0] * n[1]};
  for (std::size_t z = 0; z < on[2]; ++z) {
    for (std::size_t y = 0; y < on[1]; ++y) {
      double* dst = out.data() + on[0] * (y + on[1] * z);
      const double* src = in.data() + n[0] * (y + n[1] * z);
      std::copy(src, src + on[0], dst);
      for (std::size_t q = 1; q <= 2 * r; ++q) {
        const double* s = src + q * stride[axis];
        for (std::size_t x = 0; x < on[0]; ++x) {
          dst[x] += s[x];
        }
      }
    }
  }
}

// Box sum over all three axes; `a` holds the input and receives the result.
void box_sum3(std::vector<double>& a, std::vector<double>& scratch, Extent n,
              const Extent& r) {
  for (std::size_t axis = 0; axis < 3; ++axis) {
    if (r[axis] == 0) continue;
    box_sum(a, n, axis, r[axis], scratch);
    n[axis] -= 2 * r[axis];
    a.swap(scratch);
  }
}

struct Tile {
  Extent lo{};
  Extent hi{};
};

struct Workspace {
  std::vector<double> diff, scratch, weights, total, inv_total, spread, acc, cover;
};

class OptimizedKernel {
 public:
  OptimizedKernel(const Volume3D& v, const ObnlmParams& p)
      : layout_(make_layout(v, p)),
        dims_(v.dims()),
        padded_(pad_reflect(v, layout_.pad)),
        inv_h2_(1.0 / (p.h * p.h)) {
    // Reciprocal of the Pearson denominator for every padded voxel.
    const auto src = padded_.data();
    inv_den_.resize(src.size());
    const double two_gamma = 2.0 * p.gamma;
    for (std::size_t n = 0; n < src.size(); ++n) {
      const double den = two_gamma == 0.0 ? 1.0 : std::pow(src[n], two_gamma);
      inv_den_[n] = 1.0 / std::max(den, p.eps);
    }

    const Extent tile_size = p.mode == FilterMode::full3d ? Extent{16, 16, 8}
                                                          : Extent{32, 32, 1};
    for (std::size_t z = 0; z < dims_.nz; z += tile_size[2]) {
      for (std::size_t y = 0; y < dims_.ny; y += tile_size[1]) {
        for (std::size_t x = 0; x < dims_.nx; x += tile_size[0]) {
          tiles_.push_back({{x, y, z},
                            {std::min(x + tile_size[0], dims_.nx),
                             std::min(y + tile_size[1], dims_.ny),
                             std::min(z + tile_size[2], dims_.nz)}});
        }
      }
    }
  }

  Volume3D run(unsigned threads) const {
    std::vector<double> out(dims_.voxel_count());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      Workspace ws;
      for (std::size_t t = next++; t < tiles_.size(); t = next++) {
        run_tile(tiles_[t], ws, out);
      }
    };
    {
      std::vector<std::jthread> pool;
      const unsigned extra = std::min<std::size_t>(threads, tiles_.size()) - 1;
      for (unsigned i = 0; i < extra; ++i) pool.emplace_back(worker);
      worker();
    }
    Volume3D result(dims_, 0.0, padded_.spacing());
    std::copy(out.begin(), out.end(), result.data().begin());
    return result;
  }

 private:
  std::size_t padded_index(std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t z) const {
    const Dims& pd = padded_.dims();
    return static_cast<std::size_t>(x + static_cast<std::ptrdiff_t>(layout_.pad[0])) +
           pd.nx * (static_cast<std::size_t>(y + static_cast<std::ptrdiff_t>(layout_.pad[1])) +
                    pd.ny * static_cast<std::size_t>(z + static_cast<std::ptrdiff_t>(layout_.pad[2])));
  }

  void run_tile(const Tile& tile, Workspace& ws, std::vector<double>& out) const {
    const Extent& br = layout_.block_radius;

    // Centers whose blocks reach the tile, their bounding box `C`, the
    // support `Y` of their blocks, and the tile grown by the block radius `E`.
    std::array<std::vector<std::size_t>, 3> local_centers;
    Offset c_lo{}, y_lo{}, e_lo{};
    Extent nc{}, ny{}, ne{}, nr{};
    for (std::size_t a = 0; a < 3; ++a) {
      const auto lo = static_cast<std::ptrdiff_t>(tile.lo[a]) - static_cast<std::ptrdiff_t>(br[a]);
      const auto hi = static_cast<std::ptrdiff_t>(tile.hi[a] - 1 + br[a]);
      std::vector<std::size_t> picked;
      for (std::size_t c : layout_.centers[a]) {
        const auto sc = static_cast<std::ptrdiff_t>(c);
        if (sc >= lo && sc <= hi) picked.push_back(c);
      }
      c_lo[a] = static_cast<std::ptrdiff_t>(picked.front());
      nc[a] = picked.back() - picked.front() + 1;
      for (std::size_t c : picked) local_centers[a].push_back(c - picked.front());
      y_lo[a] = c_lo[a] - static_cast<std::ptrdiff_t>(br[a]);
      ny[a] = nc[a] + 2 * br[a];
      e_lo[a] = lo;
      nr[a] = tile.hi[a] - tile.lo[a];
      ne[a] = nr[a] + 2 * br[a];
    }
    const std::size_t c_count = count_of(nc);
    const std::size_t offset_count = layout_.offsets.size();
    const auto src = padded_.data();

    ws.total.assign(c_count, 0.0);
    ws.weights.assign(offset_count * c_count, 0.0);

    // Pass 1: block distances and raw weights for every offset.
    for (std::size_t o = 0; o < offset_count; ++o) {
      const Offset& s = layout_.offsets[o];
      const std::ptrdiff_t shift =
          s[0] + static_cast<std::ptrdiff_t>(padded_.dims().nx) *
                     (s[1] + static_cast<std::ptrdiff_t>(padded_.dims().ny) * s[2]);
      ws.diff.resize(count_of(ny));
      for (std::size_t z = 0; z < ny[2]; ++z) {
        for (std::size_t y = 0; y < ny[1]; ++y) {
          const std::size_t base =
              padded_index(y_lo[0], y_lo[1] + static_cast<std::ptrdiff_t>(y),
                           y_lo[2] + static_cast<std::ptrdiff_t>(z));
          const double* a = src.data() + base;
          const double* b = src.data() + static_cast<std::ptrdiff_t>(base) + shift;
          const double* inv = inv_den_.data() + static_cast<std::ptrdiff_t>(base) + shift;
          double* dst = ws.diff.data() + ny[0] * (y + ny[1] * z);
          for (std::size_t x = 0; x < ny[0]; ++x) {
            const double d = a[x] - b[x];
            dst[x] = d * d * inv[x];
          }
        }
      }
      box_sum3(ws.diff, ws.scratch, ny, br);

      double* w = ws.weights.data() + o * c_count;
      const double* dist = ws.diff.data();
      if (layout_.dense) {
        for (std::size_t n = 0; n < c_count; ++n) {
          w[n] = exp_nonpositive(-dist[n] * inv_h2_);
        }
        for (std::size_t n = 0; n < c_count; ++n) {
          ws.total[n] += w[n];
        }
      } else {
        for (std::size_t lz : local_centers[2]) {
          for (std::size_t ly : local_centers[1]) {
            for (std::size_t lx : local_centers[0]) {
              const std::size_t n = lx + nc[0] * (ly + nc[1] * lz);
              w[n] = exp_nonpositive(-dist[n] * inv_h2_);
              ws.total[n] += w[n];
            }
          }
        }
      }
    }

    ws.inv_total.resize(c_count);
    for (std::size_t n = 0; n < c_count; ++n) {
      ws.inv_total[n] = ws.total[n] > 0.0 ? 1.0 / ws.total[n] : 0.0;
    }

    // Places a C-shaped field into the zero-initialized E grid.
    const std::size_t e_count = count_of(ne);
    const Extent c_in_e{static_cast<std::size_t>(c_lo[0] - e_lo[0]),
                        static_cast<std::size_t>(c_lo[1] - e_lo[1]),
                        static_cast<std::size_t>(c_lo[2] - e_lo[2])};
    auto spread = [&](auto&& value) {
      for (std::size_t z = 0; z < nc[2]; ++z) {
        for (std::size_t y = 0; y < nc[1]; ++y) {
          double* dst = ws.spread.data() + c_in_e[0] +
                        ne[0] * (c_in_e[1] + y + ne[1] * (c_in_e[2] + z));
          const std::size_t row = nc[0] * (y + nc[1] * z);
          for (std::size_t x = 0; x < nc[0]; ++x) {
            dst[x] = value(row + x);
          }
        }
      }
    };

    // Number of blocks covering each tile voxel.
    ws.spread.assign(e_count, 0.0);
    spread([&](std::size_t n) { return ws.inv_total[n] > 0.0 ? 1.0 : 0.0; });
    ws.cover = ws.spread;
    box_sum3(ws.cover, ws.scratch, ne, br);

    // Pass 2: each voxel gathers the normalized weights of the blocks that
    // cover it, per offset, times the sample that offset points at.
    const std::size_t r_count = count_of(nr);
    ws.acc.assign(r_count, 0.0);
    std::vector<double>& summed = ws.diff;
    for (std::size_t o = 0; o < offset_count; ++o) {
      const double* w = ws.weights.data() + o * c_count;
      spread([&](std::size_t n) { return w[n] * ws.inv_total[n]; });
      summed = ws.spread;
      box_sum3(summed, ws.scratch, ne, br);

      const Offset& s = layout_.offsets[o];
      for (std::size_t z = 0; z < nr[2]; ++z) {
        for (std::size_t y = 0; y < nr[1]; ++y) {
          const double* b = src.data() +
                            padded_index(static_cast<std::ptrdiff_t>(tile.lo[0]) + s[0],
                                         static_cast<std::ptrdiff_t>(tile.lo[1] + y) + s[1],
                                         static_cast<std::ptrdiff_t>(tile.lo[2] + z) + s[2]);
          const double* f = summed.data() + nr[0] * (y + nr[1] * z);
          double* dst = ws.acc.data() + nr[0] * (y + nr[1] * z);
          for (std::size_t x = 0; x < nr[0]; ++x) {
            dst[x] += f[x] * b[x];
          }
        }
      }
    }

    for (std::size_t z = 0; z < nr[2]; ++z) {
      for (std::size_t y = 0; y < nr[1]; ++y) {
        const std::size_t row = nr[0] * (y + nr[1] * z);
        double* dst = out.data() + tile.lo[0] +
                      dims_.nx * (tile.lo[1] + y + dims_.ny * (tile.lo[2] + z));
        for (std::size_t x = 0; x < nr[0]; ++x) {
          dst[x] = ws.acc[row + x] / ws.cover[row + x];
        }
      }
    }
  }

  Layout layout_;
  Dims dims_;
  Volume3D padded_;
  std::vector<double> inv_den_;
  double inv_h2_;
  std::vector<Tile> tiles_;
};

}  // namespace

std::string_view to_string(FilterMode mode) {
  return mode == FilterMode::full3d ? "full3d" : "slice2d";
}

FilterMode parse_filter_mode(std::string_view name) {
  if (name == "slice2d") return FilterMode::slice2d;
  if (name == "full3d") return FilterMode::full3d;
  throw InvalidArgument("unknown filter mode '" + std::string(name) +
                        "' (expected slice2d or full3d)");
}

std::string_view to_string(FilterImpl impl) {
  return impl == FilterImpl::reference ? "reference" : "optimized";
}

FilterImpl parse_filter_impl(std::string_view name) {
  if (name == "reference") return FilterImpl::reference;
  if (name == "optimized") return FilterImpl::optimized;
  throw InvalidArgument("unknown implementation '" + std::string(name) +
                        "' (expected reference or optimized)");
}

void validate_filter_input(const Volume3D& v, const ObnlmParams& p, bool rescaled) {
  p.validate();
  const Dims& d = v.dims();
  const std::size_t active = p.mode == FilterMode::full3d ? 3 : 2;
  for (std::size_t a = 0; a < active; ++a) {
    if (d[a] < 2 * p.block_radius + 1) {
      throw DataContractError("volume is smaller than one block");
    }
  }
  if (rescaled) {
    (void)rescale_unit(v);
    return;
  }
  for (double x : v.data()) {
    if (x < 0.0) {
      throw DataContractError("OBNLM requires nonnegative input");
    }
  }
}

void ObnlmParams::validate() const {
  if (search_radius < 1) {
    throw InvalidArgument("search radius must be at least 1");
  }
  if (block_step < 1) {
    throw InvalidArgument("block step must be at least 1");
  }
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw InvalidArgument("smoothing strength h must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 2.0)) {
    throw InvalidArgument("gamma must lie in [0, 2]");
  }
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw InvalidArgument("division guard eps must be positive");
  }
}

double pearson_distance(std::span<const double> block_i,
                        std::span<const double> block_j, double gamma, double eps) {
  if (block_i.size() != block_j.size()) {
    throw InvalidArgument("block length mismatch");
  }
  double d = 0.0;
  for (std::size_t n = 0; n < block_i.size(); ++n) {
    const double diff = block_i[n] - block_j[n];
    const double den = gamma == 0.0 ? 1.0 : std::pow(block_j[n], 2.0 * gamma);
    d += diff * diff / std::max(den, eps);
  }
  return d;
}

double block_weight(double d, double h) { return std::exp(-d / (h * h)); }

std::vector<std::size_t> block_centers(std::size_t n, std::size_t step) {
  if (n == 0 || step == 0) {
    throw InvalidArgument("block centers need a positive length and step");
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n; c += step) out.push_back(c);
  if (out.back() != n - 1) out.push_back(n - 1);
  return out;
}

Volume3D filter_obnlm_reference(const Volume3D& v, const ObnlmParams& p) {
  const Layout g = make_layout(v, p);
  const Volume3D padded = pad_reflect(v, g.pad);
  const Dims& d = v.dims();

  const auto rx = static_cast<std::ptrdiff_t>(g.block_radius[0]);
  const auto ry = static_cast<std::ptrdiff_t>(g.block_radius[1]);
  const auto rz = static_cast<std::ptrdiff_t>(g.block_radius[2]);
  const std::size_t block_len = static_cast<std::size_t>((2 * rx + 1) * (2 * ry + 1) * (2 * rz + 1));

  // Block around center (cx, cy, cz), given in unpadded coordinates.
  auto gather = [&](std::ptrdiff_t cx, std::ptrdiff_t cy, std::ptrdiff_t cz,
                    std::vector<double>& block) {
    std::size_t n = 0;
    for (std::ptrdiff_t dz = -rz; dz <= rz; ++dz) {
      for (std::ptrdiff_t dy = -ry; dy <= ry; ++dy) {
        for (std::ptrdiff_t dx = -rx; dx <= rx; ++dx) {
          block[n++] = padded(static_cast<std::size_t>(cx + dx + static_cast<std::ptrdiff_t>(g.pad[0])),
                              static_cast<std::size_t>(cy + dy + static_cast<std::ptrdiff_t>(g.pad[1])),
                              static_cast<std::size_t>(cz + dz + static_cast<std::ptrdiff_t>(g.pad[2])));
        }
      }
    }
  };

  std::vector<double> sum(v.size(), 0.0);
  std::vector<double> count(v.size(), 0.0);
  std::vector<double> block_i(block_len), block_j(block_len), estimate(block_len);

  for (std::size_t ucz : g.centers[2]) {
    for (std::size_t ucy : g.centers[1]) {
      for (std::size_t ucx : g.centers[0]) {
        const auto cx = static_cast<std::ptrdiff_t>(ucx);
        const auto cy = static_cast<std::ptrdiff_t>(ucy);
        const auto cz = static_cast<std::ptrdiff_t>(ucz);
        gather(cx, cy, cz, block_i);
        std::fill(estimate.begin(), estimate.end(), 0.0);
        double total = 0.0;
        for (const Offset& s : g.offsets) {
          gather(cx + s[0], cy + s[1], cz + s[2], block_j);
          const double w =
              block_weight(pearson_distance(block_i, block_j, p.gamma, p.eps), p.h);
          total += w;
          for (std::size_t q = 0; q < block_len; ++q) {
            estimate[q] += w * block_j[q];
          }
        }

        std::size_t q = 0;
        for (std::ptrdiff_t dz = -rz; dz <= rz; ++dz) {
          for (std::ptrdiff_t dy = -ry; dy <= ry; ++dy) {
            for (std::ptrdiff_t dx = -rx; dx <= rx; ++dx, ++q) {
              const std::ptrdiff_t x = cx + dx, y = cy + dy, z = cz + dz;
              if (x < 0 || y < 0 || z < 0 || x >= static_cast<std::ptrdiff_t>(d.nx) ||
                  y >= static_cast<std::ptrdiff_t>(d.ny) ||
                  z >= static_cast<std::ptrdiff_t>(d.nz)) {
                continue;
              }
              const std::size_t idx = v.index(static_cast<std::size_t>(x),
                                              static_cast<std::size_t>(y),
                                              static_cast<std::size_t>(z));
              sum[idx] += estimate[q] / total;
              count[idx] += 1.0;
            }
          }
        }
      }
    }
  }

  for (std::size_t n = 0; n < sum.size(); ++n) {
    sum[n] /= count[n];
  }
  return Volume3D(d, std::move(sum), v.spacing());
}

Volume3D filter_obnlm(const Volume3D& v, const ObnlmParams& p, unsigned threads) {
  if (threads < 1) {
    throw InvalidArgument("thread count must be at least 1");
  }
  return OptimizedKernel(v, p).run(threads);
}

Volume3D filter_rescaled(const Volume3D& v, const ObnlmParams& p, FilterImpl impl,
                         unsigned threads) {
  const UnitRescale unit = rescale_unit(v);
  const Volume3D filtered = impl == FilterImpl::reference
                                ? filter_obnlm_reference(unit.volume, p)
                                : filter_obnlm(unit.volume, p, threads);
  return unit.invert(filtered);
}

}  // namespace despeckle
