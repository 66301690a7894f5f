#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

enum class FilterMode { slice2d, full3d };

std::string_view to_string(FilterMode mode);
FilterMode parse_filter_mode(std::string_view name);

/// Smoothing strength used when none is given, for [0,1]-scaled input.
/// Picked from a sweep over h on the 64x64x16 homogeneous speckle phantom
/// (gamma 0.5, sigma 0.2): 0.4 leaves a std ratio of 0.52, 0.5 gives 0.35
/// while the 0.25/0.75 two-region phantom keeps region means within 3%.
inline constexpr double kDefaultSmoothing = 0.5;

/// Block geometry and kernel parameters of the Bayesian non-local means
/// filter. Radii are in voxels; block side is 2 * block_radius + 1 and the
/// search window holds (2 * search_radius + 1) candidate centers per active
/// axis, spaced block_step apart. In slice2d mode the z extent of blocks and
/// windows is one voxel.
struct ObnlmParams {
  std::size_t block_radius = 1;
  std::size_t search_radius = 3;
  std::size_t block_step = 1;
  double h = kDefaultSmoothing;
  double gamma = 0.5;
  double eps = 1e-6;
  FilterMode mode = FilterMode::slice2d;

  void validate() const;
};

/// Throws what the filters would throw for this input, without filtering:
/// invalid parameters, negative intensities, or a volume smaller than one
/// block on an active axis. With `rescaled` the input is judged as
/// filter_rescaled sees it, so negatives are allowed but a constant volume
/// is not.
void validate_filter_input(const Volume3D& v, const ObnlmParams& p, bool rescaled = false);

/// Sum over p of (a_p - b_p)^2 / max(b_p^(2 gamma), eps). Not symmetric
/// unless gamma == 0.
double pearson_distance(std::span<const double> block_i,
                        std::span<const double> block_j, double gamma, double eps);

/// exp(-d / h^2).
double block_weight(double d, double h);

/// Block centers along an axis of length n: 0, step, 2 step, ... plus n - 1
/// when the stride does not land on it, so every voxel is covered.
std::vector<std::size_t> block_centers(std::size_t n, std::size_t step);

/// Literal nested-loop form of the filter; the correctness oracle.
///
/// The volume is mirror padded by block_radius + search_radius * block_step
/// on each active axis. For every center c on the stride grid, every
/// candidate c + block_step * delta in the search window (delta = 0
/// included) is weighted by block_weight(pearson_distance(B_c, B_j)), the
/// block estimate is the normalized weighted mean of the candidate blocks,
/// and each output voxel is the mean of all block estimates covering it.
Volume3D filter_obnlm_reference(const Volume3D& v, const ObnlmParams& p);

/// Same result as the reference (to rounding) computed from box-summed
/// per-offset distance images over fixed tiles. Tiles are independent and
/// each output voxel is produced by exactly one tile in a fixed order, so the
/// result is bitwise identical for any thread count.
Volume3D filter_obnlm(const Volume3D& v, const ObnlmParams& p, unsigned threads = 1);

enum class FilterImpl { reference, optimized };

std::string_view to_string(FilterImpl impl);
FilterImpl parse_filter_impl(std::string_view name);

/// Runs the chosen implementation on rescale_unit(v) and maps the result
/// back to the input intensity range. Signed inputs are fine here.
Volume3D filter_rescaled(const Volume3D& v, const ObnlmParams& p, FilterImpl impl,
                         unsigned threads = 1);

}  // namespace despeckle
