#pragma once

#include <array>
#include <vector>

#include "despeckle/volume.hpp"

namespace despeckle {

/// Speckle suppression and mean preservation index and its ingredients.
/// q = 1 + |mu_r - mu_o|, smpi = q * sqrt(var_r) / sqrt(var_o). Lower is
/// better; the identity filter scores 1.
struct SmpiReport {
  double mu_o = 0.0;
  double mu_r = 0.0;
  double var_o = 0.0;
  double var_r = 0.0;
  double q = 1.0;
  double smpi = 0.0;
};

SmpiReport smpi(const Volume3D& original, const Volume3D& filtered);

/// SMPI after mapping both volumes through the affine map that takes the
/// original's range onto [0, 1], so Q does not depend on the storage scale.
SmpiReport smpi_unit_scaled(const Volume3D& original, const Volume3D& filtered);

double mse(const Volume3D& a, const Volume3D& b);

/// Per-voxel displacement in voxel units.
class DisplacementField {
 public:
  using Vec = std::array<double, 3>;

  explicit DisplacementField(Dims dims, Vec fill = {0.0, 0.0, 0.0});
  DisplacementField(Dims dims, std::vector<Vec> vectors);

  const Dims& dims() const { return dims_; }
  const Vec& at(std::size_t linear) const { return vectors_[linear]; }
  Vec& at(std::size_t linear) { return vectors_[linear]; }

 private:
  Dims dims_;
  std::vector<Vec> vectors_;
};

/// output(x) = moving sampled at x + field(x), trilinear, clamp-to-edge.
Volume3D warp_trilinear(const Volume3D& moving, const DisplacementField& field);

}  // namespace despeckle
