#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pcbct/image.hpp"
#include "pcbct/rng.hpp"
#include "pcbct/tomography.hpp"

namespace pcbct {

// Per-step toggles; each `false` reproduces one "w/o" ablation variant.
struct DegradationSwitches {
  bool warp = true;
  bool contrast = true;
  bool mask1 = true;
  bool mask2 = true;
  bool mask3 = true;

  bool operator==(const DegradationSwitches&) const = default;
};

struct DegradationParams {
  double sigma = 16.0;         // displacement noise std, sinogram pixels
  double smooth_sigma = 6.0;   // Gaussian smoothing width of the field, sinogram pixels
  double c0 = 1.0;             // sinogram contrast exponent, >= 1
  double r1 = 0.90;            // gamma for mask 1 (whole FOV), (0, 1]
  double r2 = 0.90;            // gamma for mask 2 (outside the central circle), (0, 1]
  double bone_threshold = 250.0;
  double soft_fill_hu = 40.0;  // replaces bone before the soft-tissue sinogram is warped
  double mask2_radius_frac = 0.55;
  int mask3_width_px = 8;
  double mask3_shift_hu = 150.0;
  int n_angles = kDefaultAngles;
  DegradationSwitches switches{};
  std::uint64_t seed = 0;

  // Throws ParameterError on out-of-range values.
  void validate() const;
  bool operator==(const DegradationParams&) const = default;
};

// Displacement over sinogram coordinates: dx along detectors, dy along angles.
struct DisplacementField {
  int rows = 0;
  int cols = 0;
  std::vector<double> dx;
  std::vector<double> dy;
};

DisplacementField make_displacement_field(int rows, int cols, double sigma, double smooth_sigma, Rng& rng);

// Separable Gaussian blur with mirrored borders; kernel radius ceil(3 * width).
std::vector<double> gaussian_smooth(std::span<const double> grid, int rows, int cols, double width);

struct BoneSinogram {
  Sinogram sino;
  std::vector<std::uint8_t> mask;  // 1 where the bone projection is positive
};

// Projection of the pixels at or above `bone_threshold` (all others air).
BoneSinogram extract_bone_sinogram(const Image& image, double bone_threshold, int n_angles);

// Linear decomposition radon(image) == soft + bone: `soft` projects the image
// with bone pixels replaced by `fill_hu`, `bone` projects the bone attenuation in
// excess of that fill. `mask` is the bone-projection support.
struct BoneSplit {
  Sinogram soft;
  Sinogram bone;
  std::vector<std::uint8_t> mask;
};
BoneSplit split_bone(const Image& image, double bone_threshold, double fill_hu, int n_angles);

// Backward bilinear warp: out(p) = in(p + field(p)), border-clamped.
Sinogram warp_sinogram(const Sinogram& sino, const DisplacementField& field);

// Adds the unwarped bone component back on its support.
Sinogram merge_bone(const Sinogram& warped, const Sinogram& bone, std::span<const std::uint8_t> mask);

// s_max * (s / s_max)^c0, clipped to s_max; s_max taken from the source sinogram.
Sinogram adjust_contrast(const Sinogram& sino, double c0);

// Inside `mask`: u = (v + 1000) / 2000, u' = u^(1/r), back to HU.
Image gamma_correct(const Image& image, std::span<const std::uint8_t> mask, double r);

std::vector<std::uint8_t> fov_mask(const Image& image);
// Pixels in the FOV but outside the central circle of radius frac * fov_radius.
std::vector<std::uint8_t> outer_region_mask(const Image& image, double radius_frac);

// Darkens the band of `width_px` just inside the FOV boundary, ramping from 0 at
// the inner edge to `shift_hu` at the boundary.
Image edge_shift(const Image& image, int width_px, double shift_hu);

// Full sinogram + image-domain degradation honoring `params.switches`.
Image simulate_cbct(const Image& image, const DegradationParams& params);

inline constexpr double kSigmaGrid[] = {8.0, 16.0, 24.0};
inline constexpr double kC0Grid[] = {1.0, 1.15};
inline constexpr double kR1Grid[] = {0.75, 0.85, 0.90, 0.95};
inline constexpr double kR2Grid[] = {0.85, 0.90, 1.0};

// Draws sigma, c0, r1, r2 from the experiment grid with r2 coupled to c0
// (c0 = 1.15 -> r2 = 1.0; c0 = 1.0 -> r2 in {0.85, 0.90}) and a fresh seed;
// every other field comes from `base`.
DegradationParams sample_params(Rng& rng, const DegradationParams& base = {});

// Degrades every slice; with `per_slice` each slice draws its own parameters,
// otherwise the volume shares one draw. Slice rng substreams derive from
// (seed, slice index).
struct SimulatedVolume {
  Volume volume;
  std::vector<DegradationParams> params;
};
SimulatedVolume simulate_volume(const Volume& ct, const DegradationParams& base, std::uint64_t seed,
                                bool per_slice = true);

}  // namespace pcbct
