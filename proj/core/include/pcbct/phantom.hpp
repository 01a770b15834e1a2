#pragma once

#include <cstdint>

#include "pcbct/image.hpp"

namespace pcbct {

struct HuInterval {
  float lo = 0.0f;
  float hi = 0.0f;
};

struct TissueRanges {
  HuInterval air{-1000.0f, -1000.0f};
  HuInterval fat{-100.0f, -100.0f};
  HuInterval soft{0.0f, 80.0f};
  HuInterval bone{250.0f, 900.0f};
};

// Geometry of the procedural pelvis, in units of the field-of-view radius,
// measured from the grid center (+x right, +y down).
struct PhantomLayout {
  double body_semi_x = 1.08;
  double body_semi_y = 0.90;
  double fat_thickness = 0.08;
  double organ_center_y = -0.12;
  double organ_semi_x = 0.20;
  double organ_semi_y = 0.15;
  double ring_semi_x = 0.50;
  double ring_semi_y = 0.42;
  double ring_thickness = 0.06;
  double femur_offset_x = 0.74;
  double femur_offset_y = 0.05;
  double femur_radius = 0.13;
  int gas_pockets = 1;
  double gas_center_y = 0.25;
  double gas_radius = 0.06;
  // Amplitude of the random per-volume perturbation of the end-slice keyframes.
  double jitter = 0.04;
  // Width of the partial-volume transition at tissue boundaries, in pixels.
  double edge_width_px = 1.0;
};

struct PhantomSpec {
  int height = 128;
  int width = 128;
  int n_slices = 8;
  std::uint64_t seed = 1;
  int fov_radius_px = 0;  // 0 selects default_fov_radius(height, width)
  Spacing spacing{};
  TissueRanges tissues{};
  PhantomLayout layout{};
};

// Layout of slice `k` after keyframe interpolation, in field-of-view units.
struct SliceGeometry {
  double body_semi_x, body_semi_y;
  double inner_semi_x, inner_semi_y;
  double organ_cx, organ_cy, organ_semi_x, organ_semi_y;
  double ring_cx, ring_cy, ring_semi_x, ring_semi_y, ring_thickness;
  double femur_left_cx, femur_right_cx, femur_cy, femur_radius;
  double gas_cx, gas_cy, gas_radius;
};

struct TissueValues {
  float air, fat, soft, organ, ring, femur_left, femur_right;
};

void validate(const PhantomSpec& spec);
int resolved_fov_radius(const PhantomSpec& spec);
SliceGeometry slice_geometry(const PhantomSpec& spec, int slice);
TissueValues tissue_values(const PhantomSpec& spec);

// Deterministic synthetic pelvic phantom; a pure function of `spec`.
Volume generate_phantom(const PhantomSpec& spec);

}  // namespace pcbct
