#include "pcbct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pcbct/errors.hpp"
#include "pcbct/rng.hpp"

namespace pcbct {
namespace {

struct Keyframe {
  double body_sx, body_sy, organ_cy, organ_sx, organ_sy, ring_cy, ring_sx, ring_sy, femur_cy, femur_r, gas_cx,
      gas_cy;
};

Keyframe draw_keyframe(const PhantomLayout& l, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double j = l.jitter;
  Keyframe k{};
  k.body_sx = l.body_semi_x * (1.0 + j * u(rng));
  k.body_sy = l.body_semi_y * (1.0 + j * u(rng));
  k.organ_cy = l.organ_center_y + j * u(rng);
  k.organ_sx = l.organ_semi_x * (1.0 + 2.0 * j * u(rng));
  k.organ_sy = l.organ_semi_y * (1.0 + 2.0 * j * u(rng));
  k.ring_cy = j * 0.5 * u(rng);
  k.ring_sx = l.ring_semi_x * (1.0 + j * u(rng));
  k.ring_sy = l.ring_semi_y * (1.0 + j * u(rng));
  k.femur_cy = l.femur_offset_y + j * u(rng);
  k.femur_r = l.femur_radius * (1.0 + 2.0 * j * u(rng));
  k.gas_cx = j * u(rng);
  k.gas_cy = l.gas_center_y + j * 0.5 * u(rng);
  return k;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

// Fractional coverage of an ellipse at pixel offset (dx, dy); a linear ramp of
// `edge` pixels across the boundary.
double ellipse_membership(double dx, double dy, double sx, double sy, double edge) {
  if (sx <= 0.0 || sy <= 0.0) return 0.0;
  const double rho = std::sqrt((dx / sx) * (dx / sx) + (dy / sy) * (dy / sy));
  const double r = std::sqrt(dx * dx + dy * dy);
  const double along = rho > 1e-12 ? r / rho : std::min(sx, sy);
  const double signed_dist = (rho - 1.0) * along;
  return std::clamp(0.5 - signed_dist / edge, 0.0, 1.0);
}

float blend(float base, float value, double m) {
  return static_cast<float>(static_cast<double>(base) * (1.0 - m) + static_cast<double>(value) * m);
}

float draw(const HuInterval& iv, Rng& rng) {
  if (iv.lo == iv.hi) return iv.lo;
  std::uniform_real_distribution<double> d(iv.lo, iv.hi);
  return static_cast<float>(d(rng));
}

}  // namespace

void validate(const PhantomSpec& spec) {
  if (spec.height < 32 || spec.width < 32) throw ParameterError("phantom size must be at least 32x32");
  if (spec.n_slices < 1) throw ParameterError("phantom needs at least one slice");
  const HuInterval ivs[] = {spec.tissues.air, spec.tissues.fat, spec.tissues.soft, spec.tissues.bone};
  for (const auto& iv : ivs) {
    if (!(iv.lo <= iv.hi)) throw ParameterError("empty HU interval");
    if (iv.lo < kMinHu || iv.hi > kMaxHu) throw ParameterError("HU interval outside [-1000, 1000]");
  }
  for (int i = 0; i + 1 < 4; ++i)
    if (ivs[i].hi > ivs[i + 1].lo) throw ParameterError("HU intervals must be ordered air <= fat <= soft <= bone");
  if (spec.fov_radius_px < 0) throw ParameterError("negative field-of-view radius");
  if (spec.layout.edge_width_px <= 0.0) throw ParameterError("edge width must be positive");
}

int resolved_fov_radius(const PhantomSpec& spec) {
  return spec.fov_radius_px > 0 ? spec.fov_radius_px : default_fov_radius(spec.height, spec.width);
}

SliceGeometry slice_geometry(const PhantomSpec& spec, int slice) {
  const PhantomLayout& l = spec.layout;
  Rng rng = make_rng(spec.seed, 1);
  const Keyframe a = draw_keyframe(l, rng);
  const Keyframe b = draw_keyframe(l, rng);
  const double t = spec.n_slices > 1 ? static_cast<double>(slice) / (spec.n_slices - 1) : 0.0;

  SliceGeometry g{};
  g.body_semi_x = lerp(a.body_sx, b.body_sx, t);
  g.body_semi_y = lerp(a.body_sy, b.body_sy, t);
  g.inner_semi_x = g.body_semi_x - l.fat_thickness;
  g.inner_semi_y = g.body_semi_y - l.fat_thickness;
  g.organ_cx = 0.0;
  g.organ_cy = lerp(a.organ_cy, b.organ_cy, t);
  g.organ_semi_x = lerp(a.organ_sx, b.organ_sx, t);
  g.organ_semi_y = lerp(a.organ_sy, b.organ_sy, t);
  g.ring_cx = 0.0;
  g.ring_cy = lerp(a.ring_cy, b.ring_cy, t);
  g.ring_semi_x = lerp(a.ring_sx, b.ring_sx, t);
  g.ring_semi_y = lerp(a.ring_sy, b.ring_sy, t);
  g.ring_thickness = l.ring_thickness;
  g.femur_left_cx = -l.femur_offset_x;
  g.femur_right_cx = l.femur_offset_x;
  g.femur_cy = lerp(a.femur_cy, b.femur_cy, t);
  // Femoral heads taper toward the last slice.
  g.femur_radius = lerp(a.femur_r, b.femur_r * 0.8, t);
  g.gas_cx = lerp(a.gas_cx, b.gas_cx, t);
  g.gas_cy = lerp(a.gas_cy, b.gas_cy, t);
  g.gas_radius = l.gas_pockets > 0 ? l.gas_radius : 0.0;
  return g;
}

TissueValues tissue_values(const PhantomSpec& spec) {
  Rng rng = make_rng(spec.seed, 2);
  const TissueRanges& t = spec.tissues;
  TissueValues v{};
  v.air = draw(t.air, rng);
  v.fat = draw(t.fat, rng);
  v.soft = draw(t.soft, rng);
  v.organ = draw(t.soft, rng);
  v.ring = draw(t.bone, rng);
  v.femur_left = draw(t.bone, rng);
  v.femur_right = draw(t.bone, rng);
  return v;
}

Volume generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  const int fov = resolved_fov_radius(spec);
  const double unit = fov;  // pixels per layout unit
  const double edge = spec.layout.edge_width_px;
  const TissueValues tv = tissue_values(spec);

  Volume vol;
  vol.spacing = spec.spacing;
  vol.fov_radius_px = fov;
  vol.slices.reserve(spec.n_slices);

  const double cy = 0.5 * (spec.height - 1);
  const double cx = 0.5 * (spec.width - 1);
  for (int k = 0; k < spec.n_slices; ++k) {
    const SliceGeometry g = slice_geometry(spec, k);
    Image img(spec.height, spec.width, fov, tv.air);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double px = x - cx;
        const double py = y - cy;
        auto member = [&](double ex, double ey, double sx, double sy) {
          return ellipse_membership(px - ex * unit, py - ey * unit, sx * unit, sy * unit, edge);
        };
        float v = tv.air;
        v = blend(v, tv.fat, member(0.0, 0.0, g.body_semi_x, g.body_semi_y));
        v = blend(v, tv.soft, member(0.0, 0.0, g.inner_semi_x, g.inner_semi_y));
        v = blend(v, tv.organ, member(g.organ_cx, g.organ_cy, g.organ_semi_x, g.organ_semi_y));
        const double ring_outer = member(g.ring_cx, g.ring_cy, g.ring_semi_x, g.ring_semi_y);
        const double ring_inner = member(g.ring_cx, g.ring_cy, g.ring_semi_x - g.ring_thickness,
                                         g.ring_semi_y - g.ring_thickness);
        v = blend(v, tv.ring, ring_outer * (1.0 - ring_inner));
        v = blend(v, tv.femur_left, member(g.femur_left_cx, g.femur_cy, g.femur_radius, g.femur_radius));
        v = blend(v, tv.femur_right, member(g.femur_right_cx, g.femur_cy, g.femur_radius, g.femur_radius));
        if (g.gas_radius > 0.0) v = blend(v, tv.air, member(g.gas_cx, g.gas_cy, g.gas_radius, g.gas_radius));
        img.at(y, x) = v;
      }
    }
    clamp_and_mask(img);
    vol.slices.push_back(std::move(img));
  }
  return vol;
}

}  // namespace pcbct
