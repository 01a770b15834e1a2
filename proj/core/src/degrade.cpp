#include "pcbct/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pcbct/errors.hpp"

namespace pcbct {

void DegradationParams::validate() const {
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
  if (!(smooth_sigma > 0.0)) throw ParameterError("smooth_sigma must be > 0");
  if (!(c0 >= 1.0)) throw ParameterError("c0 must be >= 1");
  if (!(r1 > 0.0 && r1 <= 1.0)) throw ParameterError("r1 must lie in (0, 1]");
  if (!(r2 > 0.0 && r2 <= 1.0)) throw ParameterError("r2 must lie in (0, 1]");
  if (!(bone_threshold >= kMinHu && bone_threshold < kMaxHu)) throw ParameterError("bone_threshold out of range");
  if (!(mask2_radius_frac >= 0.0 && mask2_radius_frac <= 1.0))
    throw ParameterError("mask2_radius_frac must lie in [0, 1]");
  if (mask3_width_px < 1) throw ParameterError("mask3_width_px must be >= 1");
  if (!(mask3_shift_hu >= 0.0)) throw ParameterError("mask3_shift_hu must be >= 0");
  if (n_angles < 1) throw ParameterError("n_angles must be >= 1");
}

namespace {

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

void require_same_shape(const Sinogram& a, const Sinogram& b, const char* what) {
  if (!a.same_shape(b)) throw ParameterError(std::string(what) + ": sinogram shapes differ");
}

}  // namespace

std::vector<double> gaussian_smooth(std::span<const double> grid, int rows, int cols, double width) {
  if (!(width > 0.0)) throw ParameterError("smoothing width must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * width));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (width * width));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  std::vector<double> tmp(grid.size(), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * grid[static_cast<std::size_t>(r) * cols + mirror(c + i, cols)];
      tmp[static_cast<std::size_t>(r) * cols + c] = acc;
    }
  std::vector<double> out(grid.size(), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(mirror(r + i, rows)) * cols + c];
      out[static_cast<std::size_t>(r) * cols + c] = acc;
    }
  return out;
}

DisplacementField make_displacement_field(int rows, int cols, double sigma, double smooth_sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ParameterError("sigma must be >= 0");
  if (!(smooth_sigma > 0.0)) throw ParameterError("smooth_sigma must be > 0");
  if (rows < 1 || cols < 1) throw ParameterError("field shape must be positive");
  DisplacementField f;
  f.rows = rows;
  f.cols = cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (sigma == 0.0) {
    f.dx.assign(n, 0.0);
    f.dy.assign(n, 0.0);
    return f;
  }
  std::vector<double> raw(n);
  fill_normal(rng, raw, sigma);
  f.dx = gaussian_smooth(raw, rows, cols, smooth_sigma);
  fill_normal(rng, raw, sigma);
  f.dy = gaussian_smooth(raw, rows, cols, smooth_sigma);
  return f;
}

BoneSinogram extract_bone_sinogram(const Image& image, double bone_threshold, int n_angles) {
  std::vector<double> mu(image.size(), 0.0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.pixels[i];
    if (!std::isfinite(v)) throw DataError("non-finite pixel");
    if (v >= bone_threshold) mu[i] = hu_to_unit(v);
  }
  BoneSinogram out{project_attenuation(mu, image.height, image.width, image.fov_radius, n_angles), {}};
  out.mask.resize(out.sino.data.size());
  for (std::size_t i = 0; i < out.mask.size(); ++i) out.mask[i] = out.sino.data[i] > 0.0 ? 1 : 0;
  return out;
}

BoneSplit split_bone(const Image& image, double bone_threshold, double fill_hu, int n_angles) {
  std::vector<double> soft(image.size());
  std::vector<double> bone(image.size(), 0.0);
  const double fill = hu_to_unit(fill_hu);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.pixels[i];
    if (!std::isfinite(v)) throw DataError("non-finite pixel");
    const double mu = hu_to_unit(v);
    if (v >= bone_threshold) {
      soft[i] = fill;
      bone[i] = mu - fill;
    } else {
      soft[i] = mu;
    }
  }
  BoneSplit out;
  out.soft = project_attenuation(soft, image.height, image.width, image.fov_radius, n_angles);
  out.bone = project_attenuation(bone, image.height, image.width, image.fov_radius, n_angles);
  out.mask = extract_bone_sinogram(image, bone_threshold, n_angles).mask;
  return out;
}

Sinogram warp_sinogram(const Sinogram& sino, const DisplacementField& field) {
  if (field.rows != sino.n_angles || field.cols != sino.n_detectors)
    throw ParameterError("displacement field shape does not match sinogram");
  const int rows = sino.n_angles;
  const int cols = sino.n_detectors;
  Sinogram out = sino;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      const double sy = std::clamp(r + field.dy[i], 0.0, static_cast<double>(rows - 1));
      const double sx = std::clamp(c + field.dx[i], 0.0, static_cast<double>(cols - 1));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, rows - 1);
      const int x1 = std::min(x0 + 1, cols - 1);
      const double fy = sy - y0;
      const double fx = sx - x0;
      const double top = sino.at(y0, x0) * (1.0 - fx) + sino.at(y0, x1) * fx;
      const double bot = sino.at(y1, x0) * (1.0 - fx) + sino.at(y1, x1) * fx;
      out.data[i] = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

Sinogram merge_bone(const Sinogram& warped, const Sinogram& bone, std::span<const std::uint8_t> mask) {
  require_same_shape(warped, bone, "merge_bone");
  if (mask.size() != warped.data.size()) throw ParameterError("merge_bone: mask size differs from sinogram");
  Sinogram out = warped;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (mask[i]) out.data[i] += bone.data[i];
  return out;
}

Sinogram adjust_contrast(const Sinogram& sino, double c0) {
  if (!(c0 >= 1.0)) throw ParameterError("c0 must be >= 1");
  const double smax = sino.s_max;
  Sinogram out = sino;
  for (double& v : out.data) {
    if (v < 0.0) {
      if (v < -1e-9 * std::max(1.0, smax)) throw DataError("adjust_contrast expects a nonnegative sinogram");
      v = 0.0;
    }
    if (smax <= 0.0) {
      v = 0.0;
      continue;
    }
    if (c0 != 1.0) v = smax * std::pow(v / smax, c0);
    v = std::min(v, smax);
  }
  return out;
}

Image gamma_correct(const Image& image, std::span<const std::uint8_t> mask, double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ParameterError("gamma parameter r must lie in (0, 1]");
  if (mask.size() != image.size()) throw ParameterError("gamma_correct: mask size differs from image");
  Image out = image;
  if (r == 1.0) return out;
  const double exponent = 1.0 / r;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask[i]) continue;
    const double u = std::clamp(hu_to_unit(out.pixels[i]), 0.0, 1.0);
    out.pixels[i] = static_cast<float>(unit_to_hu(std::pow(u, exponent)));
  }
  return out;
}

std::vector<std::uint8_t> fov_mask(const Image& image) {
  std::vector<std::uint8_t> m(image.size(), 0);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      m[static_cast<std::size_t>(y) * image.width + x] = image.in_fov(y, x) ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> outer_region_mask(const Image& image, double radius_frac) {
  std::vector<std::uint8_t> m(image.size(), 0);
  const double inner = radius_frac * image.fov_radius;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      m[static_cast<std::size_t>(y) * image.width + x] = image.in_fov(y, x) && image.radius_of(y, x) > inner;
  return m;
}

Image edge_shift(const Image& image, int width_px, double shift_hu) {
  if (width_px < 1) throw ParameterError("mask3 width must be >= 1");
  if (!(shift_hu >= 0.0)) throw ParameterError("mask3 shift must be >= 0");
  Image out = image;
  if (shift_hu == 0.0) return out;
  const double outer = image.fov_radius;
  const double inner = outer - width_px;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!image.in_fov(y, x)) continue;
      const double d = image.radius_of(y, x);
      if (d <= inner) continue;
      const double ramp = std::min(1.0, (d - inner) / width_px);
      float& v = out.at(y, x);
      v = static_cast<float>(std::max<double>(kMinHu, v - ramp * shift_hu));
    }
  }
  return out;
}

Image simulate_cbct(const Image& image, const DegradationParams& params) {
  params.validate();
  const DegradationSwitches& sw = params.switches;

  // STEP1
  Sinogram sino = radon(image, params.n_angles);
  const double s_max = sino.s_max;

  // STEP2: warp the soft-tissue component only, then restore the bone.
  if (sw.warp && params.sigma > 0.0) {
    BoneSplit split = split_bone(image, params.bone_threshold, params.soft_fill_hu, params.n_angles);
    Rng rng = make_rng(params.seed, 0);
    const DisplacementField field =
        make_displacement_field(sino.n_angles, sino.n_detectors, params.sigma, params.smooth_sigma, rng);
    sino = merge_bone(warp_sinogram(split.soft, field), split.bone, split.mask);
    sino.s_max = s_max;
  }

  // STEP3
  if (sw.contrast && params.c0 != 1.0) sino = adjust_contrast(sino, params.c0);

  // STEP4
  Image out = fbp(sino);

  // STEP5
  if (sw.mask1 && params.r1 != 1.0) out = gamma_correct(out, fov_mask(out), params.r1);
  if (sw.mask2 && params.r2 != 1.0) out = gamma_correct(out, outer_region_mask(out, params.mask2_radius_frac), params.r2);
  if (sw.mask3 && params.mask3_shift_hu > 0.0) out = edge_shift(out, params.mask3_width_px, params.mask3_shift_hu);

  clamp_and_mask(out);
  return out;
}

DegradationParams sample_params(Rng& rng, const DegradationParams& base) {
  auto pick = [&rng](std::span<const double> grid) {
    std::uniform_int_distribution<std::size_t> d(0, grid.size() - 1);
    return grid[d(rng)];
  };
  DegradationParams p = base;
  p.sigma = pick(kSigmaGrid);
  p.c0 = pick(kC0Grid);
  p.r1 = pick(kR1Grid);
  if (p.c0 == 1.0) {
    p.r2 = pick(std::span<const double>(kR2Grid, 2));
  } else {
    p.r2 = 1.0;
  }
  p.seed = rng();
  return p;
}

SimulatedVolume simulate_volume(const Volume& ct, const DegradationParams& base, std::uint64_t seed, bool per_slice) {
  ct.validate();
  SimulatedVolume out;
  out.volume.spacing = ct.spacing;
  out.volume.fov_radius_px = ct.fov_radius_px;
  Rng shared = make_rng(seed, 0);
  const DegradationParams volume_params = sample_params(shared, base);
  for (int k = 0; k < ct.n_slices(); ++k) {
    DegradationParams p = volume_params;
    if (per_slice) {
      Rng rng = make_rng(seed, static_cast<std::uint64_t>(k) + 1);
      p = sample_params(rng, base);
    } else {
      p.seed = derive_seed(volume_params.seed, static_cast<std::uint64_t>(k));
    }
    out.volume.slices.push_back(simulate_cbct(ct.slices[k], p));
    out.params.push_back(p);
  }
  return out;
}

}  // namespace pcbct
