#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcbct/image.hpp"

namespace pcbct {

// Mean |a - b| over the field of view of `a`. Shapes must match.
double mae(const Image& a, const Image& b);
double mae(const Volume& a, const Volume& b);

// Mean local SSIM over uniform window x window patches lying entirely inside the
// field of view; c1 = (0.01 L)^2, c2 = (0.03 L)^2 with L = dynamic_range.
double ssim(const Image& a, const Image& b, int window = 8, double dynamic_range = 2000.0);
// Mean of the per-slice scores.
double ssim(const Volume& a, const Volume& b, int window = 8, double dynamic_range = 2000.0);

struct StructuralChangeReport {
  double rmse_hu = 0.0;
  std::size_t error_pixels = 0;
  double threshold_hu = 600.0;
  std::size_t fov_pixels = 0;
  // Per slice, syn - cbct with |difference| < threshold set to 0.
  std::vector<Image> colormap;
};

StructuralChangeReport structural_change(const Volume& syn, const Volume& cbct, double threshold_hu = 600.0);
StructuralChangeReport structural_change(const Image& syn, const Image& cbct, double threshold_hu = 600.0);

// Pixelwise mean across slices.
Image mean_volume(const Volume& v);

// Counts of field-of-view pixels in `bins` equal bins over [lo, hi]. Pixels
// outside the range are dropped, or with `clamp` folded into the end bins.
std::vector<double> histogram(const Image& image, double lo, double hi, int bins, bool clamp = false);

// Pearson correlation of the two histograms; DataError if either is constant.
double pearson(std::span<const double> a, std::span<const double> b);
double histogram_correlation(const Image& avg_a, const Image& avg_b, double lo = -500.0, double hi = 500.0,
                             int bins = 100);

// Mean over the size x size square whose top-left corner is center - size / 2.
double roi_mean(const Image& image, int center_y, int center_x, int size = 4);

struct Roi {
  std::string name;
  int y = 0;
  int x = 0;
  int size = 4;
};

struct EvaluationConfig {
  double threshold_hu = 600.0;
  double hist_lo = -500.0;
  double hist_hi = 500.0;
  int hist_bins = 100;
  int report_bins = 200;  // histogram.csv bins over [-1000, 1000]
  int ssim_window = 8;
  double dynamic_range = 2000.0;
  std::vector<Roi> rois;
};

// Default ROIs for a phantom of the given size: body center, left and right
// soft tissue, and the anterior region.
std::vector<Roi> default_rois(int height, int width);

struct CtValueReport {
  double mean_hu = 0.0;  // of the average image over the field of view
  double std_hu = 0.0;
  double correlation = 1.0;  // against the reference average image
  std::vector<double> histogram;
  std::vector<double> roi_means;
};

// One row per volume (cbct, syn, reference): structural change against the CBCT
// plus CT-value statistics against the reference.
struct RunRow {
  std::string name;
  StructuralChangeReport structure;
  CtValueReport values;
  double mae_vs_reference = 0.0;
  double ssim_vs_reference = 1.0;
};

struct RunReport {
  EvaluationConfig config;
  std::vector<RunRow> rows;
  StructuralChangeReport syn_vs_reference;

  const RunRow& row(const std::string& name) const;
  std::string to_json() const;
};

RunReport evaluate_run(const Volume& syn, const Volume& cbct, const Volume& reference,
                       const EvaluationConfig& config = {});

// Writes report.json, histogram.csv and one colormap PNG per slice into `dir`;
// returns the written paths.
std::vector<std::filesystem::path> write_run_report(const RunReport& report, const std::filesystem::path& dir);

}  // namespace pcbct
