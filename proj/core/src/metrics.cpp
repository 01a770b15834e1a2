#include "pcbct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "pcbct/errors.hpp"
#include "pcbct/png.hpp"

namespace pcbct {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ParameterError(std::string(op) + ": shape mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
}

void require_same_shape(const Volume& a, const Volume& b, const char* op) {
  if (a.slices.empty() || b.slices.empty()) throw ParameterError(std::string(op) + ": empty volume");
  if (a.n_slices() != b.n_slices()) throw ParameterError(std::string(op) + ": slice count mismatch");
  for (int k = 0; k < a.n_slices(); ++k) require_same_shape(a.slices[k], b.slices[k], op);
}

}  // namespace

double mae(const Image& a, const Image& b) {
  require_same_shape(a, b, "mae");
  double total = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.in_fov(y, x)) continue;
      total += std::abs(static_cast<double>(a.at(y, x)) - b.at(y, x));
      ++count;
    }
  }
  if (count == 0) throw ParameterError("mae: field of view is empty");
  return total / static_cast<double>(count);
}

double mae(const Volume& a, const Volume& b) {
  require_same_shape(a, b, "mae");
  double total = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < a.n_slices(); ++k) {
    const Image& sa = a.slices[k];
    const Image& sb = b.slices[k];
    for (int y = 0; y < sa.height; ++y) {
      for (int x = 0; x < sa.width; ++x) {
        if (!sa.in_fov(y, x)) continue;
        total += std::abs(static_cast<double>(sa.at(y, x)) - sb.at(y, x));
        ++count;
      }
    }
  }
  if (count == 0) throw ParameterError("mae: field of view is empty");
  return total / static_cast<double>(count);
}

double ssim(const Image& a, const Image& b, int window, double dynamic_range) {
  require_same_shape(a, b, "ssim");
  if (window < 1 || window > std::min(a.height, a.width)) throw ParameterError("ssim: window exceeds the image");
  if (!(dynamic_range > 0.0)) throw ParameterError("ssim: dynamic range must be positive");
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const double n = static_cast<double>(window) * window;

  // Prefix counts of out-of-FOV pixels give an O(1) containment test per window.
  const int H = a.height, W = a.width;
  std::vector<int> outside((H + 1) * (W + 1), 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      outside[(y + 1) * (W + 1) + x + 1] = (a.in_fov(y, x) ? 0 : 1) + outside[y * (W + 1) + x + 1] +
                                           outside[(y + 1) * (W + 1) + x] - outside[y * (W + 1) + x];

  double total = 0.0;
  std::size_t windows = 0;
  for (int y0 = 0; y0 + window <= H; ++y0) {
    for (int x0 = 0; x0 + window <= W; ++x0) {
      const int y1 = y0 + window, x1 = x0 + window;
      const int out = outside[y1 * (W + 1) + x1] - outside[y0 * (W + 1) + x1] - outside[y1 * (W + 1) + x0] +
                      outside[y0 * (W + 1) + x0];
      if (out != 0) continue;
      double sa = 0, sb = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          sa += a.at(y, x);
          sb += b.at(y, x);
        }
      const double ma = sa / n, mb = sb / n;
      double vaa = 0, vbb = 0, vab = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const double da = a.at(y, x) - ma, db = b.at(y, x) - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      vaa /= n;
      vbb /= n;
      vab /= n;
      total += ((2 * ma * mb + c1) * (2 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
      ++windows;
    }
  }
  if (windows == 0) throw ParameterError("ssim: no window fits inside the field of view");
  return total / static_cast<double>(windows);
}

double ssim(const Volume& a, const Volume& b, int window, double dynamic_range) {
  require_same_shape(a, b, "ssim");
  double total = 0.0;
  for (int k = 0; k < a.n_slices(); ++k) total += ssim(a.slices[k], b.slices[k], window, dynamic_range);
  return total / a.n_slices();
}

StructuralChangeReport structural_change(const Volume& syn, const Volume& cbct, double threshold_hu) {
  require_same_shape(syn, cbct, "structural_change");
  if (!(threshold_hu >= 0.0)) throw ParameterError("structural_change: threshold must be non-negative");
  StructuralChangeReport r;
  r.threshold_hu = threshold_hu;
  double sq = 0.0;
  for (int k = 0; k < syn.n_slices(); ++k) {
    const Image& s = syn.slices[k];
    const Image& c = cbct.slices[k];
    Image diff(s.height, s.width, s.fov_radius, 0.0f);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        if (!s.in_fov(y, x)) continue;
        ++r.fov_pixels;
        const double d = static_cast<double>(s.at(y, x)) - c.at(y, x);
        if (std::abs(d) < threshold_hu) continue;
        diff.at(y, x) = static_cast<float>(d);
        sq += d * d;
        ++r.error_pixels;
      }
    }
    r.colormap.push_back(std::move(diff));
  }
  if (r.fov_pixels == 0) throw ParameterError("structural_change: field of view is empty");
  r.rmse_hu = std::sqrt(sq / static_cast<double>(r.fov_pixels));
  return r;
}

StructuralChangeReport structural_change(const Image& syn, const Image& cbct, double threshold_hu) {
  Volume a, b;
  a.slices = {syn};
  b.slices = {cbct};
  return structural_change(a, b, threshold_hu);
}

Image mean_volume(const Volume& v) {
  if (v.slices.empty()) throw ParameterError("mean_volume: empty volume");
  const Image& first = v.slices.front();
  std::vector<double> acc(first.size(), 0.0);
  for (const Image& s : v.slices) {
    require_same_shape(first, s, "mean_volume");
    for (std::size_t i = 0; i < s.size(); ++i) acc[i] += s.pixels[i];
  }
  Image out(first.height, first.width, first.fov_radius);
  for (std::size_t i = 0; i < acc.size(); ++i) out.pixels[i] = static_cast<float>(acc[i] / v.n_slices());
  return out;
}

std::vector<double> histogram(const Image& image, double lo, double hi, int bins, bool clamp) {
  if (bins < 2) throw ParameterError("histogram needs at least two bins");
  if (!(lo < hi)) throw ParameterError("histogram range needs lo < hi");
  std::vector<double> counts(bins, 0.0);
  const double width = (hi - lo) / bins;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (!image.in_fov(y, x)) continue;
      double v = image.at(y, x);
      if (clamp) v = std::clamp(v, lo, hi);
      if (v < lo || v > hi) continue;
      const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
      counts[b] += 1.0;
    }
  }
  return counts;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("pearson: need two equal-length series");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw DataError("correlation is undefined for a constant histogram");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double histogram_correlation(const Image& avg_a, const Image& avg_b, double lo, double hi, int bins) {
  const auto ha = histogram(avg_a, lo, hi, bins);
  const auto hb = histogram(avg_b, lo, hi, bins);
  return pearson(ha, hb);
}

double roi_mean(const Image& image, int center_y, int center_x, int size) {
  if (size < 1) throw ParameterError("roi size must be positive");
  const int y0 = center_y - size / 2;
  const int x0 = center_x - size / 2;
  if (y0 < 0 || x0 < 0 || y0 + size > image.height || x0 + size > image.width)
    throw ParameterError("roi at (" + std::to_string(center_y) + ", " + std::to_string(center_x) +
                         ") leaves the image");
  double total = 0.0;
  for (int y = y0; y < y0 + size; ++y)
    for (int x = x0; x < x0 + size; ++x) total += image.at(y, x);
  return total / (static_cast<double>(size) * size);
}

std::vector<Roi> default_rois(int height, int width) {
  const int cy = height / 2, cx = width / 2;
  return {
      {"center", cy, cx, 4},
      {"left", cy, cx - width / 6, 4},
      {"right", cy, cx + width / 6, 4},
      {"anterior", cy - height / 5, cx, 4},
  };
}

const RunRow& RunReport::row(const std::string& name) const {
  for (const RunRow& r : rows)
    if (r.name == name) return r;
  throw ParameterError("report has no row " + name);
}

namespace {

CtValueReport ct_values(const Image& avg, const Image& ref_avg, const EvaluationConfig& cfg) {
  CtValueReport r;
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (int y = 0; y < avg.height; ++y)
    for (int x = 0; x < avg.width; ++x) {
      if (!avg.in_fov(y, x)) continue;
      sum += avg.at(y, x);
      ++n;
    }
  r.mean_hu = sum / static_cast<double>(n);
  for (int y = 0; y < avg.height; ++y)
    for (int x = 0; x < avg.width; ++x) {
      if (!avg.in_fov(y, x)) continue;
      sq += (avg.at(y, x) - r.mean_hu) * (avg.at(y, x) - r.mean_hu);
    }
  r.std_hu = std::sqrt(sq / static_cast<double>(n));
  r.correlation = histogram_correlation(avg, ref_avg, cfg.hist_lo, cfg.hist_hi, cfg.hist_bins);
  r.histogram = histogram(avg, kMinHu, kMaxHu, cfg.report_bins, /*clamp=*/true);
  for (const Roi& roi : cfg.rois) r.roi_means.push_back(roi_mean(avg, roi.y, roi.x, roi.size));
  return r;
}

nlohmann::json structure_json(const StructuralChangeReport& s) {
  return {{"rmse_hu", s.rmse_hu},
          {"error_pixels", s.error_pixels},
          {"fov_pixels", s.fov_pixels},
          {"threshold_hu", s.threshold_hu}};
}

}  // namespace

RunReport evaluate_run(const Volume& syn, const Volume& cbct, const Volume& reference, const EvaluationConfig& config) {
  require_same_shape(syn, cbct, "evaluate_run");
  require_same_shape(syn, reference, "evaluate_run");
  RunReport report;
  report.config = config;
  if (report.config.rois.empty()) report.config.rois = default_rois(syn.height(), syn.width());
  const Image ref_avg = mean_volume(reference);
  const std::pair<const char*, const Volume*> rows[] = {{"cbct", &cbct}, {"syn", &syn}, {"reference", &reference}};
  for (const auto& [name, vol] : rows) {
    RunRow row;
    row.name = name;
    row.structure = structural_change(*vol, cbct, config.threshold_hu);
    row.values = ct_values(mean_volume(*vol), ref_avg, report.config);
    row.mae_vs_reference = mae(*vol, reference);
    row.ssim_vs_reference = ssim(*vol, reference, config.ssim_window, config.dynamic_range);
    report.rows.push_back(std::move(row));
  }
  report.syn_vs_reference = structural_change(syn, reference, config.threshold_hu);
  return report;
}

std::string RunReport::to_json() const {
  nlohmann::json j;
  j["config"] = {{"threshold_hu", config.threshold_hu},
                 {"histogram_range_hu", {config.hist_lo, config.hist_hi}},
                 {"histogram_bins", config.hist_bins},
                 {"report_bins", config.report_bins},
                 {"ssim_window", config.ssim_window},
                 {"dynamic_range", config.dynamic_range}};
  nlohmann::json rois = nlohmann::json::array();
  for (const Roi& r : config.rois) rois.push_back({{"name", r.name}, {"y", r.y}, {"x", r.x}, {"size", r.size}});
  j["config"]["rois"] = rois;
  nlohmann::json list = nlohmann::json::array();
  for (const RunRow& r : rows) {
    nlohmann::json roi_means = nlohmann::json::object();
    for (std::size_t i = 0; i < r.values.roi_means.size(); ++i) roi_means[config.rois[i].name] = r.values.roi_means[i];
    list.push_back({{"name", r.name},
                    {"structural_change_vs_cbct", structure_json(r.structure)},
                    {"mean_hu", r.values.mean_hu},
                    {"std_hu", r.values.std_hu},
                    {"histogram_correlation_vs_reference", r.values.correlation},
                    {"roi_means_hu", roi_means},
                    {"mae_vs_reference_hu", r.mae_vs_reference},
                    {"ssim_vs_reference", r.ssim_vs_reference}});
  }
  j["rows"] = list;
  j["syn_vs_reference"] = structure_json(syn_vs_reference);
  return j.dump(2);
}

std::vector<std::filesystem::path> write_run_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  const auto json_path = dir / "report.json";
  {
    std::ofstream f(json_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + json_path.string());
    f << report.to_json() << '\n';
  }
  written.push_back(json_path);

  const auto csv_path = dir / "histogram.csv";
  {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + csv_path.string());
    f << "bin_lo_hu,bin_hi_hu";
    for (const RunRow& r : report.rows) f << ',' << r.name;
    f << '\n';
    const int bins = report.config.report_bins;
    const double w = (kMaxHu - kMinHu) / bins;
    f << std::setprecision(10);
    for (int b = 0; b < bins; ++b) {
      f << kMinHu + b * w << ',' << kMinHu + (b + 1) * w;
      for (const RunRow& r : report.rows) f << ',' << r.values.histogram[b];
      f << '\n';
    }
  }
  written.push_back(csv_path);

  const RunRow& syn = report.row("syn");
  for (std::size_t k = 0; k < syn.structure.colormap.size(); ++k) {
    const Image& d = syn.structure.colormap[k];
    std::ostringstream name;
    name << "colormap_syn_vs_cbct_" << std::setw(3) << std::setfill('0') << k << ".png";
    const auto path = dir / name.str();
    write_png(path, d.width, d.height, 3, signed_colormap(d));
    written.push_back(path);
  }
  return written;
}

}  // namespace pcbct
