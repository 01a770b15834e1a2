#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pcbct/errors.hpp"
#include "pcbct/metrics.hpp"
#include "test_util.hpp"

using namespace pcbct;

namespace {

// Independent SSIM: raw moments and an explicit per-pixel FOV check.
double ssim_oracle(const Image& a, const Image& b, int win, double L) {
  const double c1 = std::pow(0.01 * L, 2), c2 = std::pow(0.03 * L, 2);
  double total = 0;
  int count = 0;
  for (int y0 = 0; y0 + win <= a.height; ++y0)
    for (int x0 = 0; x0 + win <= a.width; ++x0) {
      bool inside = true;
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = y0; y < y0 + win; ++y)
        for (int x = x0; x < x0 + win; ++x) {
          inside = inside && a.in_fov(y, x);
          const double u = a.at(y, x), v = b.at(y, x);
          sa += u;
          sb += v;
          saa += u * u;
          sbb += v * v;
          sab += u * v;
        }
      if (!inside) continue;
      const double n = win * win;
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

Volume as_volume(std::vector<Image> slices) {
  Volume v;
  v.slices = std::move(slices);
  v.fov_radius_px = static_cast<int>(v.slices[0].fov_radius);
  return v;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("mae") {
    Rng rng = make_rng(1);
    const Image a = test::random_image(16, 16, rng);
    const Image b = test::random_image(16, 16, rng);
    CHECK(mae(a, a) == 0.0);
    Image shifted = a;
    for (float& p : shifted.pixels) p += 10.0f;
    CHECK(mae(a, shifted) == doctest::Approx(10.0).epsilon(1e-6));
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a.pixels[i]) - b.pixels[i]);
    CHECK(std::abs(mae(a, b) - s / 256.0) < 1e-9);
    CHECK(mae(as_volume({a, b}), as_volume({b, a})) == doctest::Approx(mae(a, b)));

    Image circle(16, 16, 5.0, 0.0f);
    Image other = circle;
    other.at(0, 0) = 500.0f;  // outside the field of view
    CHECK(mae(circle, other) == 0.0);
    CHECK_THROWS_AS(mae(a, Image(16, 15, 10.0)), ParameterError);
  }

  TEST_CASE("ssim") {
    Rng rng = make_rng(2);
    for (int trial = 0; trial < 5; ++trial) {
      const Image a = test::random_image(16, 16, rng);
      Image b = a;
      std::normal_distribution<double> n(0, 200);
      for (float& p : b.pixels) p += static_cast<float>(n(rng));
      CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b, 8, 2000)) < 1e-9);
      CHECK(std::abs(ssim(a, b, 4, 1000) - ssim_oracle(a, b, 4, 1000)) < 1e-9);
    }
    const Image p = test::phantom_slice(64, 1);
    CHECK(ssim(p, p) == doctest::Approx(1.0));
    CHECK(ssim(Image(16, 16, 20, 30.0f), Image(16, 16, 20, 30.0f)) == doctest::Approx(1.0));
    Image neg = p;
    for (float& v : neg.pixels) v = -v;
    CHECK(ssim(p, neg) < 0.5);
    const double s = ssim(p, test::phantom_slice(64, 9));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK_THROWS_AS(ssim(p, Image(64, 63, 20)), ParameterError);
    CHECK_THROWS_AS(ssim(p, p, 65), ParameterError);
  }

  TEST_CASE("structural change") {
    Image base(33, 33, 16.0, 0.0f);
    apply_fov_mask(base);
    const std::size_t n = base.fov_pixel_count();
    const StructuralChangeReport same = structural_change(base, base);
    CHECK(same.rmse_hu == 0.0);
    CHECK(same.error_pixels == 0);
    CHECK(same.fov_pixels == n);

    Image one = base;
    one.at(16, 16) += 700.0f;
    const StructuralChangeReport r = structural_change(one, base);
    CHECK(r.error_pixels == 1);
    CHECK(r.rmse_hu == doctest::Approx(700.0 / std::sqrt(static_cast<double>(n))));
    CHECK(r.colormap[0].at(16, 16) == 700.0f);
    const StructuralChangeReport rev = structural_change(base, one);
    CHECK(rev.colormap[0].at(16, 16) == -700.0f);

    Image small = base;
    small.at(16, 16) += 500.0f;
    const StructuralChangeReport below = structural_change(small, base);
    CHECK(below.error_pixels == 0);
    CHECK(below.rmse_hu == 0.0);

    Rng rng = make_rng(3);
    const Volume a = as_volume({test::random_image(16, 16, rng), test::random_image(16, 16, rng)});
    const Volume b = as_volume({test::random_image(16, 16, rng), test::random_image(16, 16, rng)});
    const auto ab = structural_change(a, b), ba = structural_change(b, a);
    CHECK(ab.error_pixels == ba.error_pixels);
    CHECK(ab.rmse_hu == ba.rmse_hu);
    // Brute-force recount.
    std::size_t cnt = 0;
    double sq = 0;
    for (int k = 0; k < 2; ++k)
      for (std::size_t i = 0; i < 256; ++i) {
        const double d = double(a.slices[k].pixels[i]) - b.slices[k].pixels[i];
        if (std::abs(d) >= 600) {
          ++cnt;
          sq += d * d;
        }
      }
    CHECK(ab.error_pixels == cnt);
    CHECK(std::abs(ab.rmse_hu - std::sqrt(sq / 512)) < 1e-9);
    for (std::size_t k = 0; k < 2; ++k) {
      std::size_t nonzero = 0;
      for (float v : ab.colormap[k].pixels) nonzero += v != 0.0f;
      cnt -= nonzero;
    }
    CHECK(cnt == 0);

    std::size_t prev = SIZE_MAX;
    for (double t : {0.0, 100.0, 300.0, 600.0, 900.0, 1500.0, 2500.0}) {
      const std::size_t c = structural_change(a, b, t).error_pixels;
      CHECK(c <= prev);
      prev = c;
    }
    CHECK(prev == 0);
    CHECK_THROWS_AS(structural_change(a, as_volume({a.slices[0]})), ParameterError);
  }

  TEST_CASE("mean volume") {
    Rng rng = make_rng(4);
    const Image a = test::random_image(16, 16, rng);
    CHECK(mean_volume(as_volume({a})).pixels == a.pixels);
    Image neg = a;
    for (float& v : neg.pixels) v = -v;
    for (float v : mean_volume(as_volume({a, neg})).pixels) CHECK(std::abs(v) < 1e-4);
    const Image b = test::random_image(16, 16, rng), c = test::random_image(16, 16, rng);
    const Image m = mean_volume(as_volume({a, b, c}));
    for (std::size_t i = 0; i < m.size(); ++i)
      CHECK(std::abs(m.pixels[i] - (double(a.pixels[i]) + b.pixels[i] + c.pixels[i]) / 3.0) < 1e-4);
    CHECK_THROWS_AS(mean_volume(Volume{}), ParameterError);
  }

  TEST_CASE("histogram correlation") {
    const Image p = test::phantom_slice(64, 2);
    CHECK(histogram_correlation(p, p) == doctest::Approx(1.0));

    Image a(16, 16, 30.0, -200.0f), b(16, 16, 30.0, 300.0f);
    a.at(0, 0) = 100.0f;
    b.at(0, 0) = -450.0f;
    const double r = histogram_correlation(a, b);
    CHECK(r < 0.0);

    // Permuting pixel positions leaves the histogram unchanged.
    Rng rng = make_rng(5);
    Image q = test::random_image(16, 16, rng, -500, 500);
    Image shuffled = q;
    std::shuffle(shuffled.pixels.begin(), shuffled.pixels.end(), rng);
    const Image ref = test::random_image(16, 16, rng, -500, 500);
    CHECK(histogram_correlation(q, ref) == doctest::Approx(histogram_correlation(shuffled, ref)).epsilon(1e-12));

    const auto h = histogram(p, -1000, 1000, 200, true);
    double total = 0;
    for (double c : h) total += c;
    CHECK(total == static_cast<double>(p.fov_pixel_count()));

    const Image flat(16, 16, 30.0, 2000.0f);
    CHECK_THROWS_AS(histogram_correlation(flat, p), DataError);
    CHECK_THROWS_AS(histogram(p, 0, 1, 1), ParameterError);
  }

  TEST_CASE("roi mean") {
    Image img(16, 16, 30.0, 25.0f);
    CHECK(roi_mean(img, 8, 8) == 25.0);
    int k = 0;
    for (int y = 6; y < 10; ++y)
      for (int x = 6; x < 10; ++x) img.at(y, x) = static_cast<float>(k++);
    CHECK(roi_mean(img, 8, 8) == doctest::Approx(7.5));
    Rng rng = make_rng(6);
    const Image r = test::random_image(16, 16, rng);
    for (int cy = 2; cy < 14; cy += 3)
      for (int cx = 2; cx < 14; cx += 5) {
        double s = 0;
        for (int y = cy - 2; y < cy + 2; ++y)
          for (int x = cx - 2; x < cx + 2; ++x) s += r.at(y, x);
        CHECK(std::abs(roi_mean(r, cy, cx) - s / 16) < 1e-9);
      }
    CHECK_THROWS_AS(roi_mean(img, 1, 8), ParameterError);
    CHECK_THROWS_AS(roi_mean(img, 8, 15), ParameterError);
  }

  TEST_CASE("evaluate run") {
    const Volume v = test::phantom_volume(32, 2, 1);
    const RunReport rep = evaluate_run(v, v, v);
    for (const RunRow& row : rep.rows) {
      CHECK(row.structure.rmse_hu == 0.0);
      CHECK(row.structure.error_pixels == 0);
      CHECK(row.values.correlation == doctest::Approx(1.0));
      CHECK(row.mae_vs_reference == 0.0);
    }
    CHECK(rep.row("reference").values.correlation == doctest::Approx(1.0));
    CHECK(rep.row("syn").values.roi_means.size() == rep.config.rois.size());
    CHECK(rep.to_json() == evaluate_run(v, v, v).to_json());
    CHECK_THROWS_AS(rep.row("missing"), ParameterError);

    const auto dir = std::filesystem::temp_directory_path() / "pcbct_metrics_report";
    std::filesystem::remove_all(dir);
    const auto files = write_run_report(rep, dir);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "histogram.csv"));
    CHECK(files.size() == 2 + static_cast<std::size_t>(v.n_slices()));
    std::filesystem::remove_all(dir);
  }
}
