#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pcbct/errors.hpp"
#include "pcbct/phantom.hpp"
#include "pcbct/tomography.hpp"
#include "test_util.hpp"

using namespace pcbct;

TEST_SUITE("tomography") {
  TEST_CASE("air projects to zero") {
    const Image img(64, 64, 30.0);
    const Sinogram s = radon(img, 90);
    for (double v : s.data) CHECK(v == 0.0);
    CHECK(s.s_max == 0.0);
  }

  TEST_CASE("detector geometry") {
    const Sinogram s = make_sinogram(64, 96, 30.0, 12);
    CHECK(s.n_detectors % 2 == 1);
    CHECK(s.n_detectors >= std::sqrt(64.0 * 64 + 96 * 96));
    for (int k = 0; k < 12; ++k) CHECK(s.angles[k] == doctest::Approx(std::numbers::pi * k / 12));
  }

  TEST_CASE("single center pixel has equal mass at every angle") {
    std::vector<double> mu(65 * 65, 0.0);
    mu[32 * 65 + 32] = 1.0;
    const Sinogram s = project_attenuation(mu, 65, 65, 30, 4);
    // Brute-force oracle: one unit of attenuation, one pixel area, per angle.
    for (int k = 0; k < 4; ++k) {
      double row = 0;
      for (int d = 0; d < s.n_detectors; ++d) row += s.at(k, d);
      CHECK(row == doctest::Approx(1.0).epsilon(0.01));
    }
  }

  TEST_CASE("nonnegative attenuation gives a nonnegative sinogram") {
    const Image img = test::phantom_slice(64, 3);
    for (double v : radon(img, 60).data) CHECK(v >= 0.0);
  }

  TEST_CASE("radon is linear in attenuation space") {
    Rng rng = make_rng(4);
    std::vector<double> a(48 * 48), b(48 * 48), ab(48 * 48);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng);
      b[i] = u(rng);
      ab[i] = a[i] + b[i];
    }
    const Sinogram sa = project_attenuation(a, 48, 48, 20, 30);
    const Sinogram sb = project_attenuation(b, 48, 48, 20, 30);
    const Sinogram sab = project_attenuation(ab, 48, 48, 20, 30);
    for (std::size_t i = 0; i < sa.data.size(); ++i) CHECK(std::abs(sab.data[i] - sa.data[i] - sb.data[i]) < 1e-9);
  }

  TEST_CASE("rotation by 90 degrees shifts rows by half the angles") {
    const Image img = test::phantom_slice(64, 8);
    Image rot(img.height, img.width, img.fov_radius);
    // rot(y, x) = img(W-1-x, y): a quarter turn of the grid.
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) rot.at(y, x) = img.at(img.width - 1 - x, y);
    const int n = 36;
    const Sinogram s = radon(img, n);
    const Sinogram r = radon(rot, n);
    double err = 0, mag = 0;
    // P_rot(theta_k) = P(theta_k - pi/2); rows that wrap below 0 are detector-flipped.
    for (int k = 0; k < n; ++k) {
      int src = k - n / 2;
      bool flip = false;
      if (src < 0) {
        src += n;
        flip = true;
      }
      for (int d = 0; d < s.n_detectors; ++d) {
        const double expected = flip ? s.at(src, s.n_detectors - 1 - d) : s.at(src, d);
        err += std::abs(r.at(k, d) - expected);
        mag += std::abs(expected);
      }
    }
    INFO("relative mismatch " << err / mag);
    CHECK(err / mag < 0.02);
  }

  TEST_CASE("ramp filter is linear and kills DC") {
    Sinogram s = make_sinogram(32, 32, 14, 3);
    CHECK(ramp_filter(s).data == s.data);
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : s.data) v = u(rng);
    Sinogram s2 = s;
    for (double& v : s2.data) v *= 2.0;
    const Sinogram f1 = ramp_filter(s), f2 = ramp_filter(s2);
    for (std::size_t i = 0; i < f1.data.size(); ++i) CHECK(f2.data[i] == doctest::Approx(2 * f1.data[i]));

    // A constant row long enough that the central bins see the full kernel.
    Sinogram dc = make_sinogram(720, 720, 300, 1);
    for (double& v : dc.data) v = 1.0;
    const Sinogram fd = ramp_filter(dc);
    const int c = fd.n_detectors / 2;
    for (int d = c - 5; d <= c + 5; ++d) CHECK(std::abs(fd.at(0, d)) < 1e-3);
  }

  TEST_CASE("fbp of a zero sinogram is air and respects image invariants") {
    const Sinogram s = make_sinogram(40, 40, 18, 20);
    const Image img = fbp(s);
    for (float p : img.pixels) CHECK(p == -1000.0f);
    const Image rec = fbp(radon(test::phantom_slice(64, 2), 90));
    for (int y = 0; y < rec.height; ++y)
      for (int x = 0; x < rec.width; ++x) {
        CHECK(rec.at(y, x) >= -1000.0f);
        CHECK(rec.at(y, x) <= 1000.0f);
        if (!rec.in_fov(y, x)) CHECK(rec.at(y, x) == -1000.0f);
      }
  }

  TEST_CASE("fbp is linear before clamping") {
    const Sinogram s = radon(test::phantom_slice(48, 4), 60);
    Sinogram s3 = s;
    for (double& v : s3.data) v *= 3.0;
    const auto a = fbp_attenuation(s);
    const auto b = fbp_attenuation(s3);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(3 * a[i]).epsilon(1e-9));
  }

  TEST_CASE("round trip error is small") {
    const Image img = test::phantom_slice(128, 1);
    const Image rec = fbp(radon(img, 360));
    CHECK(test::fov_mae(rec, img) < test::kRoundTripBoundHu);
  }

  TEST_CASE("parameter errors") {
    const Image img(32, 32, 14);
    CHECK_THROWS_AS(radon(img, 0), ParameterError);
    Image bad = img;
    bad.pixels[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(radon(bad, 4), DataError);
    Sinogram s = make_sinogram(32, 32, 14, 2);
    s.n_angles = 0;
    CHECK_THROWS_AS(fbp(s), ParameterError);
  }
}
