#include <doctest.h>

#include <cmath>

#include "pcbct/codec.hpp"
#include "pcbct/errors.hpp"
#include "test_util.hpp"

using namespace pcbct;

namespace {

CodecConfig small_config(int factor) {
  CodecConfig c;
  c.factor = factor;
  c.widths = {4, 8};
  c.codebook_size = 16;
  c.seed = 3;
  return c;
}

LatentGrid random_latent(int h, int w, Rng& rng, double lo = -2, double hi = 2) {
  LatentGrid g{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : g.values) v = u(rng);
  return g;
}

double brute_nearest(double v, const std::vector<double>& book) {
  double best = book[0];
  for (double e : book)
    if (std::abs(v - e) < std::abs(v - best)) best = e;
  return best;
}

}  // namespace

TEST_SUITE("codec") {
  TEST_CASE("latent shape is H/f x W/f") {
    const Image img = test::phantom_slice(32, 1);
    for (int f : {2, 4, 8}) {
      const CodecModel m(small_config(f));
      const LatentGrid z = m.encode(img);
      CHECK(z.height == 32 / f);
      CHECK(z.width == 32 / f);
      CHECK(z.values.size() == static_cast<std::size_t>(32 / f) * (32 / f));
      CHECK_FALSE(z.quantized);
    }
    const CodecModel m(small_config(4));
    Image odd(30, 32, 14.0);
    CHECK_THROWS_AS(m.encode(odd), ParameterError);
  }

  TEST_CASE("encode and decode are deterministic and decode stays in range") {
    const CodecModel m(small_config(4));
    const Image img = test::phantom_slice(32, 2);
    CHECK(m.encode(img).values == m.encode(img).values);
    Rng rng = make_rng(1);
    const LatentGrid z = random_latent(8, 8, rng, -50, 50);
    const Image a = m.decode(z, img.fov_radius);
    const Image b = m.decode(z, img.fov_radius);
    CHECK(a.pixels == b.pixels);
    CHECK(a.height == 32);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        CHECK(a.at(y, x) >= -1000.0f);
        CHECK(a.at(y, x) <= 1000.0f);
        if (!a.in_fov(y, x)) CHECK(a.at(y, x) == -1000.0f);
      }
    LatentGrid normalized = z;
    normalized.normalized = true;
    CHECK_THROWS_AS(m.decode(normalized, 14.0), ParameterError);
  }

  TEST_CASE("quantize matches a brute-force scan") {
    CHECK_THROWS_AS(quantize(LatentGrid{1, 1, {0.0}}, std::vector<double>{}), StateError);
    const std::vector<double> pm{-1.0, 1.0};
    CHECK(quantize(LatentGrid{1, 1, {0.2}}, pm).values[0] == 1.0);
    // Tie goes to the lowest index.
    CHECK(quantize(LatentGrid{1, 1, {0.0}}, pm).values[0] == -1.0);
    CHECK(quantize(LatentGrid{1, 1, {0.0}}, std::vector<double>{1.0, -1.0}).values[0] == 1.0);

    Rng rng = make_rng(2);
    std::vector<double> book(37);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& e : book) e = n(rng);
    for (int trial = 0; trial < 20; ++trial) {
      const LatentGrid z = random_latent(5, 7, rng, -3, 3);
      const LatentGrid q = quantize(z, book);
      CHECK(q.quantized);
      for (std::size_t i = 0; i < z.values.size(); ++i) CHECK(q.values[i] == brute_nearest(z.values[i], book));
      CHECK(quantize(q, book).values == q.values);
      for (double e : book) CHECK(quantize(LatentGrid{1, 1, {e}}, book).values[0] == e);
    }
  }

  TEST_CASE("normalize is affine and exactly invertible") {
    const std::vector<double> book{0.5, -2.0, 3.0, 1.0};
    CHECK(normalize_latent(LatentGrid{1, 1, {-2.0}}, book).values[0] == doctest::Approx(-1.0));
    CHECK(normalize_latent(LatentGrid{1, 1, {3.0}}, book).values[0] == doctest::Approx(1.0));
    CHECK(normalize_latent(LatentGrid{1, 1, {0.5}}, book).values[0] == doctest::Approx(0.0));
    Rng rng = make_rng(3);
    const LatentGrid z = random_latent(6, 6, rng, -5, 5);
    const LatentGrid n = normalize_latent(z, book);
    CHECK(n.normalized);
    const LatentGrid back = denormalize_latent(n, book);
    CHECK_FALSE(back.normalized);
    for (std::size_t i = 0; i < z.values.size(); ++i) CHECK(std::abs(back.values[i] - z.values[i]) < 1e-9);
    CHECK_THROWS_AS(normalize_latent(z, std::vector<double>{1.0, 1.0}), StateError);
    CHECK_THROWS_AS(denormalize_latent(z, std::vector<double>{2.0}), StateError);
  }

  TEST_CASE("checkpoint round trip preserves outputs") {
    CodecModel m(small_config(2));
    m.parameters().round_to_float();
    m.set_codebook({-0.5, 0.25, 0.75, 1.5});
    const CodecModel r = CodecModel::from_checkpoint(m.to_checkpoint());
    CHECK(r.factor() == 2);
    CHECK(r.codebook() == std::vector<double>{-0.5, 0.25, 0.75, 1.5});
    const Image img = test::phantom_slice(32, 4);
    CHECK(r.encode(img).values == m.encode(img).values);
    CHECK(r.reconstruct(img).pixels == m.reconstruct(img).pixels);

    nn::Checkpoint wrong = m.to_checkpoint();
    wrong.kind = "cldm";
    CHECK_THROWS_AS(CodecModel::from_checkpoint(wrong), StateError);
  }

  TEST_CASE("config validation") {
    CodecConfig c = small_config(3);
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = small_config(4);
    c.codebook_size = 1;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    CHECK(small_config(8).levels() == 3);
  }

  TEST_CASE("short training lowers the loss and keeps the codebook valid") {
    std::vector<Image> data;
    for (std::uint64_t s = 1; s <= 10; ++s) data.push_back(test::phantom_slice(32, s));
    CodecConfig c = small_config(2);
    c.max_epochs = 15;
    c.learning_rate = 2e-3;
    const CodecModel m = train_codec(data, 2, c);
    const CodecTrainingLog& log = m.log();
    REQUIRE(log.train_loss.size() >= 2);
    CHECK(log.train_loss.back() <= log.train_loss.front());
    CHECK(m.codebook_min() < m.codebook_max());
    for (double e : m.codebook()) CHECK(std::isfinite(e));
    CHECK(log.best_epoch >= 1);

    const CodecModel again = train_codec(data, 2, c);
    CHECK(again.codebook() == m.codebook());
    CHECK(again.log().train_loss == log.train_loss);

    CHECK_THROWS_AS(train_codec(std::span<const Image>{}, 2, c), DataError);
  }
}
