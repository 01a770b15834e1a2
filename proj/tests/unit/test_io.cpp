#include <doctest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include "pcbct/config.hpp"
#include "pcbct/errors.hpp"
#include "pcbct/hashing.hpp"
#include "pcbct/nn/checkpoint.hpp"
#include "pcbct/png.hpp"
#include "pcbct/volume_io.hpp"
#include "test_util.hpp"

using namespace pcbct;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("volume round trip is bit exact") {
    TempDir tmp("pcbct_io_volume");
    Volume v = test::phantom_volume(32, 3, 4);
    v.spacing = {2.5, 0.75, 0.75};
    const fs::path p = tmp.path / "a.vol";
    write_volume(v, p);
    const Volume r = read_volume(p);
    CHECK(r.n_slices() == 3);
    CHECK(r.spacing.dz == 2.5);
    CHECK(r.fov_radius_px == v.fov_radius_px);
    for (int k = 0; k < 3; ++k) CHECK(r.slices[k].pixels == v.slices[k].pixels);
    write_volume(r, tmp.path / "b.vol");
    CHECK(slurp(p) == slurp(tmp.path / "b.vol"));
    CHECK(encode_volume(v) == slurp(p));
  }

  TEST_CASE("volume corruption is detected") {
    TempDir tmp("pcbct_io_corrupt");
    const Volume v = test::phantom_volume(32, 2, 1);
    const std::vector<char> bytes = encode_volume(v);

    std::vector<char> truncated(bytes.begin(), bytes.end() - 9);
    spit(tmp.path / "t.vol", truncated);
    CHECK_THROWS_AS(read_volume(tmp.path / "t.vol"), IoError);

    std::vector<char> longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_volume(longer), IoError);

    std::vector<char> garbage{'n', 'o', 't', '\n'};
    CHECK_THROWS_AS(decode_volume(garbage), IoError);

    // Header declaring a different slice count no longer matches the payload.
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"n_slices\":2");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 12, "\"n_slices\":3");
    CHECK_THROWS_AS(decode_volume(std::vector<char>(text.begin(), text.end())), IoError);

    // Pixel outside the declared HU range.
    std::vector<char> hot = bytes;
    const float big = 5000.0f;
    std::memcpy(hot.data() + hot.size() - 4, &big, 4);
    CHECK_THROWS_AS(decode_volume(hot), DataError);

    CHECK_THROWS_AS(read_volume(tmp.path / "missing.vol"), IoError);
    Volume bad = v;
    bad.slices[0].pixels[0] = 2000.0f;
    CHECK_THROWS_AS(write_volume(bad, tmp.path / "bad.vol"), DataError);
  }

  TEST_CASE("checkpoint files") {
    TempDir tmp("pcbct_io_ckpt");
    nn::Checkpoint c;
    c.kind = "codec";
    c.meta_json = R"({"factor":2})";
    c.tensors.push_back({"w", {1, 2, 1, 1}, {0.5f, -1.25f}});
    c.tensors.push_back({"codebook", {1, 3, 1, 1}, {-1.0f, 0.0f, 1.0f}});
    const fs::path p = tmp.path / "m.ckpt";
    nn::write_checkpoint(p, c);
    const nn::Checkpoint r = nn::read_checkpoint(p);
    CHECK(r.kind == "codec");
    CHECK(r.tensor("codebook").values == c.tensors[1].values);
    CHECK(r.tensor("w").shape == nn::Shape{1, 2, 1, 1});
    CHECK(nn::encode_checkpoint(r) == slurp(p));

    std::vector<char> bytes = slurp(p);
    bytes.resize(bytes.size() - 4);
    spit(tmp.path / "short.ckpt", bytes);
    CHECK_THROWS_AS(nn::read_checkpoint(tmp.path / "short.ckpt"), IoError);
    spit(tmp.path / "junk.ckpt", {'{', 'x', '\n'});
    CHECK_THROWS_AS(nn::read_checkpoint(tmp.path / "junk.ckpt"), IoError);
  }

  TEST_CASE("png window mapping") {
    CHECK(window_byte(-1000, kFullWindow) == 0);
    CHECK(window_byte(1000, kFullWindow) == 255);
    CHECK(window_byte(-300, kSoftTissueWindow) == 0);
    CHECK(window_byte(150, kSoftTissueWindow) == 255);
    CHECK(window_byte(-75, kSoftTissueWindow) == 128);
    CHECK(window_byte(5000, kSoftTissueWindow) == 255);
    CHECK(window_byte(-5000, kSoftTissueWindow) == 0);
    CHECK_THROWS_AS(window_byte(0, Window{1, 1}), ParameterError);

    const Image img = test::phantom_slice(32, 2);
    const auto a = encode_png(32, 32, 1, window_image(img, kSoftTissueWindow));
    const auto b = encode_png(32, 32, 1, window_image(img, kSoftTissueWindow));
    CHECK(a == b);
    REQUIRE(a.size() > 8);
    CHECK(a[1] == 'P');
    CHECK(a[2] == 'N');
    CHECK(a[3] == 'G');

    Image diff(4, 4, 10.0, 0.0f);
    diff.at(0, 0) = 1000.0f;
    diff.at(0, 1) = -1000.0f;
    const auto rgb = signed_colormap(diff);
    CHECK(rgb.size() == 48);
    CHECK(rgb[0] == 255);  // red
    CHECK(rgb[2] == 0);
    CHECK(rgb[3] == 0);  // blue
    CHECK(rgb[5] == 255);
    CHECK(rgb[6] == 255);  // zero is white
    CHECK(rgb[7] == 255);
    CHECK(rgb[8] == 255);

    TempDir tmp("pcbct_io_png");
    export_png(img, kFullWindow, tmp.path / "x.png");
    CHECK(fs::file_size(tmp.path / "x.png") > 0);
  }

  TEST_CASE("sha256") {
    CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    TempDir tmp("pcbct_io_sha");
    std::ofstream(tmp.path / "f") << "abc";
    CHECK(sha256_file(tmp.path / "f") == sha256_hex(std::string_view("abc")));
    CHECK_THROWS_AS(sha256_file(tmp.path / "nope"), IoError);
  }

  TEST_CASE("config round trip and validation") {
    ExperimentConfig c = desk_config();
    c.seed = 77;
    c.degradation.switches.mask2 = false;
    c.codec_factors = {2, 8};
    c.selection_metric = SelectionMetric::ssim;
    c.evaluation.rois.push_back({"extra", 10, 12, 4});
    const std::string text = to_json(c);
    const ExperimentConfig r = config_from_json(text);
    CHECK(to_json(r) == text);
    CHECK(r.seed == 77);
    CHECK_FALSE(r.degradation.switches.mask2);
    CHECK(r.selection_metric == SelectionMetric::ssim);
    CHECK(r.diffusion.batch_size == 2);

    TempDir tmp("pcbct_io_cfg");
    save_config(c, tmp.path / "c.json");
    CHECK(to_json(load_config(tmp.path / "c.json")) == text);
    CHECK_THROWS_AS(load_config(tmp.path / "none.json"), IoError);
    CHECK_THROWS_AS(config_from_json("{not json"), ParameterError);

    ExperimentConfig bad = c;
    bad.diffusion_factor = 4;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = c;
    bad.codec_factors = {3};
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    CHECK_THROWS_AS(selection_metric_from_string("psnr"), ParameterError);

    const SplitCounts s = split_counts(47);
    CHECK(s.train == 41);
    CHECK(s.validation == 1);
    CHECK(s.test == 5);
    const SplitCounts full = split_counts(75);
    CHECK(full.train == 66);
    CHECK(full.validation == 1);
    CHECK(full.test == 8);
    CHECK_THROWS_AS(split_counts(2), ParameterError);
  }
}
