#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcbct/errors.hpp"
#include "pcbct/pipeline.hpp"
#include "pcbct/volume_io.hpp"

using namespace pcbct;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ExperimentConfig tiny_pipeline(const fs::path& out) {
  ExperimentConfig c;
  c.name = "tiny";
  c.seed = 5;
  c.phantom.height = c.phantom.width = 32;
  c.phantom.n_slices = 2;
  c.n_volumes = 4;
  c.degradation.n_angles = 90;
  c.codec_factors = {2, 4};
  c.codec.widths = {4, 8};
  c.codec.codebook_size = 16;
  c.codec.max_epochs = 2;
  c.diffusion.widths = {4, 8};
  c.diffusion.embedding_dim = 8;
  c.diffusion.steps = 5;
  c.diffusion.epochs = 2;
  c.noise_candidates = 2;
  c.output_dir = out.string();
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::map<std::string, std::string> hashes(const json& manifest) {
  std::map<std::string, std::string> out;
  for (const auto& a : manifest.at("artifacts")) out[a.at("path")] = a.at("sha256");
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PCBCT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("split and seeds") {
    ExperimentConfig c = tiny_pipeline("x");
    c.n_volumes = 47;
    const Split s = make_split(c);
    CHECK(s.train.size() == 41);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 5);
    std::vector<int> all = s.train;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 47; ++i) CHECK(all[i] == i);
    CHECK(make_split(c).test == s.test);
    CHECK(volume_spec(c, 1).seed != volume_spec(c, 2).seed);
    CHECK(degradation_seed(c, 1) != volume_spec(c, 1).seed);
  }

  TEST_CASE("lock file gives exclusive ownership") {
    const fs::path dir = fs::temp_directory_path() / "pcbct_lock_test";
    fs::remove_all(dir);
    {
      DirectoryLock lock(dir);
      CHECK(fs::exists(dir / ".lock"));
      CHECK_THROWS_AS(DirectoryLock{dir}, StateError);
    }
    CHECK_FALSE(fs::exists(dir / ".lock"));
    CHECK_NOTHROW(DirectoryLock{dir});
    fs::remove_all(dir);
  }

  TEST_CASE("pipeline is deterministic and its manifest is complete") {
    const fs::path root = fs::temp_directory_path() / "pcbct_pipeline_test";
    fs::remove_all(root);
    // Identical configs under two output roots.
    setenv("PCBCT_OUTPUT_ROOT", (root / "a").c_str(), 1);
    const PipelineResult a = run_pipeline(tiny_pipeline("runs"));
    setenv("PCBCT_OUTPUT_ROOT", (root / "b").c_str(), 1);
    const PipelineResult b = run_pipeline(tiny_pipeline("runs"));
    unsetenv("PCBCT_OUTPUT_ROOT");
    CHECK(a.dir == root / "a" / "runs" / "tiny");
    const json ma = read_json(a.manifest), mb = read_json(b.manifest);
    CHECK(ma.at("status") == "complete");
    const auto ha = hashes(ma), hb = hashes(mb);
    CHECK(ha == hb);
    CHECK(ha.count("models/codec_f2.ckpt") == 1);
    CHECK(ha.count("models/codec_f4.ckpt") == 1);
    CHECK(ma.at("codecs").at("2").at("latent_height") == 16);
    CHECK(ma.at("codecs").at("4").at("latent_height") == 8);
    // Every file in the directory except the manifest itself is listed.
    for (const auto& e : fs::recursive_directory_iterator(a.dir)) {
      if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
      CHECK_MESSAGE(ha.count(fs::relative(e.path(), a.dir).generic_string()) == 1, e.path().string());
    }
    CHECK(a.noise_seed == b.noise_seed);
    fs::remove_all(root);
  }

  TEST_CASE("a failing stage leaves a partial manifest") {
    const fs::path root = fs::temp_directory_path() / "pcbct_pipeline_fail";
    fs::remove_all(root);
    const ExperimentConfig c = tiny_pipeline(root);
    // A directory where the first checkpoint should go makes the codec stage fail.
    fs::create_directories(root / "tiny" / "models" / "codec_f2.ckpt");
    bool threw = false;
    try {
      run_pipeline(c);
    } catch (const Error& e) {
      threw = true;
      CHECK(std::string(e.what()).find("codec") != std::string::npos);
    }
    CHECK(threw);
    const json m = read_json(root / "tiny" / "manifest.json");
    CHECK(m.at("status") == "failed");
    CHECK(m.at("failed_stage") == "codec");
    CHECK(hashes(m).size() > 0);
    CHECK_FALSE(fs::exists(root / "tiny" / ".lock"));
    fs::remove_all(root);
  }

  TEST_CASE("ablation variants change the pseudo-CBCT data") {
    const fs::path root = fs::temp_directory_path() / "pcbct_ablation_test";
    fs::remove_all(root);
    const AblationResult r = run_ablation(tiny_pipeline(root));
    REQUIRE(r.variants.size() == 6);
    CHECK(r.variants[0].name == "proposed");
    CHECK(r.variants[0].mae_vs_proposed == 0.0);
    for (std::size_t i = 1; i < 6; ++i) CHECK_MESSAGE(r.variants[i].mae_vs_proposed > 0.0, r.variants[i].name);
    CHECK(fs::exists(r.dir / "ablation.json"));
    fs::remove_all(root);
  }

  TEST_CASE("cli exit codes") {
    const fs::path tmp = fs::temp_directory_path() / "pcbct_cli_test";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const std::string vol = (tmp / "ct.vol").string();
    CHECK(run_cli("phantom --size 32 --slices 2 --seed 3 --out " + vol) == 0);
    CHECK(read_volume(vol).n_slices() == 2);
    CHECK(run_cli("simulate --in " + vol + " --out " + (tmp / "cb.vol").string() + " --seed 1") == 0);
    CHECK(run_cli("evaluate --syn " + (tmp / "cb.vol").string() + " --cbct " + (tmp / "cb.vol").string() +
                  " --ref " + vol + " --out " + (tmp / "rep").string()) == 0);
    CHECK(fs::exists(tmp / "rep" / "report.json"));
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("phantom --size 0 --out " + vol) == 2);
    CHECK(run_cli("simulate --in " + (tmp / "missing.vol").string() + " --out x.vol") == 5);
    {
      std::ofstream(tmp / "bad.vol") << "{\"magic\":\"pcbct-volume\"}\n";
    }
    CHECK(run_cli("simulate --in " + (tmp / "bad.vol").string() + " --out x.vol") == 5);
    CHECK(run_cli("simulate --in " + vol + " --out " + (tmp / "y.vol").string() + " --fixed --c0 0.5") == 2);
    fs::remove_all(tmp);
  }
}
