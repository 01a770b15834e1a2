// pcbct: command-line harness for the pseudo-CBCT / latent-diffusion pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "pcbct/codec.hpp"
#include "pcbct/config.hpp"
#include "pcbct/degrade.hpp"
#include "pcbct/diffusion.hpp"
#include "pcbct/errors.hpp"
#include "pcbct/metrics.hpp"
#include "pcbct/phantom.hpp"
#include "pcbct/pipeline.hpp"
#include "pcbct/png.hpp"
#include "pcbct/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_error(pcbct::ErrorCode code, const std::string& message) {
  const json j = {{"error", {{"code", pcbct::to_string(code)}, {"exit_code", static_cast<int>(code)}, {"message", message}}}};
  std::cerr << j.dump() << '\n';
}

std::vector<fs::path> volume_files(const fs::path& dir, const std::string& prefix = "") {
  if (!fs::is_directory(dir)) throw pcbct::IoError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const fs::path& p = e.path();
    if (p.extension() == ".vol" && p.filename().string().rfind(prefix, 0) == 0) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw pcbct::DataError("no " + prefix + "*.vol files in " + dir.string());
  return out;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw pcbct::IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudo-CBCT simulation and conditional latent diffusion harness"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic pelvic phantom volume");
  int ph_size = 128, ph_width = 0, ph_slices = 8;
  std::uint64_t ph_seed = 1;
  std::string ph_out, ph_png;
  phantom->add_option("--size", ph_size, "Height (and width unless --width) in pixels");
  phantom->add_option("--width", ph_width, "Width in pixels");
  phantom->add_option("--slices", ph_slices, "Number of slices");
  phantom->add_option("--seed", ph_seed, "Phantom seed");
  phantom->add_option("--out", ph_out, "Output volume file")->required();
  phantom->add_option("--png", ph_png, "Directory for per-slice PNG previews");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Degrade a CT volume into a pseudo-CBCT volume");
  std::string sim_in, sim_out;
  std::uint64_t sim_seed = 0;
  pcbct::DegradationParams sim_params;
  bool sim_fixed = false, sim_shared = false;
  bool no_warp = false, no_contrast = false, no_mask1 = false, no_mask2 = false, no_mask3 = false;
  simulate->add_option("--in", sim_in, "Input CT volume")->required();
  simulate->add_option("--out", sim_out, "Output pseudo-CBCT volume")->required();
  simulate->add_option("--seed", sim_seed, "Degradation seed");
  simulate->add_flag("--fixed", sim_fixed, "Use the given parameters instead of sampling the grid");
  simulate->add_flag("--shared-params", sim_shared, "One parameter draw for the whole volume");
  simulate->add_option("--sigma", sim_params.sigma, "Displacement noise std (sinogram pixels)");
  simulate->add_option("--c0", sim_params.c0, "Sinogram contrast exponent");
  simulate->add_option("--r1", sim_params.r1, "Gamma for the whole field of view");
  simulate->add_option("--r2", sim_params.r2, "Gamma outside the central circle");
  simulate->add_option("--angles", sim_params.n_angles, "Projection angles");
  simulate->add_flag("--no-warp", no_warp, "Skip the sinogram warp");
  simulate->add_flag("--no-contrast", no_contrast, "Skip the sinogram contrast change");
  simulate->add_flag("--no-mask1", no_mask1, "Skip the field-of-view gamma");
  simulate->add_flag("--no-mask2", no_mask2, "Skip the outer-region gamma");
  simulate->add_flag("--no-mask3", no_mask3, "Skip the edge shift");

  // train-codec
  auto* train_codec = app.add_subcommand("train-codec", "Train the quantized autoencoder");
  std::string tc_data, tc_out;
  pcbct::CodecConfig tc_cfg;
  tc_cfg.max_epochs = 200;
  train_codec->add_option("--data", tc_data, "Directory of .vol files")->required();
  train_codec->add_option("--factor", tc_cfg.factor, "Compression factor")->check(CLI::IsMember({2, 4, 8}));
  train_codec->add_option("--out", tc_out, "Output checkpoint")->required();
  train_codec->add_option("--epochs", tc_cfg.max_epochs, "Maximum epochs");
  train_codec->add_option("--patience", tc_cfg.patience, "Early-stopping patience");
  train_codec->add_option("--widths", tc_cfg.widths, "Channel widths per level");
  train_codec->add_option("--batch", tc_cfg.batch_size, "Batch size");
  train_codec->add_option("--seed", tc_cfg.seed, "Initialization and shuffling seed");

  // train-cldm
  auto* train_cldm = app.add_subcommand("train-cldm", "Train the conditional latent diffusion model");
  std::string tl_pairs, tl_codec, tl_out;
  pcbct::DenoiserConfig tl_cfg;
  train_cldm->add_option("--pairs", tl_pairs, "Directory with ct_*.vol and cbct_*.vol pairs")->required();
  train_cldm->add_option("--codec", tl_codec, "Codec checkpoint")->required();
  train_cldm->add_option("--epochs", tl_cfg.epochs, "Epochs");
  train_cldm->add_option("--steps", tl_cfg.steps, "Diffusion steps T");
  train_cldm->add_option("--widths", tl_cfg.widths, "U-net channel widths");
  train_cldm->add_option("--batch", tl_cfg.batch_size, "Batch size");
  train_cldm->add_option("--lr", tl_cfg.learning_rate, "Learning rate");
  train_cldm->add_option("--seed", tl_cfg.seed, "Seed");
  train_cldm->add_option("--out", tl_out, "Output checkpoint")->required();

  // select-noise
  auto* select = app.add_subcommand("select-noise", "Pick the initial-noise seed with the best validation score");
  std::string sn_cldm, sn_codec, sn_metric = "mae";
  std::vector<std::string> sn_cbct, sn_ct;
  int sn_candidates = 100;
  std::uint64_t sn_seed = 0;
  select->add_option("--cldm", sn_cldm, "Diffusion checkpoint")->required();
  select->add_option("--codec", sn_codec, "Codec checkpoint")->required();
  select->add_option("--cbct", sn_cbct, "Validation pseudo-CBCT volumes")->required();
  select->add_option("--ct", sn_ct, "Matching reference CT volumes")->required();
  select->add_option("--candidates", sn_candidates, "Number of candidate seeds");
  select->add_option("--seed", sn_seed, "First candidate seed");
  select->add_option("--metric", sn_metric, "mae or ssim")->check(CLI::IsMember({"mae", "ssim"}));

  // generate
  auto* generate = app.add_subcommand("generate", "Translate a CBCT volume into a SynCT volume");
  std::string gen_cldm, gen_codec, gen_in, gen_out;
  std::uint64_t gen_seed = 0;
  bool gen_per_slice = false;
  generate->add_option("--cldm", gen_cldm, "Diffusion checkpoint")->required();
  generate->add_option("--codec", gen_codec, "Codec checkpoint")->required();
  generate->add_option("--in", gen_in, "Input CBCT volume")->required();
  generate->add_option("--noise-seed,--seed", gen_seed, "Initial-noise seed");
  generate->add_flag("--per-slice-noise", gen_per_slice, "Draw a separate initial noise per slice");
  generate->add_option("--out", gen_out, "Output volume")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Structural-change and CT-value report");
  std::string ev_syn, ev_cbct, ev_ref, ev_out;
  double ev_threshold = 600.0;
  std::uint64_t ev_seed = 0;
  evaluate->add_option("--syn", ev_syn, "SynCT volume")->required();
  evaluate->add_option("--cbct", ev_cbct, "CBCT volume")->required();
  evaluate->add_option("--ref", ev_ref, "Reference CT volume")->required();
  evaluate->add_option("--threshold", ev_threshold, "Structural-change threshold (HU)");
  evaluate->add_option("--seed", ev_seed, "Unused; accepted for interface uniformity");
  evaluate->add_option("--out", ev_out, "Report directory")->required();

  // run / ablation / init-config
  auto* run = app.add_subcommand("run", "Run the full pipeline from a config file");
  std::string run_config, run_output;
  std::uint64_t run_seed = 0;
  run->add_option("--config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--output", run_output, "Override output directory");
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Override master seed");

  auto* ablation = app.add_subcommand("ablation", "Generate pseudo-CBCT data for the proposed and five w/o variants");
  std::string ab_config, ab_output;
  int ab_volumes = 0;
  std::uint64_t ab_seed = 0;
  ablation->add_option("--config", ab_config, "Experiment config (JSON)")->required();
  ablation->add_option("--output", ab_output, "Override output directory");
  ablation->add_option("--volumes", ab_volumes, "Number of volumes (0 = all)");
  auto* ab_seed_opt = ablation->add_option("--seed", ab_seed, "Override master seed");

  auto* init = app.add_subcommand("init-config", "Write a config file with defaults");
  std::string init_out;
  bool init_desk = false;
  std::uint64_t init_seed = 0;
  init->add_option("--out", init_out, "Config path")->required();
  init->add_flag("--desk", init_desk, "Small single-core settings");
  init->add_option("--seed", init_seed, "Master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(pcbct::ErrorCode::kParameter, e.what());
    return static_cast<int>(pcbct::ErrorCode::kParameter);
  }

  try {
    if (*phantom) {
      pcbct::PhantomSpec spec;
      spec.height = ph_size;
      spec.width = ph_width > 0 ? ph_width : ph_size;
      spec.n_slices = ph_slices;
      spec.seed = ph_seed;
      const pcbct::Volume v = pcbct::generate_phantom(spec);
      pcbct::write_volume(v, ph_out);
      if (!ph_png.empty())
        for (int k = 0; k < v.n_slices(); ++k)
          pcbct::export_png(v.slices[k], pcbct::kFullWindow, fs::path(ph_png) / ("slice_" + std::to_string(k) + ".png"));
    } else if (*simulate) {
      const pcbct::Volume ct = pcbct::read_volume(sim_in);
      sim_params.switches = {!no_warp, !no_contrast, !no_mask1, !no_mask2, !no_mask3};
      pcbct::Volume out;
      std::vector<pcbct::DegradationParams> used;
      if (sim_fixed) {
        for (int k = 0; k < ct.n_slices(); ++k) {
          pcbct::DegradationParams p = sim_params;
          p.seed = pcbct::derive_seed(sim_seed, static_cast<std::uint64_t>(k));
          out.slices.push_back(pcbct::simulate_cbct(ct.slices[k], p));
          used.push_back(p);
        }
        out.spacing = ct.spacing;
        out.fov_radius_px = ct.fov_radius_px;
      } else {
        auto sim = pcbct::simulate_volume(ct, sim_params, sim_seed, !sim_shared);
        out = std::move(sim.volume);
        used = std::move(sim.params);
      }
      pcbct::write_volume(out, sim_out);
      json sidecar = json::array();
      for (const auto& p : used)
        sidecar.push_back({{"sigma", p.sigma}, {"c0", p.c0}, {"r1", p.r1}, {"r2", p.r2}, {"seed", p.seed},
                           {"switches", {{"warp", p.switches.warp}, {"contrast", p.switches.contrast},
                                         {"mask1", p.switches.mask1}, {"mask2", p.switches.mask2},
                                         {"mask3", p.switches.mask3}}}});
      write_json(fs::path(sim_out).replace_extension(".json"), sidecar);
    } else if (*train_codec) {
      std::vector<pcbct::Image> images;
      for (const fs::path& p : volume_files(tc_data))
        for (auto& s : pcbct::read_volume(p).slices) images.push_back(std::move(s));
      const pcbct::CodecModel model =
          pcbct::train_codec(images, tc_cfg.factor, tc_cfg, [](int epoch, double tl, double vl) {
            std::cerr << "epoch " << epoch << " train " << tl << " val " << vl << '\n';
          });
      pcbct::nn::write_checkpoint(tc_out, model.to_checkpoint());
    } else if (*train_cldm) {
      const auto codec = pcbct::CodecModel::from_checkpoint(pcbct::nn::read_checkpoint(tl_codec));
      std::vector<pcbct::Volume> ct, cbct;
      for (const fs::path& p : volume_files(tl_pairs, "ct_")) {
        const fs::path partner = p.parent_path() / ("cb" + p.filename().string());
        if (!fs::exists(partner)) throw pcbct::DataError("missing pair " + partner.string());
        ct.push_back(pcbct::read_volume(p));
        cbct.push_back(pcbct::read_volume(partner));
      }
      const auto schedule = pcbct::build_schedule(tl_cfg.steps, tl_cfg.delta, tl_cfg.tau);
      const auto data = pcbct::encode_pairs(codec, ct, cbct);
      const fs::path out(tl_out);
      const auto model = pcbct::train_denoiser(
          data, nullptr, schedule, tl_cfg, [&](int epoch, double loss, double, const pcbct::DenoiserModel& m) {
            std::cerr << "epoch " << epoch << " loss " << loss << '\n';
            pcbct::nn::write_checkpoint(fs::path(out).replace_extension(".last.ckpt"), m.to_checkpoint());
          });
      pcbct::nn::write_checkpoint(out, model.to_checkpoint());
    } else if (*select) {
      const auto model = pcbct::DenoiserModel::from_checkpoint(pcbct::nn::read_checkpoint(sn_cldm));
      const auto codec = pcbct::CodecModel::from_checkpoint(pcbct::nn::read_checkpoint(sn_codec));
      std::vector<pcbct::Volume> cbct, ct;
      for (const auto& p : sn_cbct) cbct.push_back(pcbct::read_volume(p));
      for (const auto& p : sn_ct) ct.push_back(pcbct::read_volume(p));
      const auto schedule = pcbct::build_schedule(model.config().steps, model.config().delta, model.config().tau);
      const auto seeds = pcbct::candidate_seeds(sn_seed, sn_candidates);
      const auto sel = pcbct::select_initial_noise(model, codec, schedule, cbct, ct, seeds,
                                                   pcbct::selection_metric_from_string(sn_metric));
      std::cout << json{{"best_seed", sel.best_seed}, {"metric", sn_metric}, {"seeds", sel.seeds},
                        {"scores", sel.scores}}.dump(2)
                << '\n';
    } else if (*generate) {
      const auto model = pcbct::DenoiserModel::from_checkpoint(pcbct::nn::read_checkpoint(gen_cldm));
      const auto codec = pcbct::CodecModel::from_checkpoint(pcbct::nn::read_checkpoint(gen_codec));
      const auto schedule = pcbct::build_schedule(model.config().steps, model.config().delta, model.config().tau);
      const auto syn = pcbct::generate_volume(model, codec, pcbct::read_volume(gen_in), gen_seed, schedule,
                                              gen_per_slice ? pcbct::NoiseMode::per_slice : pcbct::NoiseMode::shared);
      pcbct::write_volume(syn, gen_out);
    } else if (*evaluate) {
      pcbct::EvaluationConfig cfg;
      cfg.threshold_hu = ev_threshold;
      const auto report =
          pcbct::evaluate_run(pcbct::read_volume(ev_syn), pcbct::read_volume(ev_cbct), pcbct::read_volume(ev_ref), cfg);
      pcbct::write_run_report(report, ev_out);
    } else if (*run) {
      auto cfg = pcbct::load_config(run_config);
      if (!run_output.empty()) cfg.output_dir = run_output;
      if (*run_seed_opt) cfg.seed = run_seed;
      const auto result = pcbct::run_pipeline(cfg, log_line);
      std::cout << result.manifest.string() << '\n';
    } else if (*ablation) {
      auto cfg = pcbct::load_config(ab_config);
      if (!ab_output.empty()) cfg.output_dir = ab_output;
      if (*ab_seed_opt) cfg.seed = ab_seed;
      const auto result = pcbct::run_ablation(cfg, ab_volumes, log_line);
      for (const auto& v : result.variants) std::cout << v.name << '\t' << v.mae_vs_proposed << '\n';
    } else if (*init) {
      auto cfg = init_desk ? pcbct::desk_config() : pcbct::ExperimentConfig{};
      cfg.seed = init_seed;
      pcbct::save_config(cfg, init_out);
    }
  } catch (const pcbct::Error& e) {
    print_error(e.code(), e.what());
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    print_error(pcbct::ErrorCode::kIo, e.what());
    return static_cast<int>(pcbct::ErrorCode::kIo);
  } catch (const std::exception& e) {
    print_error(pcbct::ErrorCode::kState, e.what());
    return static_cast<int>(pcbct::ErrorCode::kState);
  }
  return 0;
}
