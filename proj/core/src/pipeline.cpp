#include "pcbct/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "pcbct/errors.hpp"
#include "pcbct/hashing.hpp"
#include "pcbct/volume_io.hpp"

namespace pcbct {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_output_dir(const std::string& output_dir) {
  fs::path p(output_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("PCBCT_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

PhantomSpec volume_spec(const ExperimentConfig& config, int index) {
  PhantomSpec spec = config.phantom;
  spec.seed = derive_seed(derive_seed(config.seed, 101), static_cast<std::uint64_t>(index));
  return spec;
}

std::uint64_t degradation_seed(const ExperimentConfig& config, int index) {
  return derive_seed(derive_seed(config.seed, 102), static_cast<std::uint64_t>(index));
}

Split make_split(const ExperimentConfig& config) {
  const SplitCounts counts = split_counts(config.n_volumes);
  std::vector<int> order(config.n_volumes);
  for (int i = 0; i < config.n_volumes; ++i) order[i] = i;
  Rng rng = make_rng(config.seed, 103);
  std::shuffle(order.begin(), order.end(), rng);
  Split s;
  s.train.assign(order.begin(), order.begin() + counts.train);
  s.validation.assign(order.begin() + counts.train, order.begin() + counts.train + counts.validation);
  s.test.assign(order.begin() + counts.train + counts.validation, order.end());
  for (auto* part : {&s.train, &s.validation, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw StateError("experiment directory " + dir.string() + " is locked by another process (" +
                           path_.string() + ")");
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

std::string indexed(const std::string& prefix, int i, const std::string& suffix) {
  std::ostringstream s;
  s << prefix << std::setw(3) << std::setfill('0') << i << suffix;
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text << '\n';
  if (!f) throw IoError("write failed for " + path.string());
}

[[noreturn]] void rethrow_in_stage(const Error& e, const std::string& stage) {
  const std::string msg = "stage '" + stage + "' failed: " + e.what();
  switch (e.code()) {
    case ErrorCode::kParameter: throw ParameterError(msg);
    case ErrorCode::kData: throw DataError(msg);
    case ErrorCode::kState: throw StateError(msg);
    case ErrorCode::kIo: throw IoError(msg);
  }
  throw StateError(msg);
}

json params_json(const DegradationParams& p) {
  return {{"sigma", p.sigma},
          {"c0", p.c0},
          {"r1", p.r1},
          {"r2", p.r2},
          {"seed", p.seed},
          {"switches",
           {{"warp", p.switches.warp},
            {"contrast", p.switches.contrast},
            {"mask1", p.switches.mask1},
            {"mask2", p.switches.mask2},
            {"mask3", p.switches.mask3}}}};
}

// Tracks artifacts and stage status; written on success and on failure.
class Manifest {
 public:
  Manifest(fs::path dir, const LogFn& log) : dir_(std::move(dir)), log_(log) {
    doc_["status"] = "running";
    doc_["stages"] = json::array();
    doc_["artifacts"] = json::array();
  }

  json& doc() { return doc_; }

  void record(const fs::path& file, const std::string& kind) {
    doc_["artifacts"].push_back(
        {{"path", fs::relative(file, dir_).generic_string()}, {"kind", kind}, {"sha256", sha256_file(file)}});
  }

  template <class F>
  void stage(const std::string& name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    if (log_) log_("[" + name + "] start");
    try {
      body();
    } catch (const Error& e) {
      fail(name, e.what());
      rethrow_in_stage(e, name);
    } catch (const std::exception& e) {
      fail(name, e.what());
      throw StateError("stage '" + name + "' failed: " + e.what());
    }
    doc_["stages"].push_back({{"name", name}, {"status", "ok"}});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log_) {
      std::ostringstream s;
      s << "[" << name << "] done in " << std::fixed << std::setprecision(1) << secs << " s";
      log_(s.str());
    }
  }

  fs::path write(const std::string& status) {
    doc_["status"] = status;
    const fs::path p = dir_ / "manifest.json";
    write_text(p, doc_.dump(2));
    return p;
  }

 private:
  void fail(const std::string& stage, const std::string& what) {
    doc_["stages"].push_back({{"name", stage}, {"status", "failed"}, {"error", what}});
    doc_["failed_stage"] = stage;
    try {
      write("failed");
    } catch (...) {
    }
  }

  fs::path dir_;
  const LogFn& log_;
  json doc_;
};

std::vector<Image> slices_of(const std::vector<Volume>& vols, const std::vector<int>& idx) {
  std::vector<Image> out;
  for (int i : idx)
    for (const Image& s : vols[i].slices) out.push_back(s);
  return out;
}

std::vector<Volume> pick(const std::vector<Volume>& vols, const std::vector<int>& idx) {
  std::vector<Volume> out;
  for (int i : idx) out.push_back(vols[i]);
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config, const LogFn& log) {
  config.validate();
  const fs::path dir = resolve_output_dir(config.output_dir) / config.name;
  DirectoryLock lock(dir);
  Manifest m(dir, log);
  json& doc = m.doc();
  doc["name"] = config.name;
  doc["seeds"] = {{"master", config.seed},
                  {"codec", config.codec.seed},
                  {"diffusion", config.diffusion.seed},
                  {"noise_seed_base", config.noise_seed_base}};
  doc["switches"] = params_json(config.degradation)["switches"];

  std::vector<Volume> ct(config.n_volumes), cbct(config.n_volumes);
  const Split split = make_split(config);
  std::map<int, CodecModel> codecs;
  std::optional<DenoiserModel> cldm;
  NoiseSchedule schedule;
  PipelineResult result{dir, {}, 0};

  m.stage("config", [&] {
    const fs::path p = dir / "config.json";
    save_config(config, p);
    doc["config_sha256"] = sha256_file(p);
    m.record(p, "config");
    json sj;
    for (const auto& [name, part] : {std::pair{"train", &split.train}, {"validation", &split.validation},
                                     {"test", &split.test}}) {
      json seeds = json::array();
      for (int i : *part) seeds.push_back(volume_spec(config, i).seed);
      sj[name] = {{"volumes", *part}, {"phantom_seeds", seeds}};
    }
    doc["split"] = sj;
  });

  m.stage("phantom", [&] {
    for (int i = 0; i < config.n_volumes; ++i) {
      ct[i] = generate_phantom(volume_spec(config, i));
      const fs::path p = dir / "volumes" / indexed("ct_", i, ".vol");
      write_volume(ct[i], p);
      m.record(p, "ct");
    }
  });

  m.stage("degrade", [&] {
    for (int i = 0; i < config.n_volumes; ++i) {
      SimulatedVolume sim = simulate_volume(ct[i], config.degradation, degradation_seed(config, i),
                                            config.per_slice_params);
      cbct[i] = std::move(sim.volume);
      const fs::path p = dir / "volumes" / indexed("cbct_", i, ".vol");
      write_volume(cbct[i], p);
      m.record(p, "pseudo_cbct");
      json params = json::array();
      for (const auto& sp : sim.params) params.push_back(params_json(sp));
      const fs::path q = dir / "volumes" / indexed("cbct_", i, ".json");
      write_text(q, params.dump(2));
      m.record(q, "degradation_params");
    }
  });

  m.stage("codec", [&] {
    std::vector<Image> train = slices_of(ct, split.train);
    for (const Image& s : slices_of(cbct, split.train)) train.push_back(s);
    std::vector<Image> val = slices_of(ct, split.validation);
    for (const Image& s : slices_of(cbct, split.validation)) val.push_back(s);
    json info = json::object();
    for (int f : config.codec_factors) {
      CodecConfig cc = config.codec;
      cc.factor = f;
      CodecModel model = train_codec(train, val, cc, [&](int epoch, double tl, double vl) {
        if (log && (epoch == 1 || epoch % 10 == 0)) {
          std::ostringstream s;
          s << "  codec f=" << f << " epoch " << epoch << " train " << tl << " val " << vl;
          log(s.str());
        }
      });
      const fs::path p = dir / "models" / ("codec_f" + std::to_string(f) + ".ckpt");
      nn::write_checkpoint(p, model.to_checkpoint());
      m.record(p, "codec");
      const LatentGrid probe = model.encode(train.front());
      info[std::to_string(f)] = {{"latent_height", probe.height},
                                 {"latent_width", probe.width},
                                 {"best_epoch", model.log().best_epoch},
                                 {"epochs_run", model.log().validation_loss.size()},
                                 {"early_stopped", model.log().early_stopped}};
      codecs.emplace(f, std::move(model));
    }
    doc["codecs"] = info;
  });

  m.stage("cldm", [&] {
    const CodecModel& codec = codecs.at(config.diffusion_factor);
    schedule = build_schedule(config.diffusion.steps, config.diffusion.delta, config.diffusion.tau);
    const auto ct_train = pick(ct, split.train), cb_train = pick(cbct, split.train);
    const auto ct_val = pick(ct, split.validation), cb_val = pick(cbct, split.validation);
    const LatentDataset train = encode_pairs(codec, ct_train, cb_train);
    const LatentDataset val = encode_pairs(codec, ct_val, cb_val);
    const fs::path last = dir / "models" / "cldm_last.ckpt";
    const fs::path best = dir / "models" / "cldm_best.ckpt";
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    DenoiserModel model = train_denoiser(train, &val, schedule, config.diffusion,
                                         [&](int epoch, double tl, double vl, const DenoiserModel& current) {
                                           const nn::Checkpoint c = current.to_checkpoint();
                                           nn::write_checkpoint(last, c);
                                           if (vl < best_val) {
                                             best_val = vl;
                                             best_epoch = epoch;
                                             nn::write_checkpoint(best, c);
                                           }
                                           if (log) {
                                             std::ostringstream s;
                                             s << "  cldm epoch " << epoch << " train " << tl << " val " << vl;
                                             log(s.str());
                                           }
                                         });
    const fs::path final_path = dir / "models" / "cldm.ckpt";
    nn::write_checkpoint(final_path, model.to_checkpoint());
    m.record(final_path, "cldm");
    if (fs::exists(last)) m.record(last, "cldm_last");
    if (fs::exists(best)) m.record(best, "cldm_best");
    doc["cldm"] = {{"factor", config.diffusion_factor},
                   {"steps", schedule.steps},
                   {"epochs", config.diffusion.epochs},
                   {"best_epoch", best_epoch},
                   {"epoch_losses", model.epoch_losses}};
    cldm.emplace(std::move(model));
  });

  m.stage("select-noise", [&] {
    const CodecModel& codec = codecs.at(config.diffusion_factor);
    const auto seeds = candidate_seeds(config.noise_seed_base, config.noise_candidates);
    const NoiseSelection sel = select_initial_noise(*cldm, codec, schedule, pick(cbct, split.validation),
                                                    pick(ct, split.validation), seeds, config.selection_metric);
    result.noise_seed = sel.best_seed;
    const json j = {{"metric", to_string(config.selection_metric)},
                    {"best_seed", sel.best_seed},
                    {"seeds", sel.seeds},
                    {"scores", sel.scores}};
    const fs::path p = dir / "noise_selection.json";
    write_text(p, j.dump(2));
    m.record(p, "noise_selection");
    doc["seeds"]["selected_noise"] = sel.best_seed;
  });

  std::vector<Volume> syn(config.n_volumes);
  m.stage("generate", [&] {
    const CodecModel& codec = codecs.at(config.diffusion_factor);
    for (int i : split.test) {
      syn[i] = generate_volume(*cldm, codec, cbct[i], result.noise_seed, schedule, NoiseMode::shared);
      const fs::path p = dir / "volumes" / indexed("syn_", i, ".vol");
      write_volume(syn[i], p);
      m.record(p, "syn_ct");
    }
  });

  m.stage("evaluate", [&] {
    EvaluationConfig ec = config.evaluation;
    if (ec.rois.empty()) ec.rois = default_rois(config.phantom.height, config.phantom.width);
    json summary = json::array();
    for (int i : split.test) {
      const RunReport report = evaluate_run(syn[i], cbct[i], ct[i], ec);
      for (const fs::path& p : write_run_report(report, dir / "reports" / indexed("test_", i, "")))
        m.record(p, p.extension() == ".png" ? "colormap" : "report");
      const RunRow& s = report.row("syn");
      const RunRow& c = report.row("cbct");
      summary.push_back({{"volume", i},
                         {"mae_cbct_hu", c.mae_vs_reference},
                         {"mae_syn_hu", s.mae_vs_reference},
                         {"ssim_cbct", c.ssim_vs_reference},
                         {"ssim_syn", s.ssim_vs_reference},
                         {"error_pixels", s.structure.error_pixels},
                         {"fov_pixels", s.structure.fov_pixels},
                         {"rmse_hu", s.structure.rmse_hu},
                         {"correlation_cbct", c.values.correlation},
                         {"correlation_syn", s.values.correlation}});
    }
    const fs::path p = dir / "summary.json";
    write_text(p, summary.dump(2));
    m.record(p, "summary");
  });

  result.manifest = m.write("complete");
  return result;
}

std::vector<AblationVariant> ablation_variants() {
  std::vector<AblationVariant> v;
  v.push_back({"proposed", {}, 0.0});
  DegradationSwitches s;
  s.warp = false;
  v.push_back({"no-warp", s, 0.0});
  s = {};
  s.contrast = false;
  v.push_back({"no-contrast", s, 0.0});
  s = {};
  s.mask1 = false;
  v.push_back({"no-mask1", s, 0.0});
  s = {};
  s.mask2 = false;
  v.push_back({"no-mask2", s, 0.0});
  s = {};
  s.mask3 = false;
  v.push_back({"no-mask3", s, 0.0});
  return v;
}

AblationResult run_ablation(const ExperimentConfig& config, int n_volumes, const LogFn& log) {
  config.validate();
  if (n_volumes < 0) throw ParameterError("n_volumes must be >= 0");
  const int n = n_volumes == 0 ? config.n_volumes : std::min(n_volumes, config.n_volumes);
  const fs::path dir = resolve_output_dir(config.output_dir) / (config.name + "-ablation");
  DirectoryLock lock(dir);
  Manifest m(dir, log);
  json& doc = m.doc();
  doc["name"] = config.name + "-ablation";
  doc["seeds"] = {{"master", config.seed}};
  AblationResult result{dir, ablation_variants()};

  std::vector<Volume> ct(n);
  m.stage("config", [&] {
    const fs::path p = dir / "config.json";
    save_config(config, p);
    m.record(p, "config");
  });
  m.stage("phantom", [&] {
    for (int i = 0; i < n; ++i) ct[i] = generate_phantom(volume_spec(config, i));
  });

  std::vector<Volume> proposed(n);
  json variants = json::array();
  for (AblationVariant& v : result.variants) {
    m.stage(v.name, [&] {
      DegradationParams base = config.degradation;
      base.switches = v.switches;
      double total = 0.0;
      std::size_t count = 0;
      for (int i = 0; i < n; ++i) {
        Volume out = simulate_volume(ct[i], base, degradation_seed(config, i), config.per_slice_params).volume;
        const fs::path p = dir / v.name / indexed("cbct_", i, ".vol");
        write_volume(out, p);
        m.record(p, "pseudo_cbct");
        if (v.name == "proposed") {
          proposed[i] = std::move(out);
        } else {
          total += mae(out, proposed[i]) * out.n_slices();
          count += out.n_slices();
        }
      }
      v.mae_vs_proposed = count ? total / static_cast<double>(count) : 0.0;
      variants.push_back({{"name", v.name},
                          {"switches", params_json(base)["switches"]},
                          {"mae_vs_proposed_hu", v.mae_vs_proposed}});
    });
  }
  const fs::path p = dir / "ablation.json";
  write_text(p, json{{"volumes", n}, {"variants", variants}}.dump(2));
  m.record(p, "ablation");
  doc["variants"] = variants;
  m.write("complete");
  return result;
}

}  // namespace pcbct
