#include "pcbct/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcbct/errors.hpp"

namespace pcbct {

using nlohmann::json;

SplitCounts split_counts(int n) {
  if (n < 3) throw ParameterError("need at least three volumes for a train/validation/test split");
  SplitCounts s;
  s.test = std::max(1, static_cast<int>(std::lround(n * 8.0 / 75.0)));
  s.validation = std::max(1, static_cast<int>(std::lround(n * 1.0 / 75.0)));
  s.train = n - s.test - s.validation;
  if (s.train < 1) throw ParameterError("too few volumes for a training split");
  return s;
}

void ExperimentConfig::validate() const {
  pcbct::validate(phantom);
  degradation.validate();
  codec.validate();
  diffusion.validate();
  split_counts(n_volumes);
  if (codec_factors.empty()) throw ParameterError("at least one codec factor is required");
  bool found = false;
  for (int f : codec_factors) {
    if (f != 2 && f != 4 && f != 8) throw ParameterError("codec factors must be 2, 4 or 8");
    if (phantom.height % f != 0 || phantom.width % f != 0)
      throw ParameterError("phantom size is not divisible by codec factor " + std::to_string(f));
    found = found || f == diffusion_factor;
  }
  if (!found) throw ParameterError("diffusion_factor must be one of codec_factors");
  const int latent_h = phantom.height / diffusion_factor;
  const int latent_w = phantom.width / diffusion_factor;
  if (latent_h % diffusion.size_multiple() != 0 || latent_w % diffusion.size_multiple() != 0)
    throw ParameterError("latent size is not divisible by the denoiser depth");
  if (noise_candidates < 1) throw ParameterError("noise_candidates must be >= 1");
  if (output_dir.empty()) throw ParameterError("output_dir must be set");
}

std::string to_string(SelectionMetric metric) { return metric == SelectionMetric::mae ? "mae" : "ssim"; }

SelectionMetric selection_metric_from_string(const std::string& name) {
  if (name == "mae") return SelectionMetric::mae;
  if (name == "ssim") return SelectionMetric::ssim;
  throw ParameterError("unknown selection metric '" + name + "' (expected mae or ssim)");
}

namespace {

json interval_json(const HuInterval& i) { return {i.lo, i.hi}; }
HuInterval interval_from(const json& j) { return {j.at(0).get<float>(), j.at(1).get<float>()}; }

json phantom_json(const PhantomSpec& p) {
  const PhantomLayout& l = p.layout;
  return {{"height", p.height},
          {"width", p.width},
          {"n_slices", p.n_slices},
          {"seed", p.seed},
          {"fov_radius_px", p.fov_radius_px},
          {"spacing", {p.spacing.dz, p.spacing.dy, p.spacing.dx}},
          {"tissues",
           {{"air", interval_json(p.tissues.air)},
            {"fat", interval_json(p.tissues.fat)},
            {"soft", interval_json(p.tissues.soft)},
            {"bone", interval_json(p.tissues.bone)}}},
          {"layout",
           {{"body_semi_x", l.body_semi_x},
            {"body_semi_y", l.body_semi_y},
            {"fat_thickness", l.fat_thickness},
            {"organ_center_y", l.organ_center_y},
            {"organ_semi_x", l.organ_semi_x},
            {"organ_semi_y", l.organ_semi_y},
            {"ring_semi_x", l.ring_semi_x},
            {"ring_semi_y", l.ring_semi_y},
            {"ring_thickness", l.ring_thickness},
            {"femur_offset_x", l.femur_offset_x},
            {"femur_offset_y", l.femur_offset_y},
            {"femur_radius", l.femur_radius},
            {"gas_pockets", l.gas_pockets},
            {"gas_center_y", l.gas_center_y},
            {"gas_radius", l.gas_radius},
            {"jitter", l.jitter},
            {"edge_width_px", l.edge_width_px}}}};
}

PhantomSpec phantom_from(const json& j) {
  PhantomSpec p;
  p.height = j.at("height");
  p.width = j.at("width");
  p.n_slices = j.at("n_slices");
  p.seed = j.at("seed");
  p.fov_radius_px = j.at("fov_radius_px");
  const json& s = j.at("spacing");
  p.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  const json& t = j.at("tissues");
  p.tissues.air = interval_from(t.at("air"));
  p.tissues.fat = interval_from(t.at("fat"));
  p.tissues.soft = interval_from(t.at("soft"));
  p.tissues.bone = interval_from(t.at("bone"));
  const json& l = j.at("layout");
  PhantomLayout& o = p.layout;
  o.body_semi_x = l.at("body_semi_x");
  o.body_semi_y = l.at("body_semi_y");
  o.fat_thickness = l.at("fat_thickness");
  o.organ_center_y = l.at("organ_center_y");
  o.organ_semi_x = l.at("organ_semi_x");
  o.organ_semi_y = l.at("organ_semi_y");
  o.ring_semi_x = l.at("ring_semi_x");
  o.ring_semi_y = l.at("ring_semi_y");
  o.ring_thickness = l.at("ring_thickness");
  o.femur_offset_x = l.at("femur_offset_x");
  o.femur_offset_y = l.at("femur_offset_y");
  o.femur_radius = l.at("femur_radius");
  o.gas_pockets = l.at("gas_pockets");
  o.gas_center_y = l.at("gas_center_y");
  o.gas_radius = l.at("gas_radius");
  o.jitter = l.at("jitter");
  o.edge_width_px = l.at("edge_width_px");
  return p;
}

json switches_json(const DegradationSwitches& s) {
  return {{"warp", s.warp}, {"contrast", s.contrast}, {"mask1", s.mask1}, {"mask2", s.mask2}, {"mask3", s.mask3}};
}

DegradationSwitches switches_from(const json& j) {
  return {j.at("warp"), j.at("contrast"), j.at("mask1"), j.at("mask2"), j.at("mask3")};
}

json degradation_json(const DegradationParams& d) {
  return {{"sigma", d.sigma},
          {"smooth_sigma", d.smooth_sigma},
          {"c0", d.c0},
          {"r1", d.r1},
          {"r2", d.r2},
          {"bone_threshold", d.bone_threshold},
          {"soft_fill_hu", d.soft_fill_hu},
          {"mask2_radius_frac", d.mask2_radius_frac},
          {"mask3_width_px", d.mask3_width_px},
          {"mask3_shift_hu", d.mask3_shift_hu},
          {"n_angles", d.n_angles},
          {"switches", switches_json(d.switches)},
          {"seed", d.seed}};
}

DegradationParams degradation_from(const json& j) {
  DegradationParams d;
  d.sigma = j.at("sigma");
  d.smooth_sigma = j.at("smooth_sigma");
  d.c0 = j.at("c0");
  d.r1 = j.at("r1");
  d.r2 = j.at("r2");
  d.bone_threshold = j.at("bone_threshold");
  d.soft_fill_hu = j.at("soft_fill_hu");
  d.mask2_radius_frac = j.at("mask2_radius_frac");
  d.mask3_width_px = j.at("mask3_width_px");
  d.mask3_shift_hu = j.at("mask3_shift_hu");
  d.n_angles = j.at("n_angles");
  d.switches = switches_from(j.at("switches"));
  d.seed = j.at("seed");
  return d;
}

json codec_json(const CodecConfig& c) {
  return {{"factor", c.factor},
          {"widths", c.widths},
          {"codebook_size", c.codebook_size},
          {"commitment", c.commitment},
          {"ema_decay", c.ema_decay},
          {"dead_code_steps", c.dead_code_steps},
          {"learning_rate", c.learning_rate},
          {"clip_norm", c.clip_norm},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed}};
}

CodecConfig codec_from(const json& j) {
  CodecConfig c;
  c.factor = j.at("factor");
  c.widths = j.at("widths").get<std::vector<int>>();
  c.codebook_size = j.at("codebook_size");
  c.commitment = j.at("commitment");
  c.ema_decay = j.at("ema_decay");
  c.dead_code_steps = j.at("dead_code_steps");
  c.learning_rate = j.at("learning_rate");
  c.clip_norm = j.at("clip_norm");
  c.batch_size = j.at("batch_size");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.seed = j.at("seed");
  return c;
}

json denoiser_json(const DenoiserConfig& c) {
  return {{"widths", c.widths},
          {"embedding_dim", c.embedding_dim},
          {"groups", c.groups},
          {"steps", c.steps},
          {"delta", c.delta},
          {"tau", c.tau},
          {"learning_rate", c.learning_rate},
          {"clip_norm", c.clip_norm},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

DenoiserConfig denoiser_from(const json& j) {
  DenoiserConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.embedding_dim = j.at("embedding_dim");
  c.groups = j.at("groups");
  c.steps = j.at("steps");
  c.delta = j.at("delta");
  c.tau = j.at("tau");
  c.learning_rate = j.at("learning_rate");
  c.clip_norm = j.at("clip_norm");
  c.batch_size = j.at("batch_size");
  c.epochs = j.at("epochs");
  c.seed = j.at("seed");
  return c;
}

json evaluation_json(const EvaluationConfig& e) {
  json rois = json::array();
  for (const Roi& r : e.rois) rois.push_back({{"name", r.name}, {"y", r.y}, {"x", r.x}, {"size", r.size}});
  return {{"threshold_hu", e.threshold_hu},
          {"hist_lo", e.hist_lo},
          {"hist_hi", e.hist_hi},
          {"hist_bins", e.hist_bins},
          {"report_bins", e.report_bins},
          {"ssim_window", e.ssim_window},
          {"dynamic_range", e.dynamic_range},
          {"rois", rois}};
}

EvaluationConfig evaluation_from(const json& j) {
  EvaluationConfig e;
  e.threshold_hu = j.at("threshold_hu");
  e.hist_lo = j.at("hist_lo");
  e.hist_hi = j.at("hist_hi");
  e.hist_bins = j.at("hist_bins");
  e.report_bins = j.at("report_bins");
  e.ssim_window = j.at("ssim_window");
  e.dynamic_range = j.at("dynamic_range");
  for (const json& r : j.at("rois")) e.rois.push_back({r.at("name"), r.at("y"), r.at("x"), r.at("size")});
  return e;
}

}  // namespace

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["phantom"] = phantom_json(c.phantom);
  j["n_volumes"] = c.n_volumes;
  j["degradation"] = degradation_json(c.degradation);
  j["per_slice_params"] = c.per_slice_params;
  j["codec_factors"] = c.codec_factors;
  j["codec"] = codec_json(c.codec);
  j["diffusion_factor"] = c.diffusion_factor;
  j["diffusion"] = denoiser_json(c.diffusion);
  j["noise_candidates"] = c.noise_candidates;
  j["noise_seed_base"] = c.noise_seed_base;
  j["selection_metric"] = to_string(c.selection_metric);
  j["evaluation"] = evaluation_json(c.evaluation);
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ExperimentConfig c;
    c.name = j.at("name");
    c.seed = j.at("seed");
    c.phantom = phantom_from(j.at("phantom"));
    c.n_volumes = j.at("n_volumes");
    c.degradation = degradation_from(j.at("degradation"));
    c.per_slice_params = j.at("per_slice_params");
    c.codec_factors = j.at("codec_factors").get<std::vector<int>>();
    c.codec = codec_from(j.at("codec"));
    c.diffusion_factor = j.at("diffusion_factor");
    c.diffusion = denoiser_from(j.at("diffusion"));
    c.noise_candidates = j.at("noise_candidates");
    c.noise_seed_base = j.at("noise_seed_base");
    c.selection_metric = selection_metric_from_string(j.at("selection_metric"));
    c.evaluation = evaluation_from(j.at("evaluation"));
    c.output_dir = j.at("output_dir");
    return c;
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid experiment config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json(ss.str());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write config " + path.string());
  f << to_json(config) << '\n';
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.name = "desk";
  c.phantom.height = 64;
  c.phantom.width = 64;
  c.phantom.n_slices = 4;
  c.n_volumes = 47;
  c.codec.max_epochs = 200;
  c.diffusion.steps = 250;
  c.diffusion.epochs = 40;
  c.noise_candidates = 8;
  c.evaluation.rois = default_rois(c.phantom.height, c.phantom.width);
  return c;
}

}  // namespace pcbct
