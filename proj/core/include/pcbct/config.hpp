#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pcbct/codec.hpp"
#include "pcbct/degrade.hpp"
#include "pcbct/diffusion.hpp"
#include "pcbct/metrics.hpp"
#include "pcbct/phantom.hpp"
#include "pcbct/unet.hpp"

namespace pcbct {

struct SplitCounts {
  int train = 0;
  int validation = 0;
  int test = 0;
};

// Train/validation/test counts in the 66/1/8 proportion, each at least one.
SplitCounts split_counts(int n_volumes);

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;  // master seed: phantom seeds, split, degradation

  PhantomSpec phantom{};  // per-volume seed = derive_seed(seed, volume index)
  int n_volumes = 75;

  DegradationParams degradation{};
  bool per_slice_params = true;

  std::vector<int> codec_factors{2, 4, 8};
  CodecConfig codec{};

  int diffusion_factor = 2;  // codec used for the latent diffusion model
  DenoiserConfig diffusion{};
  int noise_candidates = 100;
  std::uint64_t noise_seed_base = 0;
  SelectionMetric selection_metric = SelectionMetric::mae;

  EvaluationConfig evaluation{};
  std::string output_dir = "runs";

  // Throws ParameterError on inconsistent settings.
  void validate() const;
};

std::string to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

// Small settings that finish in minutes on one CPU core (64 x 64, T = 250).
ExperimentConfig desk_config();

// Stable string forms for the CLI and manifests.
std::string to_string(SelectionMetric metric);
SelectionMetric selection_metric_from_string(const std::string& name);

}  // namespace pcbct
