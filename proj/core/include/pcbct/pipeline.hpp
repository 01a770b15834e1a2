#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pcbct/config.hpp"

namespace pcbct {

// Resolves a relative output directory against $PCBCT_OUTPUT_ROOT when set.
std::filesystem::path resolve_output_dir(const std::string& output_dir);

// Phantom spec of volume `index`: the config's phantom with a derived seed.
PhantomSpec volume_spec(const ExperimentConfig& config, int index);

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

// Seeded shuffle of volume indices into split_counts(n_volumes).
Split make_split(const ExperimentConfig& config);

// Degradation seed of volume `index`.
std::uint64_t degradation_seed(const ExperimentConfig& config, int index);

// Exclusive ownership of an experiment directory through a lock file; throws
// StateError when another process holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

using LogFn = std::function<void(const std::string&)>;

struct PipelineResult {
  std::filesystem::path dir;
  std::filesystem::path manifest;
  std::uint64_t noise_seed = 0;
};

// phantoms -> pseudo-CBCT -> codecs -> latent diffusion -> noise selection ->
// SynCT for the test split -> reports, all under <output>/<name>. Writes
// manifest.json listing every artifact with its SHA-256. On failure the
// manifest records the failed stage and the error is rethrown with the stage
// name prefixed.
PipelineResult run_pipeline(const ExperimentConfig& config, const LogFn& log = {});

struct AblationVariant {
  std::string name;  // "proposed", "no-warp", ...
  DegradationSwitches switches;
  double mae_vs_proposed = 0.0;  // over all volumes, HU
};

// The proposed setting followed by the five single-step removals.
std::vector<AblationVariant> ablation_variants();

struct AblationResult {
  std::filesystem::path dir;
  std::vector<AblationVariant> variants;
};

// Regenerates the pseudo-CBCT data of the first `n_volumes` volumes (all when
// 0) under every variant with identical seeds and records each variant's MAE
// against the proposed output in ablation.json and the manifest.
AblationResult run_ablation(const ExperimentConfig& config, int n_volumes = 0, const LogFn& log = {});

}  // namespace pcbct
