#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerprobe/manifest.hpp"

namespace layerprobe {

// Planted-signal dataset description. Frames are unit Gaussian noise; inside
// a contiguous span covering `window_sparsity` of each positive recording, the
// signal layers are shifted by effect_size along a seeded unit direction.
struct SynthSpec {
  int n_speakers = 60;
  int recordings_per_speaker = 2;
  double duration_min_s = 30.0;
  double duration_max_s = 60.0;
  int dim = 16;
  int n_layers = 5;
  double frame_hz = 4.0;
  std::vector<std::uint32_t> signal_layers = {2};
  double effect_size = 5.0;
  double window_sparsity = 1.0;
  double positive_rate = 0.5;
  std::vector<std::string> labels = {"dep"};
  // true: every label has the same positives and direction.
  bool shared_direction = true;
  int k_folds = 5;
  std::uint64_t seed = 0;
};

void check_synth_spec(const SynthSpec& spec);
SynthSpec parse_synth_spec(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string synth_spec_to_json(const SynthSpec& spec);

inline constexpr const char* kSynthManifestName = "manifest.json";

// Writes one embedding file per (recording, layer) into out_dir plus
// out_dir/manifest.json. Output is a pure function of the spec.
Manifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace layerprobe
