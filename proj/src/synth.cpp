#include "layerprobe/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "layerprobe/embedding.hpp"
#include "layerprobe/error.hpp"
#include "layerprobe/evaluation.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {

using nlohmann::json;

namespace {

// Independent streams per purpose so that changing one knob does not shift
// every other draw.
enum Stream : std::uint64_t {
  kDirections = 1,
  kPositives = 2,
  kDurations = 3,
  kSpans = 4,
  kNoise = 5,
  kFolds = 6,
};

std::vector<double> unit_direction(Rng& rng, int dim) {
  std::vector<double> u(static_cast<std::size_t>(dim));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& v : u) v /= norm;
  return u;
}

std::string padded(const char* prefix, int value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%03d", prefix, value);
  return buf;
}

}  // namespace

void check_synth_spec(const SynthSpec& spec) {
  if (spec.n_speakers < 1 || spec.recordings_per_speaker < 1) {
    throw ConfigError("synth: need at least one speaker and one recording per speaker");
  }
  if (!(spec.duration_min_s > 0.0) || spec.duration_max_s < spec.duration_min_s) {
    throw ConfigError("synth: need 0 < duration_min_s <= duration_max_s");
  }
  if (spec.dim < 1 || spec.n_layers < 1) throw ConfigError("synth: dim and n_layers >= 1");
  if (!(spec.frame_hz > 0.0)) throw ConfigError("synth: frame_hz must be positive");
  for (auto layer : spec.signal_layers) {
    if (layer >= static_cast<std::uint32_t>(spec.n_layers)) {
      throw ConfigError("synth: signal layer " + std::to_string(layer) +
                        " outside [0, n_layers)");
    }
  }
  if (!(spec.effect_size >= 0.0)) throw ConfigError("synth: effect_size must be >= 0");
  if (!(spec.window_sparsity > 0.0 && spec.window_sparsity <= 1.0)) {
    throw ConfigError("synth: window_sparsity must lie in (0, 1]");
  }
  if (!(spec.positive_rate > 0.0 && spec.positive_rate < 1.0)) {
    throw ConfigError("synth: positive_rate must lie in (0, 1)");
  }
  if (spec.labels.empty()) throw ConfigError("synth: at least one label");
  if (std::set<std::string>(spec.labels.begin(), spec.labels.end()).size() !=
      spec.labels.size()) {
    throw ConfigError("synth: duplicate label names");
  }
  if (spec.k_folds < 2 || spec.k_folds > spec.n_speakers) {
    throw ConfigError("synth: need 2 <= k_folds <= n_speakers");
  }
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  SynthSpec s;
  try {
    const auto j = json::parse(json_text);
    s.n_speakers = j.value("n_speakers", s.n_speakers);
    s.recordings_per_speaker = j.value("recordings_per_speaker", s.recordings_per_speaker);
    if (j.contains("duration_s")) {
      s.duration_min_s = j["duration_s"].at("min").get<double>();
      s.duration_max_s = j["duration_s"].at("max").get<double>();
    }
    s.dim = j.value("dim", s.dim);
    s.n_layers = j.value("n_layers", s.n_layers);
    s.frame_hz = j.value("frame_hz", s.frame_hz);
    s.signal_layers = j.value("signal_layers", s.signal_layers);
    s.effect_size = j.value("effect_size", s.effect_size);
    s.window_sparsity = j.value("window_sparsity", s.window_sparsity);
    s.positive_rate = j.value("positive_rate", s.positive_rate);
    s.labels = j.value("labels", s.labels);
    s.shared_direction = j.value("shared_direction", s.shared_direction);
    s.k_folds = j.value("k_folds", s.k_folds);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  check_synth_spec(s);
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synth spec '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

std::string synth_spec_to_json(const SynthSpec& s) {
  json j = {{"n_speakers", s.n_speakers},
            {"recordings_per_speaker", s.recordings_per_speaker},
            {"duration_s", {{"min", s.duration_min_s}, {"max", s.duration_max_s}}},
            {"dim", s.dim},
            {"n_layers", s.n_layers},
            {"frame_hz", s.frame_hz},
            {"signal_layers", s.signal_layers},
            {"effect_size", s.effect_size},
            {"window_sparsity", s.window_sparsity},
            {"positive_rate", s.positive_rate},
            {"labels", s.labels},
            {"shared_direction", s.shared_direction},
            {"k_folds", s.k_folds},
            {"seed", s.seed}};
  return j.dump(2) + "\n";
}

Manifest generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  check_synth_spec(spec);
  std::filesystem::create_directories(out_dir);

  const std::size_t n_labels = spec.labels.size();
  const auto n_speakers = static_cast<std::size_t>(spec.n_speakers);

  // Per-label direction and positive speaker set.
  Rng dir_rng(mix_seed(spec.seed, kDirections));
  Rng pos_rng(mix_seed(spec.seed, kPositives));
  std::vector<std::vector<double>> directions;
  std::vector<std::vector<bool>> positive;  // [label][speaker]
  const auto n_pos = static_cast<std::size_t>(std::clamp<long>(
      std::lround(spec.positive_rate * static_cast<double>(n_speakers)), 1L,
      static_cast<long>(n_speakers) - (n_speakers > 1 ? 1 : 0)));
  for (std::size_t l = 0; l < n_labels; ++l) {
    if (l > 0 && spec.shared_direction) {
      directions.push_back(directions.front());
      positive.push_back(positive.front());
      continue;
    }
    directions.push_back(unit_direction(dir_rng, spec.dim));
    std::vector<std::size_t> order(n_speakers);
    for (std::size_t i = 0; i < n_speakers; ++i) order[i] = i;
    pos_rng.shuffle(order);
    std::vector<bool> is_pos(n_speakers, false);
    for (std::size_t i = 0; i < n_pos; ++i) is_pos[order[i]] = true;
    positive.push_back(std::move(is_pos));
  }

  Manifest manifest;
  for (const auto& name : spec.labels) {
    manifest.label_definitions[name] = {name, 1.0, true};
  }
  manifest.protocol = {DatasetProtocol::Kind::KFold, spec.k_folds};
  manifest.speaker_disjoint = true;
  for (int l = 0; l < spec.n_layers; ++l) {
    manifest.layers.push_back(static_cast<std::uint32_t>(l));
  }

  Rng dur_rng(mix_seed(spec.seed, kDurations));
  Rng span_rng(mix_seed(spec.seed, kSpans));
  const std::set<std::uint32_t> signal_layers(spec.signal_layers.begin(),
                                              spec.signal_layers.end());
  const auto dim = static_cast<std::size_t>(spec.dim);
  const auto hz = static_cast<float>(spec.frame_hz);

  std::uint64_t rec_index = 0;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    for (int r = 0; r < spec.recordings_per_speaker; ++r, ++rec_index) {
      RecordingRecord rec;
      rec.speaker_id = padded("spk", static_cast<int>(s));
      rec.recording_id = rec.speaker_id + "_" + padded("r", r);
      const double drawn = dur_rng.uniform(spec.duration_min_s, spec.duration_max_s);
      const auto n_frames = static_cast<std::size_t>(
          std::max(1L, std::lround(drawn * static_cast<double>(hz))));
      rec.duration_s = static_cast<double>(n_frames) / static_cast<double>(hz);
      rec.task = Task::Spontaneous;

      const auto span_frames = static_cast<std::size_t>(std::clamp<long>(
          std::lround(spec.window_sparsity * static_cast<double>(n_frames)), 1L,
          static_cast<long>(n_frames)));
      const std::size_t span_start =
          static_cast<std::size_t>(span_rng.index(n_frames - span_frames + 1));

      for (std::size_t l = 0; l < n_labels; ++l) {
        rec.labels[spec.labels[l]] = positive[l][s];
      }

      for (int layer = 0; layer < spec.n_layers; ++layer) {
        Rng noise(mix_seed(mix_seed(spec.seed, kNoise),
                           rec_index * 1024 + static_cast<std::uint64_t>(layer)));
        std::vector<float> data(n_frames * dim);
        std::vector<double> frame(dim);
        for (std::size_t f = 0; f < n_frames; ++f) {
          for (auto& v : frame) v = noise.normal();
          const bool in_span = f >= span_start && f < span_start + span_frames;
          if (in_span && signal_layers.contains(static_cast<std::uint32_t>(layer))) {
            for (std::size_t l = 0; l < n_labels; ++l) {
              if (!positive[l][s]) continue;
              if (l > 0 && spec.shared_direction) break;
              for (std::size_t d = 0; d < dim; ++d) {
                frame[d] += spec.effect_size * directions[l][d];
              }
            }
          }
          for (std::size_t d = 0; d < dim; ++d) {
            data[f * dim + d] = static_cast<float>(frame[d]);
          }
        }
        const EmbeddingSequence seq(rec.recording_id, static_cast<std::uint32_t>(layer),
                                    dim, hz, std::move(data));
        write_embedding_file(seq, out_dir / embedding_file_name(rec.recording_id,
                                                                seq.layer_index()));
      }
      manifest.records.push_back(std::move(rec));
    }
  }

  const auto folds =
      kfold_speaker_groups(manifest.records, spec.k_folds, mix_seed(spec.seed, kFolds));
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    manifest.records[i].fold = folds[i];
  }
  check_manifest(manifest);
  save_manifest(manifest, out_dir / kSynthManifestName);
  return manifest;
}

}  // namespace layerprobe
