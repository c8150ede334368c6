#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "layerprobe/embedding.hpp"

namespace layerprobe {

enum class Task { Elicited, Spontaneous };
enum class Split { Train, Test };

// How a questionnaire score becomes a binary label.
struct LabelDefinition {
  std::string questionnaire;
  double threshold = 0.0;
  bool inclusive = true;  // true: score >= threshold, false: score > threshold

  bool apply(double score) const {
    return inclusive ? score >= threshold : score > threshold;
  }
};

struct RecordingRecord {
  std::string recording_id;
  std::string speaker_id;
  double duration_s = 0.0;
  Task task = Task::Spontaneous;
  std::map<std::string, bool> labels;
  std::optional<Split> split;
  std::optional<int> fold;
};

struct DatasetProtocol {
  enum class Kind { HoldoutSplit, KFold };
  Kind kind = Kind::HoldoutSplit;
  int k = 0;  // only meaningful for KFold
};

struct Manifest {
  std::map<std::string, LabelDefinition> label_definitions;
  std::vector<RecordingRecord> records;
  DatasetProtocol protocol;
  bool speaker_disjoint = false;
  // Layers the store is expected to hold for every record; empty means
  // "discover from the store".
  std::vector<std::uint32_t> layers;

  const RecordingRecord* find(const std::string& recording_id) const;
};

// Throws ConfigError on any invariant violation (duplicate ids, unknown
// labels, bad fold indices, non-partitioning folds, speaker leakage when
// speaker_disjoint is set).
void check_manifest(const Manifest& m);

Manifest parse_manifest(const std::string& json_text);
Manifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct ValidationIssue {
  std::string recording_id;
  std::string description;
};

struct ValidationReport {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  bool ok() const { return errors.empty(); }
};

inline constexpr double kDurationTolerance = 0.02;

struct ValidationOptions {
  // Layers to check; empty means the manifest's declared layers, or, failing
  // that, every layer found on disk for the first record.
  std::vector<std::uint32_t> layers;
  // Recordings shorter than this produce a warning.
  std::optional<double> min_window_s;
};

ValidationReport validate_manifest(const Manifest& m, const EmbeddingStore& store,
                                   const ValidationOptions& options = {});
ValidationReport validate_manifest(const Manifest& m,
                                   const std::filesystem::path& store_root,
                                   const ValidationOptions& options = {});

// The layer list validate_manifest would check under `options`.
std::vector<std::uint32_t> resolve_layers(const Manifest& m,
                                          const EmbeddingStore& store,
                                          const std::vector<std::uint32_t>& requested);

}  // namespace layerprobe
