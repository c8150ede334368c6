#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "layerprobe/evaluation.hpp"
#include "layerprobe/pooling.hpp"
#include "layerprobe/probe.hpp"

namespace layerprobe {

inline constexpr const char* kEngineVersion = "0.1.0";

enum class OutputFormat { Csv, Json };

std::vector<double> default_window_sizes();
std::vector<PoolingStrategy> default_poolings();

struct ExperimentConfig {
  std::filesystem::path store_root;
  std::filesystem::path manifest_path;
  std::vector<std::string> labels;
  std::optional<std::vector<std::uint32_t>> layers;  // nullopt: all layers
  std::vector<double> window_sizes_s = default_window_sizes();
  std::vector<PoolingStrategy> poolings = default_poolings();
  // When unset, the split protocol is taken from the manifest.
  bool split_from_manifest = true;
  EvalProtocol protocol;
  ProbeConfig probe;
  int parallelism = 1;
  std::optional<std::filesystem::path> output_path;
  OutputFormat output_format = OutputFormat::Csv;
};

// Relative paths in the document are resolved against `base_dir`. The
// LAYERPROBE_SEED environment variable, when set, overrides protocol.seed.
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct Provenance {
  std::string config_hash;
  std::string engine_version = kEngineVersion;
  std::uint64_t protocol_seed = 0;
  std::uint64_t probe_seed = 0;
  double wall_clock_s = 0.0;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  Provenance provenance;

  bool all_ok() const;
  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

struct RunStats {
  std::size_t probe_fits = 0;   // cache misses: probes actually trained
  std::size_t cache_hits = 0;   // fold lookups served from the cache
};

// Trained folds keyed by training_key(). Each key is computed by exactly one
// writer; readers share the result.
class ProbeCache {
 public:
  struct Entry {
    std::shared_ptr<const FoldScores> scores;
    std::string error;  // non-empty when training failed
  };

  std::optional<Entry> find(const std::string& key) const;
  void insert(const std::string& key, Entry entry);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Entry> entries_;
};

struct RunOptions {
  bool use_cache = true;
  RunStats* stats = nullptr;
};

// Cached, OpenMP-parallel sweep over (label x layer x window x pooling).
// Training units run concurrently; rows are assembled in a fixed order after
// all units finish, so the table does not depend on scheduling.
ResultTable run_grid(const ExperimentConfig& config, const RunOptions& options = {});

// Serial reference: each cell calls evaluate_config independently, no cache.
ResultTable run_grid_reference(const ExperimentConfig& config);

// Validation errors for the configured store; empty when runnable.
ValidationReport validate_experiment(const ExperimentConfig& config);

std::string results_to_csv(const ResultTable& table);
std::string results_to_json(const ResultTable& table);
ResultTable results_from_json(const std::string& text);
// CSV carries only the result columns; provenance and diagnostics are absent.
ResultTable results_from_csv(const std::string& text);
void emit_results(const ResultTable& table, OutputFormat format,
                  const std::filesystem::path& path);
ResultTable read_results(const std::filesystem::path& path);

struct BestLayer {
  std::string label;
  std::uint32_t layer = 0;
  double f1 = 0.0;
  double window_s = 0.0;
  std::string pooling;
};

struct BestLayerReport {
  std::vector<BestLayer> per_label;  // sorted by label
  double macro_of_bests = 0.0;       // mean over labels of each label's best
  // Single layer maximizing the mean over labels of that layer's best F1.
  std::uint32_t best_layer_by_mean = 0;
  double best_layer_mean = 0.0;
};

// Ties go to the lowest layer index. Only rows with status "ok" count.
BestLayerReport best_layer_report(const ResultTable& table);
std::string format_best_layer_report(const BestLayerReport& report);

}  // namespace layerprobe
