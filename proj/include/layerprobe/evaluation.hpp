#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "layerprobe/embedding.hpp"
#include "layerprobe/manifest.hpp"
#include "layerprobe/pooling.hpp"
#include "layerprobe/probe.hpp"

namespace layerprobe {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct F1Result {
  double f1 = 0.0;
  // 2tp + fp + fn == 0: no positives predicted or present; f1 reported as 0.
  bool undefined = false;
  ConfusionCounts counts;
};

ConfusionCounts confusion(const std::vector<bool>& pred, const std::vector<bool>& truth);
double f1_from_counts(const ConfusionCounts& c);
F1Result f1_score(const std::vector<bool>& pred, const std::vector<bool>& truth);

// Unweighted mean over labels.
double macro_f1(const std::map<std::string, double>& per_label);

// Keeps every minority index and an equally sized uniform sample of the
// majority class. Output is sorted.
std::vector<std::size_t> undersample(const std::vector<bool>& labels, std::uint64_t seed);

// Fold index per record: distinct speakers (sorted by id) are shuffled by seed
// and dealt round-robin into k folds.
std::vector<int> kfold_speaker_groups(std::span<const RecordingRecord> records, int k,
                                      std::uint64_t seed);

struct RecordingPrediction {
  double score = 0.0;
  bool label = false;
};

RecordingPrediction recording_prediction(std::span<const double> window_probs,
                                         const PoolingStrategy& strategy, double threshold);

struct Aggregation {
  enum class Kind { PoolAllWindows, MiddleWindowOnly };
  Kind kind = Kind::PoolAllWindows;
  PoolingStrategy strategy = PoolingStrategy::mean();

  static Aggregation pool_all(PoolingStrategy s) { return {Kind::PoolAllWindows, s}; }
  static Aggregation middle_only() { return {Kind::MiddleWindowOnly, PoolingStrategy::mean()}; }
};

struct EvalProtocol {
  DatasetProtocol split;  // must agree with the manifest's protocol
  double decision_threshold = 0.5;
  Aggregation aggregation;
  bool undersample_majority = false;
  std::uint64_t seed = 0;
  std::optional<Task> task;  // restrict to one speech task

  // Stable text such as "kfold5|all|us0|thr0.5|seed0".
  std::string summary() const;
};

void check_protocol(const EvalProtocol& p);

struct ResultRow {
  std::string label;
  std::uint32_t layer = 0;
  double window_s = 0.0;
  std::string pooling;  // PoolingStrategy::to_string(), or "middle"
  std::string protocol;
  double f1 = 0.0;
  std::vector<double> per_fold_f1;
  // Summed over folds; per_fold_counts keeps each fold's own matrix.
  ConfusionCounts counts;
  std::vector<ConfusionCounts> per_fold_counts;
  std::size_t n_train_recordings = 0;
  std::size_t n_test_recordings = 0;
  std::size_t n_train_windows = 0;
  std::size_t n_test_windows = 0;
  std::vector<std::string> probe_ids;  // one per fold
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
  friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

// Everything downstream of probe training for one fold. Pooling strategies
// are applied to these scores; they never feed back into training.
struct FoldScores {
  int fold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::vector<bool> test_truth;
  std::vector<std::vector<double>> test_window_probs;  // per test recording
  std::size_t n_train_windows = 0;
  std::size_t n_test_windows = 0;
  std::string probe_id;
  bool probe_converged = false;
  ProbeModel model;
};

// Number of evaluation folds implied by the protocol (1 for holdout).
int fold_count(const EvalProtocol& protocol);

// Key covering every input that influences training of this fold.
std::string training_key(const std::string& label, std::uint32_t layer, double window_s,
                         int fold, const EvalProtocol& protocol,
                         const ProbeConfig& probe_config);

// Windowing, optional undersampling, probe training and test-window scoring
// for one fold. Throws Error naming the fold when training is degenerate.
FoldScores prepare_fold(const EmbeddingStore& store, const Manifest& manifest,
                        const std::string& label, std::uint32_t layer, double window_s,
                        int fold, const EvalProtocol& protocol,
                        const ProbeConfig& probe_config);

// Applies the protocol's aggregation to prepared folds.
ResultRow score_folds(std::span<const FoldScores> folds, const std::string& label,
                      std::uint32_t layer, double window_s, const EvalProtocol& protocol);

ResultRow evaluate_config(const EmbeddingStore& store, const Manifest& manifest,
                          const std::string& label, std::uint32_t layer, double window_s,
                          const EvalProtocol& protocol,
                          const ProbeConfig& probe_config = {});

// Central 95% F1 interval from re-running evaluate_config with recording
// labels permuted (n_permutations times).
std::pair<double, double> permutation_chance_band(const EmbeddingStore& store,
                                                  const Manifest& manifest,
                                                  const std::string& label,
                                                  std::uint32_t layer, double window_s,
                                                  const EvalProtocol& protocol,
                                                  int n_permutations, std::uint64_t seed,
                                                  const ProbeConfig& probe_config = {});

}  // namespace layerprobe
