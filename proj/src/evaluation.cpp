#include "layerprobe/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "layerprobe/error.hpp"
#include "layerprobe/format.hpp"
#include "layerprobe/random.hpp"
#include "layerprobe/windowing.hpp"

namespace layerprobe {

ConfusionCounts confusion(const std::vector<bool>& pred, const std::vector<bool>& truth) {
  if (pred.size() != truth.size()) {
    throw Error("length mismatch: " + std::to_string(pred.size()) + " predictions vs " +
                std::to_string(truth.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) {
      (truth[i] ? c.tp : c.fp)++;
    } else {
      (truth[i] ? c.fn : c.tn)++;
    }
  }
  return c;
}

double f1_from_counts(const ConfusionCounts& c) {
  const std::size_t denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

F1Result f1_score(const std::vector<bool>& pred, const std::vector<bool>& truth) {
  if (pred.empty()) throw Error("f1_score on empty input");
  F1Result r;
  r.counts = confusion(pred, truth);
  r.undefined = (2 * r.counts.tp + r.counts.fp + r.counts.fn) == 0;
  r.f1 = f1_from_counts(r.counts);
  return r;
}

double macro_f1(const std::map<std::string, double>& per_label) {
  if (per_label.empty()) throw Error("macro_f1 of no labels");
  double sum = 0.0;
  for (const auto& [_, f1] : per_label) sum += f1;
  return sum / static_cast<double>(per_label.size());
}

std::vector<std::size_t> undersample(const std::vector<bool>& labels, std::uint64_t seed) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw Error("undersample needs both classes present");

  auto& minority = pos.size() <= neg.size() ? pos : neg;
  auto& majority = pos.size() <= neg.size() ? neg : pos;
  Rng rng(seed);
  // Partial Fisher-Yates: the first |minority| slots become a uniform sample.
  for (std::size_t i = 0; i < minority.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(rng.index(majority.size() - i));
    std::swap(majority[i], majority[j]);
  }
  std::vector<std::size_t> kept(minority);
  kept.insert(kept.end(), majority.begin(),
              majority.begin() + static_cast<std::ptrdiff_t>(minority.size()));
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<int> kfold_speaker_groups(std::span<const RecordingRecord> records, int k,
                                      std::uint64_t seed) {
  if (k < 2) throw Error("kfold needs k >= 2");
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.speaker_id);
  std::vector<std::string> speakers(unique.begin(), unique.end());
  if (speakers.size() < static_cast<std::size_t>(k)) {
    throw Error("kfold needs at least k=" + std::to_string(k) + " speakers, found " +
                std::to_string(speakers.size()));
  }
  Rng rng(seed);
  rng.shuffle(speakers);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    fold_of[speakers[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  std::vector<int> folds;
  folds.reserve(records.size());
  for (const auto& r : records) folds.push_back(fold_of.at(r.speaker_id));
  return folds;
}

RecordingPrediction recording_prediction(std::span<const double> window_probs,
                                         const PoolingStrategy& strategy, double threshold) {
  if (window_probs.empty()) throw Error("recording has no window predictions");
  const double score = pool(window_probs, strategy);
  return {score, score >= threshold};
}

std::string EvalProtocol::summary() const {
  std::string s = split.kind == DatasetProtocol::Kind::KFold
                      ? "kfold" + std::to_string(split.k)
                      : std::string("holdout");
  s += aggregation.kind == Aggregation::Kind::MiddleWindowOnly ? "|middle" : "|all";
  s += undersample_majority ? "|us1" : "|us0";
  s += "|thr" + format_double(decision_threshold);
  s += "|seed" + std::to_string(seed);
  if (task) s += "|task=" + to_string(*task);
  return s;
}

void check_protocol(const EvalProtocol& p) {
  if (!(p.decision_threshold > 0.0 && p.decision_threshold < 1.0)) {
    throw ConfigError("decision_threshold must lie in (0, 1)");
  }
  if (p.split.kind == DatasetProtocol::Kind::KFold && p.split.k < 2) {
    throw ConfigError("kfold protocol needs k >= 2");
  }
}

int fold_count(const EvalProtocol& protocol) {
  return protocol.split.kind == DatasetProtocol::Kind::KFold ? protocol.split.k : 1;
}

std::string training_key(const std::string& label, std::uint32_t layer, double window_s,
                         int fold, const EvalProtocol& protocol,
                         const ProbeConfig& probe_config) {
  std::string key = label + "|L" + std::to_string(layer) + "|W" + format_double(window_s) +
                    "|F" + std::to_string(fold) + "|" + protocol.summary();
  key += "|lambda" + format_double(probe_config.l2_lambda) + "|tol" +
         format_double(probe_config.tol) + "|it" + std::to_string(probe_config.max_iter) +
         "|cw" +
         (probe_config.class_weighting == ClassWeighting::None ? std::string("0")
                                                               : std::string("1")) +
         "|ps" + std::to_string(probe_config.seed);
  return key;
}

namespace {

void check_split_agreement(const Manifest& manifest, const EvalProtocol& protocol) {
  if (manifest.protocol.kind != protocol.split.kind ||
      (protocol.split.kind == DatasetProtocol::Kind::KFold &&
       manifest.protocol.k != protocol.split.k)) {
    throw ConfigError("evaluation protocol " + protocol.summary() +
                      " does not match the manifest's split protocol");
  }
}

std::vector<WindowEmbedding> recording_windows(const EmbeddingSequence& seq,
                                               double window_s, const Aggregation& agg) {
  if (agg.kind == Aggregation::Kind::PoolAllWindows) {
    return windows_for_recording(seq, window_s);
  }
  const WindowPlan plan = plan_windows(seq.duration_s(), window_s, window_s / 2.0);
  return {window_embedding(seq, middle_window(plan))};
}

std::string hex_id(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

FoldScores prepare_fold(const EmbeddingStore& store, const Manifest& manifest,
                        const std::string& label, std::uint32_t layer, double window_s,
                        int fold, const EvalProtocol& protocol,
                        const ProbeConfig& probe_config) {
  check_protocol(protocol);
  check_split_agreement(manifest, protocol);
  if (!manifest.label_definitions.contains(label)) {
    throw ConfigError("unknown label '" + label + "'");
  }
  const std::string fold_name = "fold " + std::to_string(fold);

  std::vector<const RecordingRecord*> train;
  std::vector<const RecordingRecord*> test;
  for (const auto& r : manifest.records) {
    if (!r.labels.contains(label)) continue;
    if (protocol.task && r.task != *protocol.task) continue;
    const bool is_test = protocol.split.kind == DatasetProtocol::Kind::KFold
                             ? r.fold.value_or(-1) == fold
                             : r.split == Split::Test;
    (is_test ? test : train).push_back(&r);
  }
  if (test.empty()) throw Error(fold_name + ": no test recordings");

  if (protocol.undersample_majority) {
    std::vector<bool> train_labels;
    for (const auto* r : train) train_labels.push_back(r->labels.at(label));
    const bool both = std::find(train_labels.begin(), train_labels.end(), true) !=
                          train_labels.end() &&
                      std::find(train_labels.begin(), train_labels.end(), false) !=
                          train_labels.end();
    if (!both) {
      throw Error(fold_name + ": degenerate training set (single class before undersampling)");
    }
    const std::uint64_t seed =
        mix_seed(mix_seed(protocol.seed, fnv1a(label)), static_cast<std::uint64_t>(fold));
    std::vector<const RecordingRecord*> kept;
    for (auto idx : undersample(train_labels, seed)) kept.push_back(train[idx]);
    train = std::move(kept);
  }

  FoldScores out;
  out.fold = fold;

  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (const auto* r : train) {
    out.train_ids.push_back(r->recording_id);
    const auto seq = store.load(r->recording_id, layer);
    const double target = r->labels.at(label) ? 1.0 : 0.0;
    for (auto& w : recording_windows(*seq, window_s, protocol.aggregation)) {
      rows.push_back(std::move(w.vector));
      y.push_back(target);
    }
  }
  out.n_train_windows = rows.size();
  if (rows.empty()) throw Error(fold_name + ": no training windows");

  const auto dim = static_cast<Eigen::Index>(rows.front().size());
  Matrix X(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(rows[i].data(), dim);
  }
  rows.clear();

  try {
    out.model = fit(X, y, probe_config);
  } catch (const Error& e) {
    throw Error(fold_name + ": " + e.what());
  }
  out.probe_converged = out.model.converged;
  out.probe_id =
      hex_id(fnv1a(training_key(label, layer, window_s, fold, protocol, probe_config)));

  for (const auto* r : test) {
    out.test_ids.push_back(r->recording_id);
    out.test_truth.push_back(r->labels.at(label));
    const auto seq = store.load(r->recording_id, layer);
    std::vector<double> probs;
    for (const auto& w : recording_windows(*seq, window_s, protocol.aggregation)) {
      probs.push_back(predict_proba(out.model, Eigen::Map<const Vector>(
                                                   w.vector.data(), dim)));
    }
    out.n_test_windows += probs.size();
    out.test_window_probs.push_back(std::move(probs));
  }
  return out;
}

ResultRow score_folds(std::span<const FoldScores> folds, const std::string& label,
                      std::uint32_t layer, double window_s, const EvalProtocol& protocol) {
  ResultRow row;
  row.label = label;
  row.layer = layer;
  row.window_s = window_s;
  const bool middle = protocol.aggregation.kind == Aggregation::Kind::MiddleWindowOnly;
  row.pooling = middle ? "middle" : protocol.aggregation.strategy.to_string();
  row.protocol = protocol.summary();

  double f1_sum = 0.0;
  for (const auto& fold : folds) {
    std::vector<bool> pred;
    pred.reserve(fold.test_window_probs.size());
    for (const auto& probs : fold.test_window_probs) {
      const auto strategy = middle ? PoolingStrategy::mean() : protocol.aggregation.strategy;
      pred.push_back(recording_prediction(probs, strategy, protocol.decision_threshold).label);
    }
    const F1Result r = f1_score(pred, fold.test_truth);
    row.per_fold_f1.push_back(r.f1);
    row.per_fold_counts.push_back(r.counts);
    row.counts += r.counts;
    f1_sum += r.f1;
    row.n_train_recordings += fold.train_ids.size();
    row.n_test_recordings += fold.test_ids.size();
    row.n_train_windows += fold.n_train_windows;
    row.n_test_windows += fold.n_test_windows;
    row.probe_ids.push_back(fold.probe_id);
  }
  row.f1 = folds.empty() ? 0.0 : f1_sum / static_cast<double>(folds.size());
  return row;
}

ResultRow evaluate_config(const EmbeddingStore& store, const Manifest& manifest,
                          const std::string& label, std::uint32_t layer, double window_s,
                          const EvalProtocol& protocol, const ProbeConfig& probe_config) {
  std::vector<FoldScores> folds;
  for (int f = 0; f < fold_count(protocol); ++f) {
    folds.push_back(
        prepare_fold(store, manifest, label, layer, window_s, f, protocol, probe_config));
  }
  return score_folds(folds, label, layer, window_s, protocol);
}

std::pair<double, double> permutation_chance_band(const EmbeddingStore& store,
                                                  const Manifest& manifest,
                                                  const std::string& label,
                                                  std::uint32_t layer, double window_s,
                                                  const EvalProtocol& protocol,
                                                  int n_permutations, std::uint64_t seed,
                                                  const ProbeConfig& probe_config) {
  if (n_permutations < 1) throw Error("need at least one permutation");
  std::vector<std::size_t> idx;
  std::vector<bool> values;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (auto it = manifest.records[i].labels.find(label);
        it != manifest.records[i].labels.end()) {
      idx.push_back(i);
      values.push_back(it->second);
    }
  }
  Rng rng(seed);
  std::vector<double> f1s;
  for (int p = 0; p < n_permutations; ++p) {
    rng.shuffle(values);
    Manifest permuted = manifest;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      permuted.records[idx[i]].labels[label] = values[i];
    }
    try {
      f1s.push_back(
          evaluate_config(store, permuted, label, layer, window_s, protocol, probe_config).f1);
    } catch (const Error&) {
      f1s.push_back(0.0);  // a degenerate permuted fold scores no better than chance
    }
  }
  std::sort(f1s.begin(), f1s.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(f1s.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, f1s.size() - 1);
    return f1s[lo] + (pos - static_cast<double>(lo)) * (f1s[hi] - f1s[lo]);
  };
  return {quantile(0.025), quantile(0.975)};
}

}  // namespace layerprobe
