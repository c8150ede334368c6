#include "layerprobe/runner.hpp"

#include <memory>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "layerprobe/error.hpp"
#include "layerprobe/format.hpp"
#include "layerprobe/random.hpp"

namespace layerprobe {

using nlohmann::json;

std::vector<double> default_window_sizes() { return {0.5, 1, 2, 5, 10, 15, 20}; }

std::vector<PoolingStrategy> default_poolings() {
  std::vector<PoolingStrategy> out = {PoolingStrategy::min(), PoolingStrategy::mean(),
                                      PoolingStrategy::max()};
  for (double omega : {0.1, 1.0, 10.0, 100.0}) {
    out.push_back(PoolingStrategy::mellowmax(omega));
    out.push_back(PoolingStrategy::mellowmax(-omega));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  try {
    const auto j = json::parse(json_text);
    c.store_root = resolve(base_dir, j.at("store_root").get<std::string>());
    c.manifest_path = resolve(base_dir, j.at("manifest_path").get<std::string>());
    c.labels = j.at("labels").get<std::vector<std::string>>();
    if (j.contains("layers") && !(j["layers"].is_string() && j["layers"] == "all")) {
      c.layers = j["layers"].get<std::vector<std::uint32_t>>();
    }
    if (j.contains("window_sizes_s")) {
      c.window_sizes_s = j["window_sizes_s"].get<std::vector<double>>();
    }
    if (j.contains("poolings")) {
      c.poolings.clear();
      for (const auto& p : j["poolings"]) {
        c.poolings.push_back(PoolingStrategy::parse(p.get<std::string>()));
      }
    }
    if (j.contains("protocol")) {
      const auto& p = j["protocol"];
      const std::string kind = p.value("kind", "manifest");
      if (kind == "kfold") {
        c.split_from_manifest = false;
        c.protocol.split = {DatasetProtocol::Kind::KFold, p.at("k").get<int>()};
      } else if (kind == "holdout") {
        c.split_from_manifest = false;
        c.protocol.split = {DatasetProtocol::Kind::HoldoutSplit, 0};
      } else if (kind != "manifest") {
        throw ConfigError("protocol.kind must be manifest|kfold|holdout");
      }
      c.protocol.decision_threshold = p.value("decision_threshold", 0.5);
      const std::string agg = p.value("aggregation", "pool_all");
      if (agg == "pool_all") {
        c.protocol.aggregation = Aggregation::pool_all(PoolingStrategy::mean());
      } else if (agg == "middle_window") {
        c.protocol.aggregation = Aggregation::middle_only();
      } else {
        throw ConfigError("protocol.aggregation must be pool_all|middle_window");
      }
      c.protocol.undersample_majority = p.value("undersample_majority", false);
      c.protocol.seed = p.value("seed", std::uint64_t{0});
      if (p.contains("task")) c.protocol.task = task_from_string(p["task"].get<std::string>());
    }
    if (j.contains("probe")) {
      const auto& p = j["probe"];
      c.probe.l2_lambda = p.value("l2_lambda", c.probe.l2_lambda);
      c.probe.tol = p.value("tol", c.probe.tol);
      c.probe.max_iter = p.value("max_iter", c.probe.max_iter);
      const std::string cw = p.value("class_weighting", "none");
      if (cw == "balanced") {
        c.probe.class_weighting = ClassWeighting::BalancedInverseFrequency;
      } else if (cw != "none") {
        throw ConfigError("probe.class_weighting must be none|balanced");
      }
      c.probe.seed = p.value("seed", c.probe.seed);
    }
    c.parallelism = j.value("parallelism", 1);
    if (j.contains("output")) {
      const auto& o = j["output"];
      if (o.contains("path")) c.output_path = resolve(base_dir, o["path"].get<std::string>());
      const std::string fmt = o.value("format", "csv");
      if (fmt == "json") {
        c.output_format = OutputFormat::Json;
      } else if (fmt != "csv") {
        throw ConfigError("output.format must be csv|json");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }

  if (const char* env = std::getenv("LAYERPROBE_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') throw ConfigError("LAYERPROBE_SEED is not an integer");
    c.protocol.seed = v;
  }

  if (c.labels.empty()) throw ConfigError("config: labels must not be empty");
  if (c.layers && c.layers->empty()) throw ConfigError("config: layers must not be empty");
  if (c.window_sizes_s.empty()) throw ConfigError("config: window_sizes_s must not be empty");
  for (double w : c.window_sizes_s) {
    if (!(w > 0.0)) throw ConfigError("config: window sizes must be positive");
  }
  if (c.poolings.empty()) throw ConfigError("config: poolings must not be empty");
  if (c.parallelism < 1) throw ConfigError("config: parallelism must be >= 1");
  check_protocol(c.protocol);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.parent_path());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["store_root"] = c.store_root.string();
  j["manifest_path"] = c.manifest_path.string();
  j["labels"] = c.labels;
  if (c.layers) {
    j["layers"] = *c.layers;
  } else {
    j["layers"] = "all";
  }
  j["window_sizes_s"] = c.window_sizes_s;
  j["poolings"] = json::array();
  for (const auto& p : c.poolings) j["poolings"].push_back(p.to_string());
  json p;
  if (c.split_from_manifest) {
    p["kind"] = "manifest";
  } else if (c.protocol.split.kind == DatasetProtocol::Kind::KFold) {
    p["kind"] = "kfold";
    p["k"] = c.protocol.split.k;
  } else {
    p["kind"] = "holdout";
  }
  p["decision_threshold"] = c.protocol.decision_threshold;
  p["aggregation"] = c.protocol.aggregation.kind == Aggregation::Kind::MiddleWindowOnly
                         ? "middle_window"
                         : "pool_all";
  p["undersample_majority"] = c.protocol.undersample_majority;
  p["seed"] = c.protocol.seed;
  if (c.protocol.task) p["task"] = to_string(*c.protocol.task);
  j["protocol"] = p;
  j["probe"] = {{"l2_lambda", c.probe.l2_lambda},
                {"tol", c.probe.tol},
                {"max_iter", c.probe.max_iter},
                {"class_weighting",
                 c.probe.class_weighting == ClassWeighting::None ? "none" : "balanced"},
                {"seed", c.probe.seed}};
  j["parallelism"] = c.parallelism;
  json out = {{"format", c.output_format == OutputFormat::Json ? "json" : "csv"}};
  if (c.output_path) out["path"] = c.output_path->string();
  j["output"] = out;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Cache

std::optional<ProbeCache::Entry> ProbeCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ProbeCache::insert(const std::string& key, Entry entry) {
  std::lock_guard lock(mutex_);
  entries_.emplace(key, std::move(entry));
}

std::size_t ProbeCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Grid

bool ResultTable::all_ok() const {
  return std::all_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.ok(); });
}

namespace {

struct Prepared {
  Manifest manifest;
  std::unique_ptr<EmbeddingStore> store;
  std::vector<std::uint32_t> layers;
  std::vector<double> windows;
  std::vector<PoolingStrategy> poolings;  // sorted along the min..max axis
  EvalProtocol protocol;
};

Prepared prepare(const ExperimentConfig& config) {
  Prepared p{load_manifest(config.manifest_path), std::make_unique<EmbeddingStore>(config.store_root), {}, {},
             {}, config.protocol};
  if (config.split_from_manifest) p.protocol.split = p.manifest.protocol;
  check_protocol(p.protocol);
  const auto& declared = p.manifest.protocol;
  if (declared.kind != p.protocol.split.kind ||
      (declared.kind == DatasetProtocol::Kind::KFold && declared.k != p.protocol.split.k)) {
    throw ConfigError("protocol " + p.protocol.summary() +
                      " does not match the manifest's split protocol");
  }
  for (const auto& label : config.labels) {
    if (!p.manifest.label_definitions.contains(label)) {
      throw ConfigError("config label '" + label + "' is not defined in the manifest");
    }
  }
  p.layers = resolve_layers(p.manifest, *p.store, config.layers.value_or(
                                                     std::vector<std::uint32_t>{}));
  if (p.layers.empty()) throw ConfigError("no layers to evaluate");
  std::sort(p.layers.begin(), p.layers.end());
  p.layers.erase(std::unique(p.layers.begin(), p.layers.end()), p.layers.end());

  p.windows = config.window_sizes_s;
  std::sort(p.windows.begin(), p.windows.end());
  p.windows.erase(std::unique(p.windows.begin(), p.windows.end()), p.windows.end());

  if (p.protocol.aggregation.kind == Aggregation::Kind::MiddleWindowOnly) {
    p.poolings = {PoolingStrategy::mean()};  // placeholder; rows report "middle"
  } else {
    p.poolings = config.poolings;
    std::stable_sort(p.poolings.begin(), p.poolings.end(),
                     [](const PoolingStrategy& a, const PoolingStrategy& b) {
                       return a.order_key() < b.order_key();
                     });
    p.poolings.erase(std::unique(p.poolings.begin(), p.poolings.end()), p.poolings.end());
  }
  return p;
}

Provenance make_provenance(const ExperimentConfig& config, const EvalProtocol& protocol) {
  Provenance prov;
  ExperimentConfig canonical = config;
  canonical.parallelism = 1;  // scheduling does not change results
  canonical.output_path.reset();
  canonical.protocol.seed = protocol.seed;
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(experiment_config_to_json(canonical))));
  prov.config_hash = buf;
  prov.protocol_seed = protocol.seed;
  prov.probe_seed = config.probe.seed;
  return prov;
}

EvalProtocol with_strategy(EvalProtocol protocol, const PoolingStrategy& s) {
  if (protocol.aggregation.kind == Aggregation::Kind::PoolAllWindows) {
    protocol.aggregation.strategy = s;
  }
  return protocol;
}

ResultRow error_row(const std::string& label, std::uint32_t layer, double window_s,
                    const EvalProtocol& protocol, const std::string& message) {
  ResultRow row;
  row.label = label;
  row.layer = layer;
  row.window_s = window_s;
  row.pooling = protocol.aggregation.kind == Aggregation::Kind::MiddleWindowOnly
                    ? "middle"
                    : protocol.aggregation.strategy.to_string();
  row.protocol = protocol.summary();
  row.status = "error: " + message;
  return row;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ValidationReport validate_experiment(const ExperimentConfig& config) {
  const Prepared p = prepare(config);
  ValidationOptions options;
  options.layers = p.layers;
  options.min_window_s = p.windows.front();
  return validate_manifest(p.manifest, *p.store, options);
}

ResultTable run_grid(const ExperimentConfig& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const Prepared p = prepare(config);
  {
    ValidationOptions vo;
    vo.layers = p.layers;
    const auto report = validate_manifest(p.manifest, *p.store, vo);
    if (!report.ok()) {
      throw ConfigError("store validation failed: " + report.errors.front().recording_id +
                        ": " + report.errors.front().description + " (" +
                        std::to_string(report.errors.size()) + " errors)");
    }
  }
  if (!options.use_cache) {
    ResultTable table = run_grid_reference(config);
    table.provenance.wall_clock_s = seconds_since(t0);
    return table;
  }

  // One training task per (label, layer, window, fold).
  struct Task {
    std::string label;
    std::uint32_t layer;
    double window_s;
    int fold;
    std::string key;
  };
  const int n_folds = fold_count(p.protocol);
  std::vector<Task> tasks;
  for (const auto& label : config.labels) {
    for (auto layer : p.layers) {
      for (double w : p.windows) {
        for (int f = 0; f < n_folds; ++f) {
          tasks.push_back({label, layer, w, f,
                           training_key(label, layer, w, f, p.protocol, config.probe)});
        }
      }
    }
  }

  ProbeCache cache;
  const auto n_tasks = static_cast<long>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(config.parallelism)
  for (long t = 0; t < n_tasks; ++t) {
    const Task& task = tasks[static_cast<std::size_t>(t)];
    if (cache.find(task.key)) continue;
    ProbeCache::Entry entry;
    try {
      entry.scores = std::make_shared<const FoldScores>(
          prepare_fold(*p.store, p.manifest, task.label, task.layer, task.window_s, task.fold,
                       p.protocol, config.probe));
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    cache.insert(task.key, std::move(entry));
  }

  RunStats stats;
  stats.probe_fits = cache.size();
  ResultTable table;
  for (const auto& label : config.labels) {
    for (auto layer : p.layers) {
      for (double w : p.windows) {
        for (const auto& strategy : p.poolings) {
          const EvalProtocol cell = with_strategy(p.protocol, strategy);
          std::vector<FoldScores> folds;
          std::string error;
          for (int f = 0; f < n_folds && error.empty(); ++f) {
            const auto entry =
                cache.find(training_key(label, layer, w, f, p.protocol, config.probe));
            ++stats.cache_hits;
            if (!entry->error.empty()) {
              error = entry->error;
            } else {
              folds.push_back(*entry->scores);
            }
          }
          if (!error.empty()) {
            table.rows.push_back(error_row(label, layer, w, cell, error));
            continue;
          }
          try {
            table.rows.push_back(score_folds(folds, label, layer, w, cell));
          } catch (const std::exception& e) {
            table.rows.push_back(error_row(label, layer, w, cell, e.what()));
          }
        }
      }
    }
  }
  if (options.stats) *options.stats = stats;
  table.provenance = make_provenance(config, p.protocol);
  table.provenance.wall_clock_s = seconds_since(t0);
  return table;
}

ResultTable run_grid_reference(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const Prepared p = prepare(config);
  ResultTable table;
  for (const auto& label : config.labels) {
    for (auto layer : p.layers) {
      for (double w : p.windows) {
        for (const auto& strategy : p.poolings) {
          const EvalProtocol cell = with_strategy(p.protocol, strategy);
          try {
            table.rows.push_back(
                evaluate_config(*p.store, p.manifest, label, layer, w, cell, config.probe));
          } catch (const std::exception& e) {
            table.rows.push_back(error_row(label, layer, w, cell, e.what()));
          }
        }
      }
    }
  }
  table.provenance = make_provenance(config, p.protocol);
  table.provenance.wall_clock_s = seconds_since(t0);
  return table;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kCsvHeader =
    "label,layer,window_s,pooling,protocol,f1,per_fold_f1,tp,fp,fn,tn,status";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::vector<double> parse_fold_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

ConfusionCounts counts_from(const json& j) {
  return {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
          j.at("fn").get<std::size_t>(), j.at("tn").get<std::size_t>()};
}

}  // namespace

std::string results_to_csv(const ResultTable& table) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : table.rows) {
    std::string folds;
    for (std::size_t i = 0; i < r.per_fold_f1.size(); ++i) {
      if (i > 0) folds += ';';
      folds += format_double(r.per_fold_f1[i]);
    }
    out += csv_field(r.label) + ',' + std::to_string(r.layer) + ',' +
           format_double(r.window_s) + ',' + csv_field(r.pooling) + ',' +
           csv_field(r.protocol) + ',' + format_double(r.f1) + ',' + folds + ',' +
           std::to_string(r.counts.tp) + ',' + std::to_string(r.counts.fp) + ',' +
           std::to_string(r.counts.fn) + ',' + std::to_string(r.counts.tn) + ',' +
           csv_field(r.status) + '\n';
  }
  return out;
}

ResultTable results_from_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != kCsvHeader) {
    throw Error("results CSV: unexpected header");
  }
  ResultTable table;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 12) throw Error("results CSV: expected 12 columns in '" + line + "'");
    ResultRow r;
    r.label = f[0];
    r.layer = static_cast<std::uint32_t>(std::stoul(f[1]));
    r.window_s = std::stod(f[2]);
    r.pooling = f[3];
    r.protocol = f[4];
    r.f1 = std::stod(f[5]);
    r.per_fold_f1 = parse_fold_list(f[6]);
    r.counts = {std::stoul(f[7]), std::stoul(f[8]), std::stoul(f[9]), std::stoul(f[10])};
    r.status = f[11];
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string results_to_json(const ResultTable& table) {
  json j;
  j["provenance"] = {{"config_hash", table.provenance.config_hash},
                     {"engine_version", table.provenance.engine_version},
                     {"protocol_seed", table.provenance.protocol_seed},
                     {"probe_seed", table.provenance.probe_seed},
                     {"wall_clock_s", table.provenance.wall_clock_s}};
  j["rows"] = json::array();
  for (const auto& r : table.rows) {
    json per_fold = json::array();
    for (const auto& c : r.per_fold_counts) per_fold.push_back(counts_json(c));
    j["rows"].push_back({{"label", r.label},
                         {"layer", r.layer},
                         {"window_s", r.window_s},
                         {"pooling", r.pooling},
                         {"protocol", r.protocol},
                         {"f1", r.f1},
                         {"per_fold_f1", r.per_fold_f1},
                         {"tp", r.counts.tp},
                         {"fp", r.counts.fp},
                         {"fn", r.counts.fn},
                         {"tn", r.counts.tn},
                         {"per_fold_counts", per_fold},
                         {"n_train_recordings", r.n_train_recordings},
                         {"n_test_recordings", r.n_test_recordings},
                         {"n_train_windows", r.n_train_windows},
                         {"n_test_windows", r.n_test_windows},
                         {"probe_ids", r.probe_ids},
                         {"status", r.status}});
  }
  return j.dump(2) + "\n";
}

ResultTable results_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    ResultTable table;
    const auto& p = j.at("provenance");
    table.provenance.config_hash = p.at("config_hash").get<std::string>();
    table.provenance.engine_version = p.at("engine_version").get<std::string>();
    table.provenance.protocol_seed = p.at("protocol_seed").get<std::uint64_t>();
    table.provenance.probe_seed = p.at("probe_seed").get<std::uint64_t>();
    table.provenance.wall_clock_s = p.at("wall_clock_s").get<double>();
    for (const auto& jr : j.at("rows")) {
      ResultRow r;
      r.label = jr.at("label").get<std::string>();
      r.layer = jr.at("layer").get<std::uint32_t>();
      r.window_s = jr.at("window_s").get<double>();
      r.pooling = jr.at("pooling").get<std::string>();
      r.protocol = jr.at("protocol").get<std::string>();
      r.f1 = jr.at("f1").get<double>();
      r.per_fold_f1 = jr.at("per_fold_f1").get<std::vector<double>>();
      r.counts = counts_from(jr);
      for (const auto& c : jr.value("per_fold_counts", json::array())) {
        r.per_fold_counts.push_back(counts_from(c));
      }
      r.n_train_recordings = jr.value("n_train_recordings", std::size_t{0});
      r.n_test_recordings = jr.value("n_test_recordings", std::size_t{0});
      r.n_train_windows = jr.value("n_train_windows", std::size_t{0});
      r.n_test_windows = jr.value("n_test_windows", std::size_t{0});
      r.probe_ids = jr.value("probe_ids", std::vector<std::string>{});
      r.status = jr.at("status").get<std::string>();
      table.rows.push_back(std::move(r));
    }
    return table;
  } catch (const json::exception& e) {
    throw Error(std::string("results JSON: ") + e.what());
  }
}

void emit_results(const ResultTable& table, OutputFormat format,
                  const std::filesystem::path& path) {
  if (table.rows.empty()) throw Error("refusing to emit an empty result table");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << (format == OutputFormat::Csv ? results_to_csv(table) : results_to_json(table));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

ResultTable read_results(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return results_from_json(text);
  return results_from_csv(text);
}

// ---------------------------------------------------------------------------
// Reports

BestLayerReport best_layer_report(const ResultTable& table) {
  // label -> layer -> best row at that layer
  std::map<std::string, std::map<std::uint32_t, const ResultRow*>> best;
  for (const auto& r : table.rows) {
    if (!r.ok()) continue;
    auto& slot = best[r.label][r.layer];
    if (slot == nullptr || r.f1 > slot->f1) slot = &r;
  }
  BestLayerReport report;
  std::map<std::uint32_t, std::pair<double, std::size_t>> layer_totals;
  for (const auto& [label, layers] : best) {
    const ResultRow* top = nullptr;
    for (const auto& [layer, row] : layers) {  // ascending layer: ties keep the lowest
      if (top == nullptr || row->f1 > top->f1) top = row;
      layer_totals[layer].first += row->f1;
      layer_totals[layer].second += 1;
    }
    report.per_label.push_back({label, top->layer, top->f1, top->window_s, top->pooling});
  }
  if (report.per_label.empty()) return report;

  double sum = 0.0;
  for (const auto& b : report.per_label) sum += b.f1;
  report.macro_of_bests = sum / static_cast<double>(report.per_label.size());

  bool first = true;
  const auto n_labels = report.per_label.size();
  for (const auto& [layer, totals] : layer_totals) {
    if (totals.second != n_labels) continue;  // layer must cover every label
    const double mean = totals.first / static_cast<double>(n_labels);
    if (first || mean > report.best_layer_mean) {
      report.best_layer_by_mean = layer;
      report.best_layer_mean = mean;
      first = false;
    }
  }
  return report;
}

std::string format_best_layer_report(const BestLayerReport& report) {
  std::string out = "label,best_layer,f1,window_s,pooling\n";
  for (const auto& b : report.per_label) {
    out += b.label + ',' + std::to_string(b.layer) + ',' + format_double(b.f1) + ',' +
           format_double(b.window_s) + ',' + b.pooling + '\n';
  }
  out += "mean_of_per_label_bests," + format_double(report.macro_of_bests) + '\n';
  out += "best_layer_by_mean," + std::to_string(report.best_layer_by_mean) + ',' +
         format_double(report.best_layer_mean) + '\n';
  return out;
}

}  // namespace layerprobe
