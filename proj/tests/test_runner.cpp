#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "layerprobe/error.hpp"
#include "layerprobe/runner.hpp"
#include "layerprobe/synth.hpp"
#include "support.hpp"

using namespace layerprobe;

namespace {

struct Fixture {
  testsupport::TempDir dir{"runner"};
  Manifest manifest;

  Fixture() {
    SynthSpec s;
    s.n_speakers = 25;
    s.recordings_per_speaker = 1;
    s.duration_min_s = 6;
    s.duration_max_s = 9;
    s.dim = 6;
    s.n_layers = 3;
    s.signal_layers = {1};
    s.effect_size = 2;
    s.window_sparsity = 0.4;
    s.seed = 3;
    manifest = generate(s, dir.path());
  }

  ExperimentConfig config() const {
    ExperimentConfig c;
    c.store_root = dir.path();
    c.manifest_path = dir / kSynthManifestName;
    c.labels = {"dep"};
    c.layers = std::vector<std::uint32_t>{0, 1};
    c.window_sizes_s = {0.5, 2.0};
    c.poolings = {PoolingStrategy::max(), PoolingStrategy::mean(),
                  PoolingStrategy::mellowmax(10)};
    return c;
  }
};

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

ResultRow row(const std::string& label, std::uint32_t layer, double f1) {
  ResultRow r;
  r.label = label;
  r.layer = layer;
  r.window_s = 1;
  r.pooling = "mean";
  r.f1 = f1;
  return r;
}

}  // namespace

TEST_SUITE("runner") {
  TEST_CASE("defaults") {
    CHECK(default_window_sizes() == std::vector<double>{0.5, 1, 2, 5, 10, 15, 20});
    std::vector<std::string> names;
    for (const auto& p : default_poolings()) names.push_back(p.to_string());
    CHECK(names == std::vector<std::string>{"min", "mean", "max", "mm:0.1", "mm:-0.1", "mm:1",
                                            "mm:-1", "mm:10", "mm:-10", "mm:100", "mm:-100"});
  }

  TEST_CASE("grid shape, ordering and serialization") {
    Fixture fx;
    const auto table = run_grid(fx.config());
    REQUIRE(table.rows.size() == 12);
    CHECK(table.all_ok());
    std::vector<std::string> order;
    for (std::size_t i = 0; i < 3; ++i) order.push_back(table.rows[i].pooling);
    CHECK(order == std::vector<std::string>{"mean", "mm:10", "max"});
    CHECK(table.rows[0].layer == 0);
    CHECK(table.rows[0].window_s == 0.5);
    CHECK(table.rows[11].layer == 1);
    CHECK(table.rows[11].window_s == 2.0);
    CHECK(table.provenance.engine_version == kEngineVersion);
    CHECK(table.provenance.config_hash.size() == 16);

    const auto csv = results_to_csv(table);
    CHECK(count_lines(csv) == 13);
    CHECK(csv.rfind("label,layer,window_s,pooling,protocol,f1,per_fold_f1,tp,fp,fn,tn,status\n",
                    0) == 0);
    CHECK(csv.find(",mm:10,") != std::string::npos);

    const auto back = results_from_json(results_to_json(table));
    CHECK(back == table);

    const auto from_csv = results_from_csv(csv);
    REQUIRE(from_csv.rows.size() == 12);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(from_csv.rows[i].f1 == table.rows[i].f1);
      CHECK(from_csv.rows[i].per_fold_f1 == table.rows[i].per_fold_f1);
      CHECK(from_csv.rows[i].counts == table.rows[i].counts);
      CHECK(from_csv.rows[i].pooling == table.rows[i].pooling);
    }

    testsupport::TempDir out("runner_out");
    emit_results(table, OutputFormat::Json, out / "r.json");
    emit_results(table, OutputFormat::Csv, out / "r.csv");
    CHECK(read_results(out / "r.json") == table);
    CHECK(read_results(out / "r.csv").rows.size() == 12);
    CHECK_THROWS_AS(emit_results(ResultTable{}, OutputFormat::Csv, out / "e.csv"), Error);
  }

  TEST_CASE("reruns, parallel runs and the uncached reference agree") {
    Fixture fx;
    auto config = fx.config();
    const auto a = run_grid(config);
    const auto b = run_grid(config);
    CHECK(results_to_csv(a) == results_to_csv(b));

    config.parallelism = 4;
    const auto par = run_grid(config);
    CHECK(results_to_csv(par) == results_to_csv(a));
    CHECK(par.rows == a.rows);
    CHECK(par.provenance.config_hash == a.provenance.config_hash);

    const auto ref = run_grid_reference(fx.config());
    CHECK(ref.rows == a.rows);
    CHECK(run_grid(fx.config(), RunOptions{false, nullptr}).rows == a.rows);
  }

  TEST_CASE("probe fits are shared across poolings") {
    Fixture fx;
    RunStats stats;
    const auto table = run_grid(fx.config(), RunOptions{true, &stats});
    // 1 label x 2 layers x 2 windows x 5 folds trained once each.
    CHECK(stats.probe_fits == 20);
    CHECK(stats.cache_hits == 12 * 5);
    for (std::size_t cell = 0; cell < 4; ++cell) {
      const auto& first = table.rows[cell * 3];
      for (std::size_t k = 1; k < 3; ++k) {
        const auto& other = table.rows[cell * 3 + k];
        CHECK(other.probe_ids == first.probe_ids);
        CHECK(other.n_train_recordings == first.n_train_recordings);
        CHECK(other.n_test_recordings == first.n_test_recordings);
        CHECK(other.n_train_windows == first.n_train_windows);
        CHECK(other.n_test_windows == first.n_test_windows);
      }
    }
    CHECK(table.rows[0].probe_ids != table.rows[3].probe_ids);
  }

  TEST_CASE("middle-window protocol collapses the pooling axis") {
    Fixture fx;
    auto config = fx.config();
    config.protocol.aggregation = Aggregation::middle_only();
    const auto table = run_grid(config);
    REQUIRE(table.rows.size() == 4);
    for (const auto& r : table.rows) CHECK(r.pooling == "middle");
    CHECK(run_grid_reference(config).rows == table.rows);
  }

  TEST_CASE("cell failures are recorded per row") {
    Fixture fx;
    Manifest m = fx.manifest;
    m.label_definitions["rare"] = {"rare", 1, true};
    for (std::size_t i = 0; i < m.records.size(); ++i) m.records[i].labels["rare"] = i == 0;
    save_manifest(m, fx.dir / "rare.json");
    auto config = fx.config();
    config.manifest_path = fx.dir / "rare.json";
    config.labels = {"dep", "rare"};
    const auto table = run_grid(config);
    REQUIRE(table.rows.size() == 24);
    CHECK_FALSE(table.all_ok());
    for (const auto& r : table.rows) {
      if (r.label == "dep") {
        CHECK(r.ok());
      } else {
        CHECK(r.status.rfind("error: fold ", 0) == 0);
        CHECK(r.status.find("degenerate") != std::string::npos);
      }
    }
    CHECK(run_grid_reference(config).rows == table.rows);
    CHECK(results_from_json(results_to_json(table)) == table);
  }

  TEST_CASE("config errors") {
    Fixture fx;
    auto config = fx.config();
    config.labels = {"unknown"};
    CHECK_THROWS_AS(run_grid(config), ConfigError);

    config = fx.config();
    config.split_from_manifest = false;
    config.protocol.split = {DatasetProtocol::Kind::KFold, 3};
    CHECK_THROWS_AS(run_grid(config), ConfigError);

    config = fx.config();
    config.layers = std::vector<std::uint32_t>{7};
    CHECK_THROWS_AS(run_grid(config), ConfigError);

    config = fx.config();
    config.manifest_path = fx.dir / "missing.json";
    CHECK_THROWS_AS(run_grid(config), Error);
  }

  TEST_CASE("config parsing") {
    const auto c = parse_experiment_config(R"({
      "store_root": "store", "manifest_path": "store/manifest.json",
      "labels": ["dep"], "layers": [2, 0], "window_sizes_s": [1, 5],
      "poolings": ["max", "mm:-10"],
      "protocol": {"kind": "kfold", "k": 5, "aggregation": "middle_window",
                   "undersample_majority": true, "seed": 9},
      "probe": {"l2_lambda": 0.5, "class_weighting": "balanced"},
      "parallelism": 3, "output": {"path": "out.json", "format": "json"}})",
                                           "/base");
    CHECK(c.store_root == std::filesystem::path("/base/store"));
    CHECK(*c.layers == std::vector<std::uint32_t>{2, 0});
    CHECK(c.poolings[1] == PoolingStrategy::mellowmax(-10));
    CHECK_FALSE(c.split_from_manifest);
    CHECK(c.protocol.split.k == 5);
    CHECK(c.protocol.aggregation.kind == Aggregation::Kind::MiddleWindowOnly);
    CHECK(c.protocol.undersample_majority);
    CHECK(c.protocol.seed == 9);
    CHECK(c.probe.l2_lambda == 0.5);
    CHECK(c.probe.class_weighting == ClassWeighting::BalancedInverseFrequency);
    CHECK(c.parallelism == 3);
    CHECK(c.output_format == OutputFormat::Json);
    CHECK(*c.output_path == std::filesystem::path("/base/out.json"));

    const auto again = parse_experiment_config(experiment_config_to_json(c));
    CHECK(experiment_config_to_json(again) == experiment_config_to_json(c));

    const auto defaults = parse_experiment_config(
        R"({"store_root": "/s", "manifest_path": "/s/m.json", "labels": ["a"]})");
    CHECK_FALSE(defaults.layers.has_value());
    CHECK(defaults.split_from_manifest);
    CHECK(defaults.poolings.size() == 11);

    for (const char* bad : {
             R"({"manifest_path": "m", "labels": ["a"]})",
             R"({"store_root": "s", "manifest_path": "m", "labels": []})",
             R"({"store_root": "s", "manifest_path": "m", "labels": ["a"], "poolings": ["mm:0"]})",
             R"({"store_root": "s", "manifest_path": "m", "labels": ["a"], "window_sizes_s": [0]})",
             R"({"store_root": "s", "manifest_path": "m", "labels": ["a"], "protocol": {"kind": "x"}})",
             R"({"store_root": "s", "manifest_path": "m", "labels": ["a"], "parallelism": 0})",
             "not json"}) {
      CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);
    }
  }

  TEST_CASE("seed override from the environment") {
    const char* text =
        R"({"store_root": "/s", "manifest_path": "/s/m.json", "labels": ["a"],
            "protocol": {"kind": "manifest", "seed": 4}})";
    ::setenv("LAYERPROBE_SEED", "1234", 1);
    const auto c = parse_experiment_config(text);
    ::setenv("LAYERPROBE_SEED", "12x", 1);
    CHECK_THROWS_AS(parse_experiment_config(text), ConfigError);
    ::unsetenv("LAYERPROBE_SEED");
    CHECK(c.protocol.seed == 1234);
    CHECK(parse_experiment_config(text).protocol.seed == 4);
  }

  TEST_CASE("seed changes results only through undersampling") {
    Fixture fx;
    auto config = fx.config();
    config.protocol.seed = 1;
    const auto a = run_grid(config);
    config.protocol.seed = 2;
    const auto b = run_grid(config);
    CHECK(a.provenance.protocol_seed == 1);
    CHECK(b.provenance.protocol_seed == 2);
    CHECK(a.provenance.config_hash != b.provenance.config_hash);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].f1 == b.rows[i].f1);
  }

  TEST_CASE("best layer report") {
    ResultTable t;
    t.rows = {row("a", 0, 0.3), row("a", 1, 0.9), row("a", 2, 0.9)};
    auto rep = best_layer_report(t);
    REQUIRE(rep.per_label.size() == 1);
    CHECK(rep.per_label[0].layer == 1);
    CHECK(rep.per_label[0].f1 == 0.9);

    t.rows = {row("solo", 4, 0.2)};
    CHECK(best_layer_report(t).per_label[0].layer == 4);

    t.rows = {row("a", 0, 0.4), row("b", 0, 0.1), row("b", 1, 0.6), row("a", 1, 0.2)};
    rep = best_layer_report(t);
    CHECK(rep.macro_of_bests == doctest::Approx(0.5));
    CHECK(rep.best_layer_by_mean == 1);  // (0.2 + 0.6) / 2 beats (0.4 + 0.1) / 2
    CHECK(rep.best_layer_mean == doctest::Approx(0.4));

    auto failed = row("a", 3, 1.0);
    failed.status = "error: fold 0: degenerate";
    t.rows.push_back(failed);
    CHECK(best_layer_report(t).per_label[0].layer == 0);
    CHECK_FALSE(format_best_layer_report(rep).empty());
  }

  TEST_CASE("validate_experiment") {
    Fixture fx;
    CHECK(validate_experiment(fx.config()).ok());
    std::filesystem::remove(fx.dir / embedding_file_name(fx.manifest.records[2].recording_id, 1));
    const auto report = validate_experiment(fx.config());
    CHECK_FALSE(report.ok());
    CHECK_THROWS_AS(run_grid(fx.config()), ConfigError);
  }
}
