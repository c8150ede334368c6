// layerprobe command-line front end.
//
//   layerprobe validate --store DIR --manifest FILE
//   layerprobe run --config FILE [--parallelism N] [--out FILE --format csv|json]
//   layerprobe report --in FILE --best-layer
//   layerprobe synth --spec FILE --out DIR
//
// Exit codes: 0 success, 1 one or more grid cells failed, 2 config/validation error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "layerprobe/error.hpp"
#include "layerprobe/manifest.hpp"
#include "layerprobe/runner.hpp"
#include "layerprobe/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCellFailure = 1;
constexpr int kExitConfig = 2;

int cmd_validate(const std::string& store, const std::string& manifest_path,
                 const std::vector<std::uint32_t>& layers, std::optional<double> min_window) {
  const auto manifest = layerprobe::load_manifest(manifest_path);
  layerprobe::ValidationOptions options;
  options.layers = layers;
  options.min_window_s = min_window;
  const auto report = layerprobe::validate_manifest(manifest, store, options);
  for (const auto& e : report.errors) {
    std::cout << "error\t" << e.recording_id << '\t' << e.description << '\n';
  }
  for (const auto& w : report.warnings) {
    std::cout << "warning\t" << w.recording_id << '\t' << w.description << '\n';
  }
  std::cout << manifest.records.size() << " recordings, " << report.errors.size()
            << " errors, " << report.warnings.size() << " warnings\n";
  return report.ok() ? kExitOk : kExitConfig;
}

int cmd_run(const std::string& config_path, std::optional<int> parallelism,
            std::optional<std::string> out, std::optional<std::string> format) {
  auto config = layerprobe::load_experiment_config(config_path);
  if (parallelism) {
    if (*parallelism < 1) throw layerprobe::ConfigError("--parallelism must be >= 1");
    config.parallelism = *parallelism;
  }
  if (out) config.output_path = *out;
  if (format) {
    config.output_format =
        *format == "json" ? layerprobe::OutputFormat::Json : layerprobe::OutputFormat::Csv;
  }

  const auto table = layerprobe::run_grid(config);
  if (config.output_path) {
    layerprobe::emit_results(table, config.output_format, *config.output_path);
    std::cerr << table.rows.size() << " rows written to " << config.output_path->string()
              << " in " << table.provenance.wall_clock_s << " s\n";
  } else {
    std::cout << (config.output_format == layerprobe::OutputFormat::Json
                      ? layerprobe::results_to_json(table)
                      : layerprobe::results_to_csv(table));
  }
  std::size_t failed = 0;
  for (const auto& r : table.rows) failed += r.ok() ? 0 : 1;
  if (failed > 0) {
    std::cerr << failed << " of " << table.rows.size() << " cells failed\n";
    return kExitCellFailure;
  }
  return kExitOk;
}

int cmd_report(const std::string& in, bool best_layer) {
  const auto table = layerprobe::read_results(in);
  if (!best_layer) {
    std::cout << layerprobe::results_to_csv(table);
    return kExitOk;
  }
  std::cout << layerprobe::format_best_layer_report(layerprobe::best_layer_report(table));
  return kExitOk;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const auto spec = layerprobe::load_synth_spec(spec_path);
  const auto manifest = layerprobe::generate(spec, out_dir);
  std::cout << "wrote " << manifest.records.size() << " recordings x " << spec.n_layers
            << " layers to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise probing of speech embeddings"};
  app.require_subcommand(1);

  std::string store;
  std::string manifest;
  std::vector<std::uint32_t> layers;
  std::optional<double> min_window;
  auto* validate = app.add_subcommand("validate", "Check a store against its manifest");
  validate->add_option("--store", store, "Embedding store directory")->required();
  validate->add_option("--manifest", manifest, "Manifest JSON")->required();
  validate->add_option("--layers", layers, "Layers to check (default: all)");
  validate->add_option("--min-window", min_window, "Warn below this duration (s)");

  std::string config;
  std::optional<int> parallelism;
  std::optional<std::string> out;
  std::optional<std::string> format;
  auto* run = app.add_subcommand("run", "Evaluate the configured grid");
  run->add_option("--config", config, "Experiment config JSON")->required();
  run->add_option("--parallelism", parallelism, "Worker threads");
  run->add_option("--out", out, "Output file (default: stdout)");
  run->add_option("--format", format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}));

  std::string in;
  bool best_layer = false;
  auto* report = app.add_subcommand("report", "Summarize a results file");
  report->add_option("--in", in, "Results CSV or JSON")->required();
  report->add_flag("--best-layer", best_layer, "Best layer per label plus macro mean");

  std::string spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a planted-signal dataset");
  synth->add_option("--spec", spec, "Synth spec JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(store, manifest, layers, min_window);
    if (*run) return cmd_run(config, parallelism, out, format);
    if (*report) return cmd_report(in, best_layer);
    if (*synth) return cmd_synth(spec, synth_out);
  } catch (const layerprobe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}
