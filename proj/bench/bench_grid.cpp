// Times the serial reference sweep against the cached OpenMP sweep on a
// synthetic store, and checks that both produce the same table.
//
//   bench_grid [threads] [n_speakers] [work_dir]

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "layerprobe/runner.hpp"
#include "layerprobe/synth.hpp"

namespace {

template <typename F>
double time_ms(F&& f) {
  const auto t0 = std::chrono::high_resolution_clock::now();
  f();
  const auto t1 = std::chrono::high_resolution_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  int threads = omp_get_max_threads();
#else
  int threads = 1;
#endif
  if (argc > 1) threads = std::atoi(argv[1]);
  const int speakers = argc > 2 ? std::atoi(argv[2]) : 40;
  const std::filesystem::path dir =
      argc > 3 ? std::filesystem::path(argv[3])
               : std::filesystem::temp_directory_path() / "layerprobe_bench";

  layerprobe::SynthSpec spec;
  spec.n_speakers = speakers;
  spec.recordings_per_speaker = 2;
  spec.duration_min_s = 20.0;
  spec.duration_max_s = 40.0;
  spec.n_layers = 3;
  spec.window_sparsity = 0.3;
  spec.effect_size = 1.0;
  spec.seed = 7;
  std::filesystem::remove_all(dir);
  layerprobe::generate(spec, dir);

  layerprobe::ExperimentConfig config;
  config.store_root = dir;
  config.manifest_path = dir / layerprobe::kSynthManifestName;
  config.labels = {"dep"};
  config.window_sizes_s = {1, 5, 20};

  std::cout << "grid: 1 label x " << spec.n_layers << " layers x "
            << config.window_sizes_s.size() << " windows x " << config.poolings.size()
            << " poolings, " << speakers * spec.recordings_per_speaker << " recordings\n";

  layerprobe::ResultTable serial;
  const double serial_ms =
      time_ms([&] { serial = layerprobe::run_grid_reference(config); });
  std::cout << "serial reference (no cache):   " << serial_ms << " ms\n";

  config.parallelism = 1;
  layerprobe::ResultTable cached;
  const double cached_ms = time_ms([&] { cached = layerprobe::run_grid(config); });
  std::cout << "cached, 1 thread:              " << cached_ms << " ms\n";

  config.parallelism = threads;
  layerprobe::ResultTable parallel;
  layerprobe::RunStats stats;
  const double parallel_ms =
      time_ms([&] { parallel = layerprobe::run_grid(config, {true, &stats}); });
  std::cout << "cached, " << threads << " thread(s):            " << parallel_ms << " ms ("
            << stats.probe_fits << " fits, " << stats.cache_hits << " cache hits)\n";

  const bool same = layerprobe::results_to_csv(serial) == layerprobe::results_to_csv(cached) &&
                    layerprobe::results_to_csv(cached) == layerprobe::results_to_csv(parallel);
  std::cout << "tables identical: " << (same ? "yes" : "NO") << "\n";
  std::filesystem::remove_all(dir);
  return same ? 0 : 1;
}
