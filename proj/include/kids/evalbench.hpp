#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kids/ingest.hpp"
#include "kids/matrix.hpp"

namespace kids {

struct MetricBundle {
  std::string name;
  std::size_t n_classes = 0;
  std::vector<std::size_t> confusion;  // row-major C x C, rows = truth
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision, recall, f1, specificity;  // one-vs-rest
  bool has_binary_specificity = false;
  double binary_specificity = 0.0;  // class 1 treated as positive when C == 2

  // deployment metrics, filled by the bench harness / callers
  double latency_mean_ms = 0.0;
  double latency_p95_ms = 0.0;
  double throughput_samples_per_s = 0.0;
  std::size_t model_params = 0;
  double model_kb = 0.0;
  double speedup_vs_reference = 1.0;
  double compression_vs_reference = 1.0;

  std::size_t at(std::size_t truth, std::size_t pred) const {
    return confusion[truth * n_classes + pred];
  }
};

// Counts, accuracy, per-class precision/recall/F1/specificity, macro-F1.
// Zero-denominator rates become 0 with a warning; classes absent from the
// truth are excluded from the macro-F1 mean with a warning.
MetricBundle confusion_and_metrics(const std::vector<int>& truth,
                                   const std::vector<int>& pred,
                                   std::size_t n_classes,
                                   Warnings* warnings = nullptr);

/// Nearest-rank percentile: sorted[ceil(q * n) - 1]. q in (0, 1].
double nearest_rank_percentile(std::vector<double> samples, double q);

struct BenchResult {
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double throughput_samples_per_s = 0.0;
  std::vector<double> samples_ms;
};

// Monotonic nanosecond clock; injectable so tests can fake durations.
using ClockFn = std::function<std::uint64_t()>;

// Runs `warmup` untimed passes (the clock is not consulted), then `repeats`
// timed ones. A zero-duration reading is retried once, then raises. The timed
// region is the bare forward pass; single-threaded by construction.
BenchResult bench_latency(const std::function<void()>& pass,
                          std::size_t batch_rows, std::size_t warmup,
                          std::size_t repeats, ClockFn clock = nullptr);

struct Comparison {
  double speedup;      // reference latency / candidate latency
  double compression;  // reference KB / candidate KB
};
Comparison compare_models(const MetricBundle& reference,
                          const MetricBundle& candidate);

// The bench.csv table (deployment columns only), one row per bundle.
std::string bench_csv_text(const std::vector<MetricBundle>& bundles);

// Writes metrics.json (stable key order), one confusion_<name>.csv per
// bundle, and bench.csv into out_dir. Byte-deterministic for equal inputs.
// extra_metadata_json, when nonempty, must parse as a json object; it is
// embedded under "run".
void emit_report(const std::vector<MetricBundle>& bundles,
                 const std::vector<std::string>& class_names,
                 const std::string& out_dir,
                 const std::string& extra_metadata_json = "");

}  // namespace kids
