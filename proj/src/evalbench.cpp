#include "kids/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>

#include "json.hpp"

#include "kids/errors.hpp"
#include "kids/ioutil.hpp"

namespace kids {

using ordered_json = nlohmann::ordered_json;

MetricBundle confusion_and_metrics(const std::vector<int>& truth,
                                   const std::vector<int>& pred,
                                   std::size_t n_classes,
                                   Warnings* warnings) {
  if (truth.empty()) throw DataError("metrics on empty label set");
  if (truth.size() != pred.size())
    throw DataError("truth and prediction lengths differ: " +
                    std::to_string(truth.size()) + " vs " +
                    std::to_string(pred.size()));
  MetricBundle m;
  m.n_classes = n_classes;
  m.confusion.assign(n_classes * n_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    int t = truth[i], p = pred[i];
    if (t < 0 || static_cast<std::size_t>(t) >= n_classes || p < 0 ||
        static_cast<std::size_t>(p) >= n_classes)
      throw DataError("label outside [0, " + std::to_string(n_classes) +
                      ") at row " + std::to_string(i));
    ++m.confusion[static_cast<std::size_t>(t) * n_classes +
                  static_cast<std::size_t>(p)];
  }

  const double total = static_cast<double>(truth.size());
  std::size_t diag = 0;
  for (std::size_t c = 0; c < n_classes; ++c) diag += m.at(c, c);
  m.accuracy = static_cast<double>(diag) / total;

  m.precision.assign(n_classes, 0.0);
  m.recall.assign(n_classes, 0.0);
  m.f1.assign(n_classes, 0.0);
  m.specificity.assign(n_classes, 0.0);
  double f1_sum = 0.0;
  std::size_t f1_classes = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t tp = m.at(c, c);
    std::size_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < n_classes; ++o) {
      if (o == c) continue;
      fp += m.at(o, c);
      fn += m.at(c, o);
    }
    std::size_t tn = truth.size() - tp - fp - fn;
    std::size_t support = tp + fn;

    if (tp + fp == 0) {
      warn(warnings, "class " + std::to_string(c) +
                         " never predicted; precision set to 0");
      m.precision[c] = 0.0;
    } else {
      m.precision[c] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    }
    if (support == 0) {
      m.recall[c] = 0.0;
    } else {
      m.recall[c] = static_cast<double>(tp) / static_cast<double>(support);
    }
    m.f1[c] = (m.precision[c] + m.recall[c] > 0.0)
                  ? 2.0 * m.precision[c] * m.recall[c] /
                        (m.precision[c] + m.recall[c])
                  : 0.0;
    m.specificity[c] = (tn + fp > 0)
                           ? static_cast<double>(tn) / static_cast<double>(tn + fp)
                           : 0.0;
    if (support == 0) {
      warn(warnings, "class " + std::to_string(c) +
                         " absent from truth; excluded from macro-F1");
    } else {
      f1_sum += m.f1[c];
      ++f1_classes;
    }
  }
  m.macro_f1 = f1_classes > 0 ? f1_sum / static_cast<double>(f1_classes) : 0.0;
  if (n_classes == 2) {
    m.has_binary_specificity = true;
    m.binary_specificity = m.specificity[1];  // class 1 as the positive class
  }
  return m;
}

double nearest_rank_percentile(std::vector<double> samples, double q) {
  if (samples.empty())
    throw std::invalid_argument("percentile of an empty sample set");
  if (q <= 0.0 || q > 1.0)
    throw std::invalid_argument("percentile q must lie in (0, 1]");
  std::sort(samples.begin(), samples.end());
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(samples.size())));
  return samples[rank - 1];
}

BenchResult bench_latency(const std::function<void()>& pass,
                          std::size_t batch_rows, std::size_t warmup,
                          std::size_t repeats, ClockFn clock) {
  if (repeats < 20)
    throw std::invalid_argument("bench needs at least 20 repeats, got " +
                                std::to_string(repeats));
  if (warmup < 1) throw std::invalid_argument("bench needs at least 1 warmup pass");
  if (!pass) throw std::invalid_argument("bench needs a forward pass callable");
  if (!clock) {
    clock = []() {
      return static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(
              std::chrono::steady_clock::now().time_since_epoch())
              .count());
    };
  }
  for (std::size_t i = 0; i < warmup; ++i) pass();

  BenchResult r;
  r.samples_ms.reserve(repeats);
  std::uint64_t total_ns = 0;
  for (std::size_t i = 0; i < repeats; ++i) {
    std::uint64_t ns = 0;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::uint64_t t0 = clock();
      pass();
      std::uint64_t t1 = clock();
      if (t1 > t0) {
        ns = t1 - t0;
        break;
      }
      // zero or backwards reading: retry once
    }
    if (ns == 0)
      throw NumericError(
          "benchmark clock produced a zero-duration reading twice; timer "
          "resolution is too coarse for this workload");
    total_ns += ns;
    r.samples_ms.push_back(static_cast<double>(ns) / 1e6);
  }
  double sum = 0.0;
  for (double v : r.samples_ms) sum += v;
  r.mean_ms = sum / static_cast<double>(repeats);
  r.p95_ms = nearest_rank_percentile(r.samples_ms, 0.95);
  r.throughput_samples_per_s =
      static_cast<double>(batch_rows * repeats) /
      (static_cast<double>(total_ns) / 1e9);
  return r;
}

Comparison compare_models(const MetricBundle& reference,
                          const MetricBundle& candidate) {
  if (candidate.latency_mean_ms == 0.0 || candidate.model_kb == 0.0)
    throw std::invalid_argument(
        "compare_models: candidate has zero latency or size; cannot divide");
  return {reference.latency_mean_ms / candidate.latency_mean_ms,
          reference.model_kb / candidate.model_kb};
}

namespace {

ordered_json bundle_json(const MetricBundle& b) {
  ordered_json j;
  j["name"] = b.name;
  j["accuracy"] = b.accuracy;
  j["macro_f1"] = b.macro_f1;
  j["per_class"] = {{"precision", b.precision},
                    {"recall", b.recall},
                    {"f1", b.f1},
                    {"specificity", b.specificity}};
  if (b.has_binary_specificity) j["binary_specificity"] = b.binary_specificity;
  j["latency_mean_ms"] = b.latency_mean_ms;
  j["latency_p95_ms"] = b.latency_p95_ms;
  j["throughput_samples_per_s"] = b.throughput_samples_per_s;
  j["params"] = b.model_params;
  j["kb"] = b.model_kb;
  j["speedup_vs_reference"] = b.speedup_vs_reference;
  j["compression_vs_reference"] = b.compression_vs_reference;
  return j;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

std::string bench_csv_text(const std::vector<MetricBundle>& bundles) {
  std::string bench =
      "model,mean_ms,p95_ms,samples_per_s,params,kb,speedup,compression\n";
  for (const auto& b : bundles) {
    bench += csv_cell(b.name) + "," + fmt_real(b.latency_mean_ms) + "," +
             fmt_real(b.latency_p95_ms) + "," +
             fmt_real(b.throughput_samples_per_s) + "," +
             std::to_string(b.model_params) + "," + fmt_real(b.model_kb) +
             "," + fmt_real(b.speedup_vs_reference) + "," +
             fmt_real(b.compression_vs_reference) + "\n";
  }
  return bench;
}

void emit_report(const std::vector<MetricBundle>& bundles,
                 const std::vector<std::string>& class_names,
                 const std::string& out_dir,
                 const std::string& extra_metadata_json) {
  if (bundles.empty()) throw std::invalid_argument("emit_report: no bundles");
  std::filesystem::create_directories(out_dir);

  ordered_json root;
  if (!extra_metadata_json.empty()) {
    try {
      root["run"] = ordered_json::parse(extra_metadata_json);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("emit_report metadata is not valid json: ") + e.what());
    }
  }
  root["models"] = ordered_json::array();
  for (const auto& b : bundles) root["models"].push_back(bundle_json(b));
  write_file_bytes(out_dir + "/metrics.json", root.dump(2) + "\n");

  for (const auto& b : bundles) {
    std::string csv = "truth\\pred";
    for (const auto& n : class_names) csv += "," + csv_cell(n);
    csv += "\n";
    for (std::size_t t = 0; t < b.n_classes; ++t) {
      csv += csv_cell(class_names.at(t));
      for (std::size_t p = 0; p < b.n_classes; ++p)
        csv += "," + std::to_string(b.at(t, p));
      csv += "\n";
    }
    write_file_bytes(out_dir + "/confusion_" + b.name + ".csv", csv);
  }

  write_file_bytes(out_dir + "/bench.csv", bench_csv_text(bundles));
}

}  // namespace kids
