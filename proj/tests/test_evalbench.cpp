#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "kids/errors.hpp"
#include "kids/evalbench.hpp"
#include "kids/ioutil.hpp"
#include "kids/rng.hpp"

using kids::BenchResult;
using kids::confusion_and_metrics;
using kids::MetricBundle;
using kids::SeededRng;
using kids::Warnings;

namespace {

// fake clock fed by a pre-baked list of absolute nanosecond readings
struct ScriptedClock {
  std::vector<std::uint64_t> readings;
  std::size_t next = 0;
  std::uint64_t operator()() {
    REQUIRE(next < readings.size());
    return readings[next++];
  }
};

// readings for `repeats` timed passes taking the given per-pass durations (ms)
std::vector<std::uint64_t> pair_readings(const std::vector<double>& durations_ms) {
  std::vector<std::uint64_t> r;
  std::uint64_t now = 17;
  for (double d : durations_ms) {
    r.push_back(now);
    now += static_cast<std::uint64_t>(d * 1e6);
    r.push_back(now);
  }
  return r;
}

std::string slurp(const std::string& path) {
  return kids::read_file_bytes(path);
}

}  // namespace

TEST_CASE("hand-checked 2-class confusion") {
  std::vector<int> truth = {1, 1, 0, 0};
  std::vector<int> pred = {1, 0, 0, 0};
  Warnings w;
  MetricBundle m = confusion_and_metrics(truth, pred, 2, &w);

  CHECK(m.at(0, 0) == 2);
  CHECK(m.at(0, 1) == 0);
  CHECK(m.at(1, 0) == 1);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.accuracy == doctest::Approx(0.75));
  CHECK(m.precision[1] == doctest::Approx(1.0));
  CHECK(m.recall[1] == doctest::Approx(0.5));
  CHECK(m.f1[1] == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1[0] == doctest::Approx(0.8));
  CHECK(m.macro_f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2.0));
  CHECK(m.macro_f1 == doctest::Approx(0.7333).epsilon(1e-3));
  // class-1-positive view: no false positives among the two truth-0 rows
  CHECK(m.has_binary_specificity);
  CHECK(m.binary_specificity == doctest::Approx(1.0));
  CHECK(w.empty());
}

TEST_CASE("perfect predictions") {
  std::vector<int> truth = {0, 1, 2, 0, 1, 2};
  MetricBundle m = confusion_and_metrics(truth, truth, 3, nullptr);
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t p = 0; p < 3; ++p)
      if (t != p) CHECK(m.at(t, p) == 0);
}

TEST_CASE("degenerate all-one-class predictor") {
  std::vector<int> truth = {0, 0, 1, 1};
  std::vector<int> pred = {1, 1, 1, 1};
  Warnings w;
  MetricBundle m = confusion_and_metrics(truth, pred, 2, &w);
  // predicted-positive class view: every negative is a false positive
  CHECK(m.specificity[1] == 0.0);
  CHECK(m.precision[0] == 0.0);  // never predicted, by convention
  CHECK_FALSE(w.empty());
  CHECK(m.macro_f1 == doctest::Approx((0.0 + 2.0 * 0.5 * 1.0 / 1.5) / 2.0));
}

TEST_CASE("confusion entries sum to row count; accuracy equals trace/total") {
  SeededRng rng(99);
  const std::size_t n = 500, c = 7;
  std::vector<int> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = static_cast<int>(rng.uniform_u64(c));
    pred[i] = static_cast<int>(rng.uniform_u64(c));
  }
  MetricBundle m = confusion_and_metrics(truth, pred, c, nullptr);
  std::size_t total = std::accumulate(m.confusion.begin(), m.confusion.end(),
                                      std::size_t{0});
  CHECK(total == n);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (truth[i] == pred[i]) ++agree;
  CHECK(m.accuracy == doctest::Approx(static_cast<double>(agree) / n));
  for (std::size_t k = 0; k < c; ++k) {
    CHECK(m.precision[k] >= 0.0);
    CHECK(m.precision[k] <= 1.0);
    CHECK(m.recall[k] >= 0.0);
    CHECK(m.recall[k] <= 1.0);
    CHECK(m.f1[k] >= 0.0);
    CHECK(m.f1[k] <= 1.0);
    CHECK(m.specificity[k] >= 0.0);
    CHECK(m.specificity[k] <= 1.0);
  }
}

TEST_CASE("macro-F1 is invariant under class relabeling") {
  SeededRng rng(7);
  const std::size_t n = 300, c = 5;
  std::vector<int> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = static_cast<int>(rng.uniform_u64(c));
    pred[i] = static_cast<int>(rng.uniform_u64(c));
  }
  std::vector<int> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> ord(c);
  std::iota(ord.begin(), ord.end(), 0);
  rng.shuffle(ord);
  for (std::size_t i = 0; i < c; ++i) perm[i] = static_cast<int>(ord[i]);

  std::vector<int> truth2(n), pred2(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth2[i] = perm[static_cast<std::size_t>(truth[i])];
    pred2[i] = perm[static_cast<std::size_t>(pred[i])];
  }
  MetricBundle a = confusion_and_metrics(truth, pred, c, nullptr);
  MetricBundle b = confusion_and_metrics(truth2, pred2, c, nullptr);
  CHECK(a.macro_f1 == doctest::Approx(b.macro_f1).epsilon(1e-12));
  CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
}

TEST_CASE("classes absent from truth are excluded from macro-F1") {
  std::vector<int> truth = {0, 0, 1, 1};
  std::vector<int> pred = {0, 0, 1, 0};
  Warnings w;
  MetricBundle m = confusion_and_metrics(truth, pred, 3, &w);
  bool mentioned = false;
  for (const auto& s : w) mentioned = mentioned || s.find("absent") != std::string::npos;
  CHECK(mentioned);
  // mean over classes 0 and 1 only
  double f0 = 2.0 * (2.0 / 3.0) * 1.0 / (2.0 / 3.0 + 1.0);
  double f1 = 2.0 * 1.0 * 0.5 / 1.5;
  CHECK(m.macro_f1 == doctest::Approx((f0 + f1) / 2.0));
}

TEST_CASE("metric input validation") {
  CHECK_THROWS_AS(confusion_and_metrics({}, {}, 2, nullptr), kids::DataError);
  CHECK_THROWS_AS(confusion_and_metrics({0, 1}, {0}, 2, nullptr), kids::DataError);
  CHECK_THROWS_AS(confusion_and_metrics({0, 2}, {0, 1}, 2, nullptr),
                  kids::DataError);
  CHECK_THROWS_AS(confusion_and_metrics({0, -1}, {0, 1}, 2, nullptr),
                  kids::DataError);
}

TEST_CASE("nearest-rank percentile") {
  CHECK(kids::nearest_rank_percentile({4.0, 4.0, 4.0, 4.0}, 0.95) == 4.0);
  CHECK(kids::nearest_rank_percentile({9.5}, 0.95) == 9.5);

  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  SeededRng rng(3);
  std::vector<std::size_t> ord(100);
  std::iota(ord.begin(), ord.end(), 0);
  rng.shuffle(ord);
  std::vector<double> shuffled(100);
  for (std::size_t i = 0; i < 100; ++i) shuffled[i] = v[ord[i]];
  CHECK(kids::nearest_rank_percentile(shuffled, 0.95) == 95.0);
  CHECK(kids::nearest_rank_percentile(shuffled, 0.5) == 50.0);
  CHECK(kids::nearest_rank_percentile(shuffled, 1.0) == 100.0);
  CHECK(kids::nearest_rank_percentile(shuffled, 0.001) == 1.0);

  CHECK_THROWS_AS(kids::nearest_rank_percentile({}, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(kids::nearest_rank_percentile({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(kids::nearest_rank_percentile({1.0}, 1.5), std::invalid_argument);
}

TEST_CASE("bench with a fixed 2 ms clock") {
  ScriptedClock clock{pair_readings(std::vector<double>(20, 2.0))};
  std::size_t calls = 0;
  BenchResult r = kids::bench_latency([&] { ++calls; }, 1024, 3, 20,
                                      [&clock] { return clock(); });
  CHECK(calls == 23);  // 3 untimed warmups + 20 timed
  CHECK(r.mean_ms == doctest::Approx(2.0));
  CHECK(r.p95_ms == doctest::Approx(2.0));
  CHECK(r.samples_ms.size() == 20);
  // throughput * mean-latency ≈ batch size
  double batch_est = r.throughput_samples_per_s * (r.mean_ms / 1e3);
  CHECK(batch_est == doctest::Approx(1024.0).epsilon(0.05));
}

TEST_CASE("bench p95 over a 1..100 ms spread") {
  std::vector<double> durations(100);
  std::iota(durations.begin(), durations.end(), 1.0);
  ScriptedClock clock{pair_readings(durations)};
  BenchResult r = kids::bench_latency([] {}, 256, 1, 100,
                                      [&clock] { return clock(); });
  CHECK(r.p95_ms == doctest::Approx(95.0));
  CHECK(r.mean_ms == doctest::Approx(50.5));
  // p95 >= median always holds (p95 >= mean does not in general)
  CHECK(r.p95_ms >= kids::nearest_rank_percentile(r.samples_ms, 0.5));
  double total_s = std::accumulate(r.samples_ms.begin(), r.samples_ms.end(), 0.0) / 1e3;
  CHECK(r.throughput_samples_per_s == doctest::Approx(256.0 * 100 / total_s));
}

TEST_CASE("bench retries a zero-duration reading once, then succeeds") {
  std::vector<double> durations(20, 2.0);
  auto readings = pair_readings(durations);
  // splice a stuck pair in front: first attempt of repeat 0 sees t1 == t0
  readings.insert(readings.begin(), {readings[0], readings[0]});
  ScriptedClock clock{readings};
  std::size_t calls = 0;
  BenchResult r = kids::bench_latency([&] { ++calls; }, 64, 1, 20,
                                      [&clock] { return clock(); });
  CHECK(calls == 22);  // 1 warmup + 1 discarded attempt + 20 timed
  CHECK(r.mean_ms == doctest::Approx(2.0));
}

TEST_CASE("bench raises after a second zero-duration reading") {
  auto stuck = [] { return std::uint64_t{42}; };
  std::size_t calls = 0;
  CHECK_THROWS_AS(
      kids::bench_latency([&] { ++calls; }, 64, 1, 20, stuck),
      kids::NumericError);
  CHECK(calls == 3);  // 1 warmup + 2 failed attempts of the first repeat
}

TEST_CASE("bench parameter validation") {
  auto noop = [] {};
  CHECK_THROWS_AS(kids::bench_latency(noop, 64, 1, 19, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(kids::bench_latency(noop, 64, 0, 20, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(kids::bench_latency(nullptr, 64, 1, 20, nullptr),
                  std::invalid_argument);
}

TEST_CASE("bench with the real clock") {
  volatile double sink = 0.0;
  BenchResult r = kids::bench_latency(
      [&] {
        double acc = 0.0;
        for (int i = 0; i < 20000; ++i) acc += static_cast<double>(i) * 1e-9;
        sink = acc;
      },
      32, 1, 20);
  CHECK(r.mean_ms > 0.0);
  CHECK(r.p95_ms >= kids::nearest_rank_percentile(r.samples_ms, 0.5));
  CHECK(r.throughput_samples_per_s > 0.0);
}

TEST_CASE("model comparison ratios") {
  MetricBundle ref, cand;
  ref.latency_mean_ms = 4.0;
  ref.model_kb = 3021.53;
  cand.latency_mean_ms = 4.0;
  cand.model_kb = 3021.53;
  kids::Comparison same = kids::compare_models(ref, cand);
  CHECK(same.speedup == doctest::Approx(1.0));
  CHECK(same.compression == doctest::Approx(1.0));

  cand.latency_mean_ms = 1.29;
  cand.model_kb = 22.29;
  kids::Comparison c = kids::compare_models(ref, cand);
  CHECK(c.compression == doctest::Approx(3021.53 / 22.29));
  CHECK(c.compression == doctest::Approx(135.6).epsilon(1e-3));
  CHECK(c.speedup == doctest::Approx(4.0 / 1.29));

  cand.model_kb = 0.0;
  CHECK_THROWS_AS(kids::compare_models(ref, cand), std::invalid_argument);
}

TEST_CASE("report emission") {
  std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  std::vector<int> pred_a = {0, 0, 1, 1, 2, 2};
  std::vector<int> pred_b = {0, 1, 1, 1, 2, 0};
  MetricBundle a = confusion_and_metrics(truth, pred_a, 3, nullptr);
  MetricBundle b = confusion_and_metrics(truth, pred_b, 3, nullptr);
  a.name = "teacher";
  b.name = "student";
  a.latency_mean_ms = 4.2;
  b.latency_mean_ms = 0.7;
  a.model_kb = 750.0;
  b.model_kb = 5.5;
  b.speedup_vs_reference = 6.0;

  std::string dir = (std::filesystem::temp_directory_path() /
                     "kids_report_test").string();
  std::filesystem::remove_all(dir);
  std::vector<std::string> names = {"normal", "dos", "probe"};
  kids::emit_report({a, b}, names, dir, "{\"seed\": 42}");

  auto bench = slurp(dir + "/bench.csv");
  CHECK(std::count(bench.begin(), bench.end(), '\n') == 3);  // header + 2 rows
  CHECK(bench.find("model,mean_ms,p95_ms,samples_per_s,params,kb,speedup,"
                   "compression\n") == 0);
  CHECK(bench.find("teacher,") != std::string::npos);
  CHECK(bench.find("student,") != std::string::npos);

  auto parsed = nlohmann::json::parse(slurp(dir + "/metrics.json"));
  CHECK(parsed["run"]["seed"] == 42);
  CHECK(parsed["models"].size() == 2);
  CHECK(parsed["models"][1]["name"] == "student");
  CHECK(parsed["models"][1]["speedup_vs_reference"] == doctest::Approx(6.0));

  // confusion csv rows sum to per-class truth counts
  auto conf = slurp(dir + "/confusion_student.csv");
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < conf.size()) {
    std::size_t nl = conf.find('\n', start);
    lines.push_back(conf.substr(start, nl - start));
    start = nl + 1;
  }
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "truth\\pred,normal,dos,probe");
  for (std::size_t t = 0; t < 3; ++t) {
    std::size_t row_sum = 0, expect = 0;
    std::string row = lines[t + 1];
    std::size_t pos = row.find(',');
    while (pos != std::string::npos) {
      std::size_t next = row.find(',', pos + 1);
      row_sum += std::stoul(row.substr(pos + 1, next - pos - 1));
      pos = next;
    }
    for (int y : truth)
      if (static_cast<std::size_t>(y) == t) ++expect;
    CHECK(row_sum == expect);
  }

  // byte-identical on re-emit
  auto before_json = slurp(dir + "/metrics.json");
  kids::emit_report({a, b}, names, dir, "{\"seed\": 42}");
  CHECK(slurp(dir + "/metrics.json") == before_json);
  CHECK(slurp(dir + "/bench.csv") == bench);

  CHECK_THROWS_AS(kids::emit_report({a}, names, dir, "not json"),
                  std::invalid_argument);
  CHECK_THROWS_AS(kids::emit_report({}, names, dir, ""),
                  std::invalid_argument);
  std::filesystem::remove_all(dir);
}
