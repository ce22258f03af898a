#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "kids/errors.hpp"
#include "kids/ingest.hpp"
#include "kids/ioutil.hpp"
#include "kids/rng.hpp"

namespace fs = std::filesystem;
using namespace kids;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::temp_directory_path() / "kids_test_ingest";
  fs::create_directories(p);
  return p;
}

Schema tiny_schema() {
  Schema s;
  s.columns = {{"f1", ColKind::kNumeric},
               {"f2", ColKind::kNumeric},
               {"label", ColKind::kLabel}};
  s.class_names = {"benign", "attack"};
  return s;
}

std::vector<std::size_t> all_rows(const RawTable& t) {
  std::vector<std::size_t> rows(t.n_rows);
  for (std::size_t i = 0; i < t.n_rows; ++i) rows[i] = i;
  return rows;
}

// Test-local decision stump: picks the best (feature, threshold) on a train
// half by exhaustive midpoint search, scores on the held-out half. Used as an
// independent oracle for synthesize separability.
double stump_holdout_accuracy(const RawTable& t) {
  std::size_t n = t.n_rows;
  std::size_t half = n / 2;
  double best_acc = 0.0;
  std::size_t best_f = 0;
  double best_thr = 0.0;
  bool best_flip = false;
  for (std::size_t f = 0; f < t.numeric_cols.size(); ++f) {
    const auto& col = t.numeric_cols[f];
    double m0 = 0, m1 = 0;
    std::size_t c0 = 0, c1 = 0;
    for (std::size_t r = 0; r < half; ++r) {
      if (t.labels[r] == 0) {
        m0 += col[r];
        ++c0;
      } else {
        m1 += col[r];
        ++c1;
      }
    }
    if (c0 == 0 || c1 == 0) continue;
    double thr = (m0 / c0 + m1 / c1) / 2.0;
    for (bool flip : {false, true}) {
      std::size_t hit = 0;
      for (std::size_t r = 0; r < half; ++r) {
        int pred = (col[r] > thr) ? 1 : 0;
        if (flip) pred = 1 - pred;
        if (pred == t.labels[r]) ++hit;
      }
      double acc = static_cast<double>(hit) / static_cast<double>(half);
      if (acc > best_acc) {
        best_acc = acc;
        best_f = f;
        best_thr = thr;
        best_flip = flip;
      }
    }
  }
  std::size_t hit = 0;
  for (std::size_t r = half; r < n; ++r) {
    int pred = (t.numeric_cols[best_f][r] > best_thr) ? 1 : 0;
    if (best_flip) pred = 1 - pred;
    if (pred == t.labels[r]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(n - half);
}

}  // namespace

TEST_CASE("schema validation") {
  Schema s = tiny_schema();
  CHECK_NOTHROW(s.validate());

  Schema no_label = s;
  no_label.columns[2].kind = ColKind::kNumeric;
  CHECK_THROWS_AS(no_label.validate(), DataError);

  Schema two_sources = s;
  two_sources.columns.push_back({"s1", ColKind::kSourceId});
  two_sources.columns.push_back({"s2", ColKind::kSourceId});
  CHECK_THROWS_AS(two_sources.validate(), DataError);

  Schema dup = s;
  dup.class_names = {"a", "a"};
  CHECK_THROWS_AS(dup.validate(), DataError);

  Schema round = Schema::from_json_text(s.to_json_text());
  CHECK(round.columns.size() == s.columns.size());
  CHECK(round.class_names == s.class_names);
  CHECK(round.columns[1].kind == ColKind::kNumeric);
}

TEST_CASE("load_csv smoke and malformed-row handling") {
  auto dir = tmp_dir();
  Schema s = tiny_schema();

  SUBCASE("3 clean rows load") {
    auto p = (dir / "clean.csv").string();
    write_file_bytes(p, "f1,f2,label\n1.0,2.0,benign\n3.5,4.5,attack\n5,6,benign\n");
    RawTable t = load_csv(p, s);
    CHECK(t.n_rows == 3);
    CHECK(t.dropped_rows == 0);
    CHECK(t.numeric_cols[0][1] == 3.5);
    CHECK(t.labels == std::vector<int>{0, 1, 0});
  }

  SUBCASE("non-numeric token drops the row with count 1") {
    auto p = (dir / "bad.csv").string();
    write_file_bytes(p, "f1,f2,label\n1.0,2.0,benign\nxyz,4.5,attack\n");
    Warnings w;
    RawTable t = load_csv(p, s, &w);
    CHECK(t.n_rows == 1);
    CHECK(t.dropped_rows == 1);
    CHECK_FALSE(w.empty());
  }

  SUBCASE("non-finite numerics and unknown labels also drop") {
    auto p = (dir / "inf.csv").string();
    write_file_bytes(p, "f1,f2,label\ninf,2.0,benign\n1.0,2.0,mystery\n1,2,attack\n");
    RawTable t = load_csv(p, s);
    CHECK(t.n_rows == 1);
    CHECK(t.dropped_rows == 2);
  }

  SUBCASE("missing schema column is an error naming it") {
    auto p = (dir / "missing.csv").string();
    write_file_bytes(p, "f1,label\n1.0,benign\n");
    try {
      load_csv(p, s);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("f2") != std::string::npos);
    }
  }

  SUBCASE("empty file and header-only file are errors") {
    auto p = (dir / "empty.csv").string();
    write_file_bytes(p, "");
    CHECK_THROWS_AS(load_csv(p, s), DataError);
    write_file_bytes(p, "f1,f2,label\n");
    CHECK_THROWS_AS(load_csv(p, s), DataError);
  }

  SUBCASE("quoted fields with commas and doubled quotes") {
    Schema qs = s;
    qs.columns.push_back({"proto", ColKind::kCategorical});
    auto p = (dir / "quoted.csv").string();
    write_file_bytes(p,
                     "f1,f2,label,proto\n1,2,benign,\"tcp,v2\"\n3,4,attack,\"say \"\"hi\"\"\"\n");
    RawTable t = load_csv(p, qs);
    REQUIRE(t.n_rows == 2);
    CHECK(t.categorical_cols[0][0] == "tcp,v2");
    CHECK(t.categorical_cols[0][1] == "say \"hi\"");
  }
}

TEST_CASE("load_csv handles a 42-feature header") {
  auto dir = tmp_dir();
  Schema s;
  std::string header;
  std::string row;
  for (int i = 0; i < 42; ++i) {
    std::string name = "feat" + std::to_string(i);
    s.columns.push_back({name, ColKind::kNumeric});
    header += name + ",";
    row += std::to_string(i) + ".5,";
  }
  s.columns.push_back({"label", ColKind::kLabel});
  s.class_names = {"normal", "dos"};
  auto p = (dir / "wide.csv").string();
  write_file_bytes(p, header + "label\n" + row + "dos\n" + row + "normal\n");
  RawTable t = load_csv(p, s);
  CHECK(t.numeric_names.size() == 42);
  CHECK(t.n_rows == 2);
}

TEST_CASE("fit_preprocess hand-computed statistics") {
  RawTable t;
  t.numeric_names = {"a"};
  t.numeric_cols = {{1.0, 2.0, 3.0}};
  t.categorical_names = {"proto"};
  t.categorical_cols = {{"tcp", "udp", "tcp"}};
  t.labels = {0, 1, 0};
  t.n_rows = 3;

  PreprocessMap m = fit_preprocess(t, all_rows(t));
  REQUIRE(m.numeric_names.size() == 1);
  CHECK(m.means[0] == doctest::Approx(2.0).epsilon(1e-15));
  // population stddev of [1,2,3]: sqrt(2/3)
  CHECK(m.stddevs[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  REQUIRE(m.vocabularies.size() == 1);
  CHECK(m.vocabularies[0] == std::vector<std::string>{"tcp", "udp"});
  CHECK(m.expanded_dim == 3);  // 1 numeric + 2 one-hot

  auto names = m.feature_names();
  REQUIRE(names.size() == 3);
  CHECK(names[0] == "a");
  CHECK(names[1] == "proto=tcp");
  CHECK(names[2] == "proto=udp");

  PreprocessMap round = PreprocessMap::from_json_text(m.to_json_text());
  CHECK(round.means == m.means);
  CHECK(round.stddevs == m.stddevs);
  CHECK(round.vocabularies == m.vocabularies);
  CHECK(round.expanded_dim == m.expanded_dim);
}

TEST_CASE("zero-variance columns drop without error") {
  RawTable t;
  t.numeric_names = {"const", "live"};
  t.numeric_cols = {{7.0, 7.0, 7.0}, {1.0, 2.0, 4.0}};
  t.labels = {0, 0, 1};
  t.n_rows = 3;
  Warnings w;
  PreprocessMap m = fit_preprocess(t, all_rows(t), &w);
  CHECK(m.numeric_names == std::vector<std::string>{"live"});
  CHECK(m.dropped_numeric == std::vector<std::string>{"const"});
  CHECK(m.expanded_dim == 1);
  CHECK_FALSE(w.empty());
}

TEST_CASE("apply_preprocess standardization and one-hot policies") {
  RawTable t;
  t.numeric_names = {"a"};
  t.numeric_cols = {{1.0, 2.0, 3.0}};
  t.categorical_names = {"proto"};
  t.categorical_cols = {{"tcp", "udp", "tcp"}};
  t.labels = {0, 1, 0};
  t.n_rows = 3;
  PreprocessMap m = fit_preprocess(t, all_rows(t));

  RawTable fresh;
  fresh.numeric_names = {"a"};
  fresh.numeric_cols = {{2.0, 1.0}};
  fresh.categorical_names = {"proto"};
  fresh.categorical_cols = {{"tcp", "icmp"}};
  fresh.labels = {0, 1};
  fresh.n_rows = 2;
  Mat32 x = apply_preprocess(fresh, m);
  REQUIRE(x.rows == 2);
  REQUIRE(x.cols == 3);
  CHECK(x(0, 0) == 0.0f);  // value at column mean
  CHECK(x(0, 1) == 1.0f);  // tcp -> [1, 0]
  CHECK(x(0, 2) == 0.0f);
  CHECK(x(1, 1) == 0.0f);  // unseen icmp -> all-zero block
  CHECK(x(1, 2) == 0.0f);
}

TEST_CASE("train-split standardization round-trip") {
  SeededRng rng(303);
  SynthSpec spec;
  spec.class_counts = {400, 400};
  spec.numeric_dim = 6;
  spec.informative_dim = 3;
  spec.cat_vocab_sizes = {3};
  spec.separability = 0.7;
  Schema schema;
  RawTable t = synthesize(spec, rng, &schema);

  SeededRng srng(7);
  auto tags = split(t.labels, {}, SplitRatios{}, srng);
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == SplitTag::kTrain) train_rows.push_back(i);

  PreprocessMap m = fit_preprocess(t, train_rows);
  Mat32 x = apply_preprocess(t, m);
  for (std::size_t c = 0; c < m.numeric_names.size(); ++c) {
    double mean = 0.0;
    for (std::size_t r : train_rows) mean += x(r, c);
    mean /= static_cast<double>(train_rows.size());
    double var = 0.0;
    for (std::size_t r : train_rows) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(train_rows.size());
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-2);
  }
}

TEST_CASE("stratified split hits ratios and partitions rows") {
  std::vector<int> y;
  for (int i = 0; i < 50; ++i) y.push_back(0);
  for (int i = 0; i < 50; ++i) y.push_back(1);
  SeededRng rng(11);
  auto tags = split(y, {}, SplitRatios{}, rng);
  REQUIRE(tags.size() == 100);
  std::size_t n[3] = {0, 0, 0};
  std::size_t per_class[2][3] = {{0, 0, 0}, {0, 0, 0}};
  for (std::size_t i = 0; i < tags.size(); ++i) {
    ++n[static_cast<int>(tags[i])];
    ++per_class[y[i]][static_cast<int>(tags[i])];
  }
  // global totals exact for the divisible case
  CHECK(n[0] == 70);
  CHECK(n[1] == 15);
  CHECK(n[2] == 15);
  // per-class proportions within one row of 35/7.5/7.5
  for (int c = 0; c < 2; ++c) {
    CHECK(per_class[c][0] == 35);
    CHECK(per_class[c][1] >= 7);
    CHECK(per_class[c][1] <= 8);
    CHECK(per_class[c][2] >= 7);
    CHECK(per_class[c][2] <= 8);
  }
}

TEST_CASE("stratified split stays within one row per class at scale") {
  SeededRng gen(5);
  std::vector<int> y;
  std::vector<std::size_t> counts = {6000, 311, 47, 1003, 10};
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t i = 0; i < counts[c]; ++i) y.push_back(static_cast<int>(c));
  gen.shuffle(y);
  SeededRng rng(13);
  auto tags = split(y, {}, SplitRatios{}, rng);
  std::vector<std::array<std::size_t, 3>> per_class(counts.size(), {0, 0, 0});
  for (std::size_t i = 0; i < y.size(); ++i)
    ++per_class[static_cast<std::size_t>(y[i])][static_cast<int>(tags[i])];
  const double ratio[3] = {0.70, 0.15, 0.15};
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (int s = 0; s < 3; ++s) {
      double ideal = ratio[s] * static_cast<double>(counts[c]);
      CHECK(std::abs(static_cast<double>(per_class[c][s]) - ideal) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("split warnings and degenerate classes") {
  SUBCASE("class with < 3 rows goes whole to train") {
    std::vector<int> y = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
    SeededRng rng(3);
    Warnings w;
    auto tags = split(y, {}, SplitRatios{}, rng, &w);
    CHECK(tags[10] == SplitTag::kTrain);
    CHECK(tags[11] == SplitTag::kTrain);
    CHECK_FALSE(w.empty());
  }
  SUBCASE("single-class input is valid with a warning") {
    std::vector<int> y(30, 0);
    SeededRng rng(3);
    Warnings w;
    auto tags = split(y, {}, SplitRatios{}, rng, &w);
    CHECK(tags.size() == 30);
    bool has_single_class_warning = false;
    for (const auto& msg : w)
      if (msg.find("single class") != std::string::npos)
        has_single_class_warning = true;
    CHECK(has_single_class_warning);
  }
  SUBCASE("bad ratios rejected") {
    std::vector<int> y(10, 0);
    SeededRng rng(3);
    CHECK_THROWS_AS(split(y, {}, SplitRatios{0.5, 0.4, 0.4}, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("source-aware split keeps each source whole") {
  SeededRng gen(17);
  std::vector<int> y;
  std::vector<std::string> src;
  for (int s = 0; s < 10; ++s) {
    std::size_t rows = 20 + gen.uniform_u64(30);
    for (std::size_t i = 0; i < rows; ++i) {
      y.push_back(static_cast<int>(gen.uniform_u64(3)));
      src.push_back("src_" + std::to_string(s));
    }
  }
  SeededRng rng(23);
  auto tags = split(y, src, SplitRatios{}, rng);
  std::map<std::string, std::set<int>> seen;
  for (std::size_t i = 0; i < y.size(); ++i)
    seen[src[i]].insert(static_cast<int>(tags[i]));
  for (const auto& [s, splits] : seen) CHECK(splits.size() == 1);
  // all three splits should be populated with 10 sources
  std::set<int> used;
  for (auto t : tags) used.insert(static_cast<int>(t));
  CHECK(used.size() == 3);
}

TEST_CASE("synthesize determinism, preset shape, and separability oracle") {
  SUBCASE("same seed gives bit-identical tables") {
    SynthSpec spec;
    spec.class_counts = {100, 50, 25};
    spec.numeric_dim = 8;
    spec.informative_dim = 4;
    spec.cat_vocab_sizes = {4, 3};
    spec.separability = 0.8;
    spec.n_sources = 4;
    SeededRng r1(41), r2(41);
    Schema s1, s2;
    RawTable a = synthesize(spec, r1, &s1);
    RawTable b = synthesize(spec, r2, &s2);
    REQUIRE(a.n_rows == b.n_rows);
    for (std::size_t c = 0; c < a.numeric_cols.size(); ++c)
      CHECK(std::memcmp(a.numeric_cols[c].data(), b.numeric_cols[c].data(),
                        a.numeric_cols[c].size() * sizeof(double)) == 0);
    CHECK(a.categorical_cols == b.categorical_cols);
    CHECK(a.labels == b.labels);
    CHECK(a.source_ids == b.source_ids);
  }

  SUBCASE("heavy-tail preset has majority:minority >= 50") {
    SynthSpec spec = heavy_tail_preset();
    std::size_t mx = 0, mn = SIZE_MAX;
    for (std::size_t c : spec.class_counts) {
      mx = std::max(mx, c);
      mn = std::min(mn, c);
    }
    CHECK(mx / mn >= 50);
    CHECK(spec.class_counts.size() == 10);
  }

  SUBCASE("separability 1.0 is nearly stump-separable for 2 classes") {
    SynthSpec spec;
    spec.class_counts = {500, 500};
    spec.numeric_dim = 10;
    spec.informative_dim = 5;
    spec.cat_vocab_sizes = {};
    spec.separability = 1.0;
    SeededRng rng(59);
    RawTable t = synthesize(spec, rng, nullptr);
    CHECK(stump_holdout_accuracy(t) >= 0.99);
  }
}

TEST_CASE("profile frequencies and correlations") {
  SUBCASE("balanced two-class frequencies") {
    RawTable t;
    t.numeric_names = {"a", "b"};
    t.numeric_cols = {{1, 2, 3, 4}, {2, 4, 6, 8}};
    t.labels = {0, 1, 0, 1};
    t.n_rows = 4;
    ProfileResult p = profile(t, {"x", "y"}, 10);
    CHECK(p.class_fractions[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p.class_fractions[1] == doctest::Approx(0.5).epsilon(1e-15));
    // b = 2a: perfect linear dependence
    REQUIRE(p.corr_names.size() == 2);
    CHECK(p.corr(0, 0) == 1.0);
    CHECK(p.corr(1, 1) == 1.0);
    CHECK(p.corr(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("zero-variance column excluded, top_v honored") {
    RawTable t;
    t.numeric_names = {"const", "small", "big", "mid"};
    t.numeric_cols = {{5, 5, 5, 5},
                      {1.0, 1.1, 0.9, 1.0},
                      {10, -10, 20, -20},
                      {1, 2, 3, 4}};
    t.labels = {0, 0, 1, 1};
    t.n_rows = 4;
    Warnings w;
    ProfileResult p = profile(t, {"n", "a"}, 2, &w);
    REQUIRE(p.corr_names.size() == 2);
    CHECK(p.corr_names[0] == "big");  // highest variance first
    CHECK(p.corr_names[1] == "mid");
    CHECK_FALSE(w.empty());
  }
}

TEST_CASE("dataset build and binary round-trip") {
  SeededRng rng(101);
  SynthSpec spec;
  spec.class_counts = {60, 40};
  spec.numeric_dim = 5;
  spec.informative_dim = 3;
  spec.cat_vocab_sizes = {3};
  spec.separability = 0.9;
  Schema schema;
  RawTable t = synthesize(spec, rng, &schema);
  SeededRng srng(7);
  auto tags = split(t.labels, {}, SplitRatios{}, srng);
  PreprocessMap m = fit_preprocess(t, all_rows(t));
  Dataset ds = build_dataset(t, schema, m, tags);
  CHECK(ds.x.rows == 100);
  CHECK(ds.x.cols == m.expanded_dim);
  CHECK(ds.class_counts == std::vector<std::size_t>{60, 40});

  auto dir = tmp_dir();
  auto p = (dir / "ds.bin").string();
  save_dataset(ds, p);
  Dataset back = load_dataset(p);
  CHECK(back.x.rows == ds.x.rows);
  CHECK(back.x.cols == ds.x.cols);
  CHECK(std::memcmp(back.x.data.data(), ds.x.data.data(),
                    ds.x.data.size() * sizeof(float)) == 0);
  CHECK(back.y == ds.y);
  CHECK(back.split == ds.split);
  CHECK(back.class_names == ds.class_names);
  CHECK(back.feature_names == ds.feature_names);

  SUBCASE("corrupted byte trips the checksum") {
    std::string bytes = read_file_bytes(p);
    bytes[bytes.size() / 2] ^= 0x40;
    auto bad = (dir / "ds_bad.bin").string();
    write_file_bytes(bad, bytes);
    CHECK_THROWS_AS(load_dataset(bad), DataError);
  }
}

TEST_CASE("csv write/load round-trip preserves values") {
  SeededRng rng(77);
  SynthSpec spec;
  spec.class_counts = {30, 20};
  spec.numeric_dim = 4;
  spec.informative_dim = 2;
  spec.cat_vocab_sizes = {3};
  spec.separability = 0.8;
  spec.n_sources = 3;
  Schema schema;
  RawTable t = synthesize(spec, rng, &schema);
  auto dir = tmp_dir();
  auto p = (dir / "round.csv").string();
  write_csv(p, t, schema);
  RawTable back = load_csv(p, schema);
  REQUIRE(back.n_rows == t.n_rows);
  CHECK(back.dropped_rows == 0);
  for (std::size_t c = 0; c < t.numeric_cols.size(); ++c)
    CHECK(std::memcmp(back.numeric_cols[c].data(), t.numeric_cols[c].data(),
                      t.numeric_cols[c].size() * sizeof(double)) == 0);
  CHECK(back.categorical_cols == t.categorical_cols);
  CHECK(back.labels == t.labels);
  CHECK(back.source_ids == t.source_ids);
}
