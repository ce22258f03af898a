#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kids/matrix.hpp"
#include "kids/rng.hpp"

namespace kids {

// Shared warning sink: callers pass a vector to collect messages that also go
// to stderr. Pipeline runs fold these into the run manifest.
using Warnings = std::vector<std::string>;
void warn(Warnings* sink, const std::string& msg);

enum class ColKind { kNumeric, kCategorical, kLabel, kSourceId, kIgnore };

struct ColumnSpec {
  std::string name;
  ColKind kind;
};

struct Schema {
  std::vector<ColumnSpec> columns;
  std::vector<std::string> class_names;

  // Throws DataError unless: exactly one label column, at most one source_id
  // column, class_names nonempty and unique.
  void validate() const;

  std::string to_json_text() const;
  static Schema from_json_text(const std::string& text);
};

// Column-typed table produced by load_csv or synthesize.
struct RawTable {
  std::vector<std::string> numeric_names;
  std::vector<std::vector<double>> numeric_cols;  // [col][row]
  std::vector<std::string> categorical_names;
  std::vector<std::vector<std::string>> categorical_cols;  // [col][row]
  std::vector<int> labels;                                 // class indices
  std::vector<std::string> source_ids;                     // empty when absent
  std::size_t n_rows = 0;
  std::size_t dropped_rows = 0;  // malformed rows skipped by the loader
};

struct PreprocessMap {
  std::vector<std::string> numeric_names;  // retained columns, table order
  std::vector<double> means;
  std::vector<double> stddevs;                 // population; all > 0
  std::vector<std::string> dropped_numeric;    // zero-variance columns
  std::vector<std::string> categorical_names;  // table order
  std::vector<std::vector<std::string>> vocabularies;  // sorted category values
  std::size_t expanded_dim = 0;                        // p

  // One name per expanded column: numerics first, then "<col>=<value>" blocks.
  std::vector<std::string> feature_names() const;

  std::string to_json_text() const;
  static PreprocessMap from_json_text(const std::string& text);
};

enum class SplitTag : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };
const char* split_name(SplitTag t);

struct Dataset {
  Mat32 x;  // n rows, expanded_dim cols
  std::vector<int> y;
  std::vector<SplitTag> split;
  std::vector<std::size_t> class_counts;  // over all rows
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  std::vector<std::size_t> rows_with_tag(SplitTag t) const;
  Mat32 x_rows(const std::vector<std::size_t>& rows) const;
  std::vector<int> y_rows(const std::vector<std::size_t>& rows) const;
};

// --- loading ---------------------------------------------------------------

// Parses a comma-separated file with a header row; quoted fields may contain
// commas, doubled quotes, and newlines. Rows with unparseable or non-finite
// numerics, missing fields, or labels outside schema.class_names are dropped
// and counted. Missing schema column in the header or a file without data
// rows raises DataError.
RawTable load_csv(const std::string& path, const Schema& schema,
                  Warnings* warnings = nullptr);

void write_csv(const std::string& path, const RawTable& table,
               const Schema& schema);

// --- preprocessing ---------------------------------------------------------

// Fits on the given rows only (callers pass the train split — the interface
// never sees val/test rows). Zero-variance numerics are dropped and recorded.
PreprocessMap fit_preprocess(const RawTable& table,
                             const std::vector<std::size_t>& fit_rows,
                             Warnings* warnings = nullptr);

// Standardizes numerics and one-hot encodes categoricals; categories missing
// from a vocabulary encode as an all-zero block.
Mat32 apply_preprocess(const RawTable& table, const PreprocessMap& map);

// --- splitting ---------------------------------------------------------------

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

// Stratified when source_ids is empty: per-class proportions match the ratios
// within one row and split totals land on the largest-remainder targets.
// Source-aware otherwise: each source's rows go to exactly one split, sources
// greedily packed toward the ratios. Classes with fewer than 3 rows fall back
// to train with a warning.
std::vector<SplitTag> split(const std::vector<int>& y,
                            const std::vector<std::string>& source_ids,
                            const SplitRatios& ratios, SeededRng& rng,
                            Warnings* warnings = nullptr);

// --- synthesis ---------------------------------------------------------------

struct SynthSpec {
  std::vector<std::size_t> class_counts;  // one entry per class
  std::size_t numeric_dim = 40;
  std::size_t informative_dim = 20;        // leading columns that carry signal
  std::vector<std::size_t> cat_vocab_sizes = {4, 3};
  double separability = 0.8;  // in (0, 1]; 1.0 = near-disjoint clusters
  std::size_t n_sources = 0;  // > 0 adds a source_id column
};

// Class clusters with +-3*separability means on informative columns (sign
// pattern differs per class), unit noise elsewhere; categoricals point at
// (class mod vocab) with probability separability. Deterministic in rng.
RawTable synthesize(const SynthSpec& spec, SeededRng& rng, Schema* schema_out);

// 10 classes, 20k rows, majority:minority = 60:1 — mimics the long-tailed
// class mix of public IoT attack corpora at desk scale.
SynthSpec heavy_tail_preset();

// --- profiling ---------------------------------------------------------------

struct ProfileResult {
  std::vector<std::string> class_names;
  std::vector<std::size_t> class_counts;
  std::vector<double> class_fractions;        // sums to 1
  std::vector<std::string> corr_names;        // top-variance numeric columns
  Mat64 corr;                                 // Pearson, square
};

// Runs on raw (pre-standardization) numerics; zero-variance columns are
// excluded from the correlation block.
ProfileResult profile(const RawTable& table,
                      const std::vector<std::string>& class_names,
                      std::size_t top_v = 10, Warnings* warnings = nullptr);

void write_profile_csv(const ProfileResult& prof, const std::string& freq_path,
                       const std::string& corr_path);

// --- dataset assembly and binary round-trip ----------------------------------

Dataset build_dataset(const RawTable& table, const Schema& schema,
                      const PreprocessMap& map,
                      const std::vector<SplitTag>& tags);

// Compact binary container (magic "KIDD", version, shapes, f32 features,
// labels, split tags, names, trailing CRC32). Checksum mismatch → DataError.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace kids
