#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kids/ingest.hpp"
#include "kids/nn.hpp"
#include "kids/train.hpp"

namespace kids {

// Dataset source. "synthetic" draws from a generator preset; "csv" ingests a
// user-supplied file plus a column schema. Zero/empty override fields fall
// back to the preset's values.
struct SourceConfig {
  std::string kind = "synthetic";     // "synthetic" | "csv"
  std::string preset = "heavy_tail";  // "heavy_tail" | "uniform"
  std::size_t rows = 0;               // rescales preset class counts
  std::size_t classes = 0;            // uniform preset only
  std::size_t numeric_dim = 0;
  std::size_t informative_dim = 0;
  std::vector<std::size_t> cat_vocab;
  double separability = 0.0;
  std::size_t n_sources = 0;
  std::string csv_path;
  std::string schema_path;
};

struct ShapStageConfig {
  std::size_t n_samples = 48;     // attributed rows (stratified from val)
  std::size_t n_background = 32;  // background rows (stratified from train)
  std::size_t n_coalitions = 256;
};

struct AblationStageConfig {
  std::vector<std::size_t> k_grid = {32, 64, 96, 128};
  double tolerance = 0.02;
  std::size_t probe_epochs = 12;
};

struct BenchStageConfig {
  std::size_t batch_rows = 512;
  std::size_t warmup = 3;
  std::size_t repeats = 30;
  // false (default): a virtual clock that advances by a fixed cost per
  // forward pass (parameter count x batch rows), so bench.csv is
  // byte-reproducible. true: the real steady clock; artifacts then reflect
  // this machine and stop being reproducible.
  bool wall_clock = false;
};

// One document drives every stage; the single root seed feeds each stochastic
// component through derived streams. TrainConfig/DistillConfig seeds inside
// this struct are ignored in favor of `seed`.
struct RunConfig {
  std::uint64_t seed = 42;
  std::string out_dir = "run";
  SourceConfig source;
  SplitRatios split;
  TrainConfig train;
  DistillConfig distill;
  StudentConfig student{0, 0, 0};  // k == 0 lets the ablation stage choose K
  ShapStageConfig shap;
  AblationStageConfig ablation;
  BenchStageConfig bench;

  // Range checks plus path existence for csv sources. Throws
  // std::invalid_argument (usage error) on bad values.
  void validate() const;

  std::string to_json_text() const;
  // Strict: unknown keys or ill-typed values raise std::invalid_argument.
  static RunConfig from_json_text(const std::string& text);

  // Applies a dotted-path override, e.g. "train.epochs=6" or
  // "distill.alphas=[0.5,0.9]". The path must already exist in the config
  // document; values parse as JSON where possible, else as strings.
  void set_override(const std::string& dotted_key, const std::string& value);
};

RunConfig load_run_config(const std::string& path);

// --- stages -------------------------------------------------------------------
//
// Each stage reads its inputs from cfg.out_dir, writes its artifacts there,
// and updates manifest.json (artifact CRC32 checksums, stage metadata,
// collected warnings — never timestamps). Missing upstream artifacts raise
// DataError naming the stage to run first; reusing a run directory with a
// different seed raises DataError.
//
// Artifacts per stage:
//   synth          data.csv, schema.json            (synthetic sources only)
//   preprocess     dataset.kidd, preprocess_map.json, splits.csv
//   profile        class_freq.csv, corr_topvar.csv
//   train-teacher  teacher.kids, curves.csv
//   shap           shap_global.csv
//   ablate         ablation.csv
//   distill        student_fp32.kids, grid.csv, curves_student.csv
//   quantize       student_int8.kids
//   eval           metrics.json, confusion_<model>.csv, bench.csv
//   bench          bench.csv
//
// eval additionally verifies every input artifact's checksum against the
// manifest and refuses stale mixes (e.g. a re-trained teacher with an old
// student).
void cmd_synth(const RunConfig& cfg);
void cmd_preprocess(const RunConfig& cfg);
void cmd_profile(const RunConfig& cfg);
void cmd_train_teacher(const RunConfig& cfg);
void cmd_shap(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);
void cmd_distill(const RunConfig& cfg);
void cmd_quantize(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);

// The full stage sequence (synth is skipped for csv sources). Byte-equivalent
// to invoking the subcommands one at a time.
void cmd_run_all(const RunConfig& cfg);

}  // namespace kids
