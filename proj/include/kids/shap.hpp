#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kids/ingest.hpp"
#include "kids/matrix.hpp"
#include "kids/nn.hpp"
#include "kids/rng.hpp"

namespace kids {

// Batched scalar function: n masked rows in, n scalars out. Batching matters —
// attribution cost is dominated by model forwards over (coalition x background)
// grids, which the caller can push through one gemm.
using BatchValueFn = std::function<std::vector<double>(const Mat32&)>;

// Value function used throughout: logit of `cls` under an eval-mode forward.
BatchValueFn model_class_logit(const ModelGraph<float>& model, std::size_t cls);

// Brute-force Shapley values over all 2^p coalitions (p <= 12). Masked-out
// features take background values; v(S) averages f over the background set.
std::vector<double> exact_shapley(const BatchValueFn& f,
                                  const std::vector<float>& x,
                                  const Mat32& background);

// KernelSHAP: weighted least squares over coalitions with the Shapley kernel.
// Enumerates every proper coalition when 2^p - 2 <= n_coalitions, otherwise
// samples coalitions from the kernel distribution. The empty and full
// coalitions enter as equality constraints, so efficiency
// (sum phi = f(x) - mean_bg f) holds exactly up to solver round-off.
std::vector<double> kernel_shap(const BatchValueFn& f,
                                const std::vector<float>& x,
                                const Mat32& background,
                                std::size_t n_coalitions, SeededRng& rng,
                                Warnings* warnings = nullptr);

// phi rows for several samples; one row per explained input, same column order.
Mat64 attribute_rows(const BatchValueFn& f, const Mat32& samples,
                     const Mat32& background, std::size_t n_coalitions,
                     SeededRng& rng, Warnings* warnings = nullptr);

// Same, but each row is attributed against the logit of the model's own
// predicted class for that row (margin-space attribution).
Mat64 attribute_rows(const ModelGraph<float>& model, const Mat32& samples,
                     const Mat32& background, std::size_t n_coalitions,
                     SeededRng& rng, Warnings* warnings = nullptr);

struct GlobalRanking {
  std::vector<double> s;            // mean |phi| per column
  std::vector<std::size_t> pi;      // descending s, ties by ascending index
  std::vector<double> cumulative;   // normalized cumsum over sorted s
};

GlobalRanking global_ranking(const Mat64& phi, Warnings* warnings = nullptr);

// Class-stratified row subset for attribution averaging: every class present
// in y gets at least one row when n_samples allows, proportions follow the
// class mix, and n_samples == rows returns the identity subset.
std::vector<std::size_t> attribution_sampling_plan(const std::vector<int>& y,
                                                   std::size_t n_samples,
                                                   SeededRng& rng);

// Stratified background selection reuses the same plan.
inline std::vector<std::size_t> background_plan(const std::vector<int>& y,
                                                std::size_t n_rows,
                                                SeededRng& rng) {
  return attribution_sampling_plan(y, n_rows, rng);
}

struct AblationCell {
  std::size_t k;
  double val_macro_f1;
  double delta_vs_full;  // full - this
  bool selected;
};

struct AblationResult {
  std::vector<AblationCell> cells;
  std::size_t chosen_k = 0;
  bool tolerance_met = false;
  double full_macro_f1 = 0.0;
  double tolerance = 0.0;
};

// Trains a fresh probe per K (probe(columns) -> val macro-F1 is supplied by
// the caller) and picks the smallest K whose score stays within `tolerance`
// of the full model. No K qualifying -> largest K with an explicit flag.
using ProbeFn = std::function<double(const std::vector<std::size_t>& columns)>;

AblationResult ablate_k(const ProbeFn& probe, double full_macro_f1,
                        const std::vector<std::size_t>& pi,
                        std::vector<std::size_t> k_grid = {32, 64, 96, 128},
                        double tolerance = 0.02, Warnings* warnings = nullptr);

// rank, column index, feature name, importance, cumulative fraction
void write_shap_global_csv(const GlobalRanking& ranking,
                           const std::vector<std::string>& feature_names,
                           const std::string& path);

void write_ablation_csv(const AblationResult& result, const std::string& path);

}  // namespace kids
