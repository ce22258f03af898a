#include "kids/shap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "kids/errors.hpp"
#include "kids/ioutil.hpp"
#include "kids/numcore.hpp"

namespace kids {

BatchValueFn model_class_logit(const ModelGraph<float>& model, std::size_t cls) {
  return [&model, cls](const Mat32& rows) {
    Mat32 logits = model.predict(rows);
    if (cls >= logits.cols)
      throw std::invalid_argument("class " + std::to_string(cls) +
                                  " outside the model's " +
                                  std::to_string(logits.cols) + " outputs");
    std::vector<double> out(rows.rows);
    for (std::size_t i = 0; i < rows.rows; ++i)
      out[i] = static_cast<double>(logits(i, cls));
    return out;
  };
}

namespace {

// v(S): features in the mask keep x's values, the rest come from each
// background row; returns the mean of f over the background set.
double coalition_value(const BatchValueFn& f, const std::vector<float>& x,
                       const Mat32& background, std::uint32_t mask) {
  const std::size_t p = x.size(), n = background.rows;
  Mat32 batch(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    const float* bg = background.row(r);
    float* dst = batch.row(r);
    for (std::size_t j = 0; j < p; ++j)
      dst[j] = (mask >> j) & 1u ? x[j] : bg[j];
  }
  std::vector<double> vals = f(batch);
  if (vals.size() != n)
    throw NumericError("value function returned " + std::to_string(vals.size()) +
                       " values for " + std::to_string(n) + " rows");
  double sum = 0.0;
  for (double v : vals) sum += v;
  return sum / static_cast<double>(n);
}

void check_inputs(const std::vector<float>& x, const Mat32& background) {
  if (x.empty()) throw std::invalid_argument("attribution of an empty row");
  if (background.rows == 0)
    throw std::invalid_argument("attribution needs a nonempty background set");
  if (background.cols != x.size())
    throw std::invalid_argument("background width " +
                                std::to_string(background.cols) +
                                " != sample width " + std::to_string(x.size()));
}

double log_choose(std::size_t n, std::size_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

std::vector<double> exact_shapley(const BatchValueFn& f,
                                  const std::vector<float>& x,
                                  const Mat32& background) {
  check_inputs(x, background);
  const std::size_t p = x.size();
  if (p > 12)
    throw std::invalid_argument(
        "exact enumeration is capped at 12 features (2^p coalitions); use "
        "kernel_shap for p = " + std::to_string(p));

  const std::uint32_t n_masks = 1u << p;
  std::vector<double> v(n_masks);
  for (std::uint32_t mask = 0; mask < n_masks; ++mask)
    v[mask] = coalition_value(f, x, background, mask);

  // w_s = s! (p - s - 1)! / p!
  std::vector<double> w(p);
  for (std::size_t s = 0; s < p; ++s)
    w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1.0) +
                    std::lgamma(static_cast<double>(p - s)) -
                    std::lgamma(static_cast<double>(p) + 1.0));

  std::vector<double> phi(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const std::uint32_t bit = 1u << j;
    for (std::uint32_t mask = 0; mask < n_masks; ++mask) {
      if (mask & bit) continue;
      phi[j] += w[static_cast<std::size_t>(std::popcount(mask))] *
                (v[mask | bit] - v[mask]);
    }
  }
  return phi;
}

std::vector<double> kernel_shap(const BatchValueFn& f,
                                const std::vector<float>& x,
                                const Mat32& background,
                                std::size_t n_coalitions, SeededRng& rng,
                                Warnings* warnings) {
  check_inputs(x, background);
  const std::size_t p = x.size();
  if (n_coalitions < p + 2)
    throw std::invalid_argument("kernel_shap needs at least p + 2 = " +
                                std::to_string(p + 2) + " coalitions, got " +
                                std::to_string(n_coalitions));

  const std::uint32_t full = p >= 32 ? 0xffffffffu : (1u << p) - 1u;
  const double v0 = coalition_value(f, x, background, 0);
  const double v1 = coalition_value(f, x, background, full);
  const double d = v1 - v0;
  if (p == 1) return {d};

  // proper coalitions, either all of them or a kernel-distributed sample
  std::vector<std::uint32_t> masks;
  std::vector<double> weights;
  const bool enumerate =
      p <= 20 && ((1ull << p) - 2) <= static_cast<std::uint64_t>(n_coalitions);
  if (enumerate) {
    for (std::uint32_t m = 1; m < full; ++m) {
      std::size_t k = static_cast<std::size_t>(std::popcount(m));
      masks.push_back(m);
      weights.push_back(std::exp(std::log(static_cast<double>(p - 1)) -
                                 log_choose(p, k) -
                                 std::log(static_cast<double>(k)) -
                                 std::log(static_cast<double>(p - k))));
    }
  } else {
    // size distribution: P(k) ∝ (p-1)/(k(p-k)), the kernel mass of size k
    std::vector<double> size_cdf(p - 1);
    double acc = 0.0;
    for (std::size_t k = 1; k < p; ++k) {
      acc += 1.0 / (static_cast<double>(k) * static_cast<double>(p - k));
      size_cdf[k - 1] = acc;
    }
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t c = 0; c < n_coalitions; ++c) {
      double u = rng.uniform() * acc;
      std::size_t k = 1;
      while (k < p - 1 && size_cdf[k - 1] < u) ++k;
      // draw a uniform k-subset: partial Fisher-Yates over the index pool
      for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(
                                rng.uniform_u64(static_cast<std::uint64_t>(p - i)));
        std::swap(idx[i], idx[j]);
      }
      std::uint32_t m = 0;
      for (std::size_t i = 0; i < k; ++i) m |= 1u << idx[i];
      masks.push_back(m);
      weights.push_back(1.0);  // sampling frequency already encodes the kernel
    }
  }

  std::vector<double> v(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i)
    v[i] = coalition_value(f, x, background, masks[i]);

  // The two constrained coalitions are eliminated analytically: regress
  //   v(S) - v0 - z_last * d  on  (z_j - z_last), j < p-1,
  // then back out phi_last from efficiency. Normal equations with the kernel
  // weights; a singular system falls back to a small ridge.
  const std::size_t q = p - 1;
  Mat64 a(q, q, 0.0);
  std::vector<double> b(q, 0.0);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const std::uint32_t m = masks[i];
    const double z_last = (m >> (p - 1)) & 1u ? 1.0 : 0.0;
    const double yi = v[i] - v0 - z_last * d;
    std::vector<double> row(q);
    for (std::size_t j = 0; j < q; ++j)
      row[j] = ((m >> j) & 1u ? 1.0 : 0.0) - z_last;
    for (std::size_t j = 0; j < q; ++j) {
      if (row[j] == 0.0) continue;
      const double wr = weights[i] * row[j];
      for (std::size_t l = 0; l < q; ++l) a(j, l) += wr * row[l];
      b[j] += wr * yi;
    }
  }

  std::vector<double> beta;
  if (!solve_linear(a, b, beta)) {
    warn(warnings,
         "singular attribution regression; retrying with ridge 1e-8");
    for (std::size_t j = 0; j < q; ++j) a(j, j) += 1e-8;
    if (!solve_linear(a, b, beta))
      throw NumericError("attribution regression is singular even with ridge");
  }

  std::vector<double> phi(p);
  double sum = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    phi[j] = beta[j];
    sum += beta[j];
  }
  phi[p - 1] = d - sum;
  return phi;
}

Mat64 attribute_rows(const BatchValueFn& f, const Mat32& samples,
                     const Mat32& background, std::size_t n_coalitions,
                     SeededRng& rng, Warnings* warnings) {
  if (samples.rows == 0)
    throw std::invalid_argument("attribute_rows: no samples");
  Mat64 phi(samples.rows, samples.cols);
  std::vector<float> x(samples.cols);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    std::copy(samples.row(i), samples.row(i) + samples.cols, x.begin());
    std::vector<double> row =
        kernel_shap(f, x, background, n_coalitions, rng, warnings);
    std::copy(row.begin(), row.end(), phi.row(i));
  }
  return phi;
}

Mat64 attribute_rows(const ModelGraph<float>& model, const Mat32& samples,
                     const Mat32& background, std::size_t n_coalitions,
                     SeededRng& rng, Warnings* warnings) {
  if (samples.rows == 0)
    throw std::invalid_argument("attribute_rows: no samples");
  Mat32 logits = model.predict(samples);
  Mat64 phi(samples.rows, samples.cols);
  std::vector<float> x(samples.cols);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    std::size_t cls = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
      if (logits(i, j) > logits(i, cls)) cls = j;
    std::copy(samples.row(i), samples.row(i) + samples.cols, x.begin());
    std::vector<double> row = kernel_shap(model_class_logit(model, cls), x,
                                          background, n_coalitions, rng,
                                          warnings);
    std::copy(row.begin(), row.end(), phi.row(i));
  }
  return phi;
}

GlobalRanking global_ranking(const Mat64& phi, Warnings* warnings) {
  if (phi.rows == 0 || phi.cols == 0)
    throw std::invalid_argument("global_ranking of an empty matrix");
  const std::size_t p = phi.cols;
  GlobalRanking g;
  g.s.assign(p, 0.0);
  for (std::size_t i = 0; i < phi.rows; ++i)
    for (std::size_t j = 0; j < p; ++j) g.s[j] += std::abs(phi(i, j));
  for (double& v : g.s) v /= static_cast<double>(phi.rows);

  g.pi.resize(p);
  std::iota(g.pi.begin(), g.pi.end(), 0);
  std::stable_sort(g.pi.begin(), g.pi.end(), [&](std::size_t a, std::size_t b) {
    if (g.s[a] != g.s[b]) return g.s[a] > g.s[b];
    return a < b;
  });

  g.cumulative.resize(p);
  const double total = std::accumulate(g.s.begin(), g.s.end(), 0.0);
  if (total <= 0.0) {
    warn(warnings, "all attributions are zero; ranking falls back to column order");
    std::fill(g.cumulative.begin(), g.cumulative.end(), 0.0);
    return g;
  }
  double run = 0.0;
  for (std::size_t r = 0; r < p; ++r) {
    run += g.s[g.pi[r]];
    g.cumulative[r] = run / total;
  }
  return g;
}

std::vector<std::size_t> attribution_sampling_plan(const std::vector<int>& y,
                                                   std::size_t n_samples,
                                                   SeededRng& rng) {
  if (y.empty()) throw std::invalid_argument("sampling plan over no rows");
  if (n_samples == 0) throw std::invalid_argument("sampling plan of size zero");
  if (n_samples > y.size())
    throw std::invalid_argument("sampling plan wants " +
                                std::to_string(n_samples) + " of " +
                                std::to_string(y.size()) + " rows");
  if (n_samples == y.size()) {
    std::vector<std::size_t> all(y.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
  }

  int max_label = *std::max_element(y.begin(), y.end());
  const std::size_t c = static_cast<std::size_t>(max_label) + 1;
  std::vector<std::vector<std::size_t>> rows_of(c);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) throw DataError("negative label in sampling plan");
    rows_of[static_cast<std::size_t>(y[i])].push_back(i);
  }

  // proportional quotas by largest remainder, then a minimum of one row per
  // present class while the budget allows it
  const double n = static_cast<double>(y.size());
  std::vector<std::size_t> quota(c, 0);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (rows_of[k].empty()) continue;
    double target = static_cast<double>(n_samples) *
                    static_cast<double>(rows_of[k].size()) / n;
    quota[k] = static_cast<std::size_t>(target);
    assigned += quota[k];
    rema.push_back({target - static_cast<double>(quota[k]), k});
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [frac, k] : rema) {
    if (assigned >= n_samples) break;
    if (quota[k] < rows_of[k].size()) {
      ++quota[k];
      ++assigned;
    }
  }
  // minimum-one pass: steal from the largest quota
  for (std::size_t k = 0; k < c; ++k) {
    if (rows_of[k].empty() || quota[k] > 0) continue;
    std::size_t donor = c;
    for (std::size_t o = 0; o < c; ++o)
      if (quota[o] > 1 && (donor == c || quota[o] > quota[donor])) donor = o;
    if (donor == c) break;  // budget too small to represent every class
    --quota[donor];
    quota[k] = 1;
  }

  std::vector<std::size_t> picked;
  picked.reserve(n_samples);
  for (std::size_t k = 0; k < c; ++k) {
    if (quota[k] == 0) continue;
    std::vector<std::size_t> pool = rows_of[k];
    rng.shuffle(pool);
    picked.insert(picked.end(), pool.begin(), pool.begin() + quota[k]);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

AblationResult ablate_k(const ProbeFn& probe, double full_macro_f1,
                        const std::vector<std::size_t>& pi,
                        std::vector<std::size_t> k_grid, double tolerance,
                        Warnings* warnings) {
  if (!probe) throw std::invalid_argument("ablate_k needs a probe routine");
  if (pi.empty()) throw std::invalid_argument("ablate_k: empty ranking");
  if (k_grid.empty()) throw std::invalid_argument("ablate_k: empty K grid");
  if (tolerance < 0) throw std::invalid_argument("ablation tolerance < 0");
  std::sort(k_grid.begin(), k_grid.end());
  k_grid.erase(std::unique(k_grid.begin(), k_grid.end()), k_grid.end());
  for (std::size_t k : k_grid)
    if (k < 1 || k > pi.size())
      throw std::invalid_argument("ablation K " + std::to_string(k) +
                                  " outside [1, " + std::to_string(pi.size()) +
                                  "]");

  AblationResult res;
  res.full_macro_f1 = full_macro_f1;
  res.tolerance = tolerance;
  for (std::size_t k : k_grid) {
    std::vector<std::size_t> cols(pi.begin(), pi.begin() + k);
    double f1 = probe(cols);
    res.cells.push_back({k, f1, full_macro_f1 - f1, false});
  }
  for (auto& cell : res.cells) {
    if (cell.delta_vs_full <= tolerance) {
      res.chosen_k = cell.k;
      res.tolerance_met = true;
      cell.selected = true;
      break;
    }
  }
  if (!res.tolerance_met) {
    res.chosen_k = res.cells.back().k;
    res.cells.back().selected = true;
    warn(warnings, "no K in the grid stays within " + fmt_real(tolerance) +
                       " of the full model; falling back to K = " +
                       std::to_string(res.chosen_k));
  }
  return res;
}

void write_shap_global_csv(const GlobalRanking& ranking,
                           const std::vector<std::string>& feature_names,
                           const std::string& path) {
  if (feature_names.size() != ranking.s.size())
    throw std::invalid_argument("feature name count " +
                                std::to_string(feature_names.size()) +
                                " != ranked column count " +
                                std::to_string(ranking.s.size()));
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::string csv = "rank,column,feature,s,cumulative\n";
  for (std::size_t r = 0; r < ranking.pi.size(); ++r) {
    std::size_t col = ranking.pi[r];
    csv += std::to_string(r + 1) + "," + std::to_string(col) + "," +
           quoted(feature_names[col]) + "," + fmt_real(ranking.s[col]) + "," +
           fmt_real(ranking.cumulative[r]) + "\n";
  }
  write_file_bytes(path, csv);
}

void write_ablation_csv(const AblationResult& result, const std::string& path) {
  std::string csv = "K,val_macro_f1,delta_vs_full,selected\n";
  for (const auto& c : result.cells)
    csv += std::to_string(c.k) + "," + fmt_real(c.val_macro_f1) + "," +
           fmt_real(c.delta_vs_full) + "," + (c.selected ? "1" : "0") + "\n";
  write_file_bytes(path, csv);
}

}  // namespace kids
