#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "kids/errors.hpp"
#include "kids/evalbench.hpp"
#include "kids/ingest.hpp"
#include "kids/kernels.hpp"
#include "kids/matrix.hpp"
#include "kids/nn.hpp"
#include "kids/rng.hpp"

namespace kids {

struct TrainConfig {
  std::size_t batch_size = 1024;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::size_t epochs = 50;
  std::size_t patience = 8;
  double dropout = 0.3;
  enum class Sched { kCosine, kStep } scheduler = Sched::kCosine;
  std::size_t step_size = 10;  // step scheduler only
  double gamma = 0.5;          // step scheduler only
  std::uint64_t seed = 42;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lr < 0) throw std::invalid_argument("lr must be nonnegative");
    if (weight_decay < 0) throw std::invalid_argument("weight_decay must be nonnegative");
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (patience < 1 || patience > epochs)
      throw std::invalid_argument("patience must lie in [1, epochs]");
    if (dropout < 0 || dropout >= 1)
      throw std::invalid_argument("dropout must lie in [0, 1)");
    if (scheduler == Sched::kStep && (step_size < 1 || gamma <= 0))
      throw std::invalid_argument("step scheduler needs step_size >= 1, gamma > 0");
  }
};

struct DistillConfig {
  std::vector<double> temperatures = {2.0, 3.0, 4.0};
  std::vector<double> alphas = {0.5, 0.7, 0.9};

  void validate() const {
    if (temperatures.empty() || alphas.empty())
      throw std::invalid_argument("distillation grids must be nonempty");
    for (double t : temperatures)
      if (t <= 0) throw std::invalid_argument("temperature must be > 0");
    for (double a : alphas)
      if (a < 0 || a > 1) throw std::invalid_argument("alpha must lie in [0, 1]");
  }
};

struct EpochStat {
  std::size_t epoch;  // 1-based
  double train_loss;
  double val_macro_f1;
  double lr;
};

struct GridCell {
  double temperature;
  double alpha;
  double val_macro_f1;
  bool chosen;
};

struct TrainReport {
  std::vector<EpochStat> curve;
  std::size_t best_epoch = 0;
  double best_val_f1 = 0.0;
  double wall_seconds = 0.0;        // informational; never serialized into artifacts
  std::vector<GridCell> grid;       // distillation only
  double chosen_temperature = 0.0;  // distillation only
  double chosen_alpha = 0.0;        // distillation only
};

// --- schedules -----------------------------------------------------------------

inline double cosine_lr(double lr0, std::size_t epoch, std::size_t total_epochs) {
  return 0.5 * lr0 *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

inline double step_lr(double lr0, std::size_t epoch, std::size_t step_size,
                      double gamma) {
  return lr0 * std::pow(gamma, static_cast<double>(epoch / step_size));
}

inline double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.scheduler == TrainConfig::Sched::kCosine
             ? cosine_lr(cfg.lr, epoch, cfg.epochs)
             : step_lr(cfg.lr, epoch, cfg.step_size, cfg.gamma);
}

// --- losses ----------------------------------------------------------------------

// w_c = N / (C * N_c): inverse class frequency, mean weight 1 when balanced.
std::vector<double> class_weights(const std::vector<std::size_t>& class_counts);

template <typename T>
struct LossResult {
  double loss;
  Matrix<T> grad;  // d loss / d logits, already batch-averaged
};

// Batch mean of w_y * (-log softmax(z)_y); row gradient w_y * (p - onehot)/B.
// Log-sum-exp stabilized; loss math runs in 64-bit regardless of T.
template <typename T>
LossResult<T> weighted_ce(const Matrix<T>& logits, const std::vector<int>& labels,
                          const std::vector<double>& w) {
  if (logits.rows != labels.size())
    throw std::invalid_argument("weighted_ce: batch size mismatch");
  if (w.size() != logits.cols)
    throw std::invalid_argument("weighted_ce: weight vector length " +
                                std::to_string(w.size()) + " != classes " +
                                std::to_string(logits.cols));
  const std::size_t batch = logits.rows, c = logits.cols;
  LossResult<T> out{0.0, Matrix<T>(batch, c)};
  std::vector<double> p(c);
  for (std::size_t i = 0; i < batch; ++i) {
    const T* row = logits.row(i);
    double mx = static_cast<double>(row[0]);
    for (std::size_t j = 1; j < c; ++j)
      mx = std::max(mx, static_cast<double>(row[j]));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      p[j] = std::exp(static_cast<double>(row[j]) - mx);
      lse += p[j];
    }
    for (std::size_t j = 0; j < c; ++j) p[j] /= lse;
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw DataError("weighted_ce: label " + std::to_string(y) +
                      " outside [0, " + std::to_string(c) + ")");
    double wy = w[static_cast<std::size_t>(y)];
    double logp_y = static_cast<double>(row[static_cast<std::size_t>(y)]) - mx -
                    std::log(lse);
    out.loss += wy * (-logp_y);
    for (std::size_t j = 0; j < c; ++j) {
      double g = wy * (p[j] - (static_cast<std::size_t>(y) == j ? 1.0 : 0.0)) /
                 static_cast<double>(batch);
      out.grad(i, j) = static_cast<T>(g);
    }
  }
  out.loss /= static_cast<double>(batch);
  return out;
}

// T^2-scaled KL(teacher ‖ student) over temperature-softened softmaxes; row
// gradient T * (softmax(z_s/T) - softmax(z_t/T)) / B.
template <typename T>
LossResult<T> kd_loss(const Matrix<T>& student_logits,
                      const Matrix<T>& teacher_logits, double temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("kd temperature must be > 0");
  if (student_logits.rows != teacher_logits.rows ||
      student_logits.cols != teacher_logits.cols)
    throw std::invalid_argument("kd_loss: logit shapes differ: " +
                                student_logits.shape_str() + " vs " +
                                teacher_logits.shape_str());
  const std::size_t batch = student_logits.rows, c = student_logits.cols;
  LossResult<T> out{0.0, Matrix<T>(batch, c)};
  std::vector<double> ps(c), pt(c), log_ps(c), log_pt(c);
  auto soften = [&](const T* row, std::vector<double>& p,
                    std::vector<double>& logp) {
    double mx = static_cast<double>(row[0]);
    for (std::size_t j = 1; j < c; ++j)
      mx = std::max(mx, static_cast<double>(row[j]));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double z = (static_cast<double>(row[j]) - mx) / temperature;
      p[j] = std::exp(z);
      lse += p[j];
    }
    double log_lse = std::log(lse);
    for (std::size_t j = 0; j < c; ++j) {
      logp[j] = (static_cast<double>(row[j]) - mx) / temperature - log_lse;
      p[j] /= lse;
    }
  };
  const double t2 = temperature * temperature;
  for (std::size_t i = 0; i < batch; ++i) {
    soften(student_logits.row(i), ps, log_ps);
    soften(teacher_logits.row(i), pt, log_pt);
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (pt[j] > 0.0) kl += pt[j] * (log_pt[j] - log_ps[j]);
    out.loss += t2 * kl;
    for (std::size_t j = 0; j < c; ++j)
      out.grad(i, j) = static_cast<T>(temperature * (ps[j] - pt[j]) /
                                      static_cast<double>(batch));
  }
  out.loss /= static_cast<double>(batch);
  return out;
}

// Eq-style convex combination (1 - alpha) * ce + alpha * kd.
inline double total_loss(double ce, double kd, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("alpha must lie in [0, 1], got " +
                                std::to_string(alpha));
  return (1.0 - alpha) * ce + alpha * kd;
}

// Per-batch loss callback: logits plus the batch's labels and dataset row
// ids (the ids index precomputed teacher logits during distillation).
template <typename T>
using BatchLossFn = std::function<LossResult<T>(
    const Matrix<T>& logits, const std::vector<int>& labels,
    const std::vector<std::size_t>& row_ids)>;

template <typename T>
BatchLossFn<T> make_ce_loss(std::vector<double> weights) {
  return [w = std::move(weights)](const Matrix<T>& logits,
                                  const std::vector<int>& labels,
                                  const std::vector<std::size_t>&) {
    return weighted_ce<T>(logits, labels, w);
  };
}

// (1-alpha)*CE + alpha*KD against rows of `teacher_logits` (indexed by dataset
// row id). alpha == 0 skips the KD term entirely, so that cell is bitwise
// identical to plain CE training; alpha == 1 likewise skips CE.
template <typename T>
BatchLossFn<T> make_distill_loss(std::vector<double> weights,
                                 const Matrix<T>* teacher_logits,
                                 double temperature, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("alpha must lie in [0, 1]");
  if (alpha > 0.0 && teacher_logits == nullptr)
    throw std::invalid_argument("distill loss needs teacher logits when alpha > 0");
  return [w = std::move(weights), teacher_logits, temperature, alpha](
             const Matrix<T>& logits, const std::vector<int>& labels,
             const std::vector<std::size_t>& row_ids) {
    if (alpha == 0.0) return weighted_ce<T>(logits, labels, w);
    Matrix<T> zt(logits.rows, logits.cols);
    for (std::size_t i = 0; i < row_ids.size(); ++i) {
      const T* src = teacher_logits->row(row_ids[i]);
      std::copy(src, src + logits.cols, zt.row(i));
    }
    LossResult<T> kd = kd_loss<T>(logits, zt, temperature);
    if (alpha == 1.0) return kd;
    LossResult<T> ce = weighted_ce<T>(logits, labels, w);
    LossResult<T> out{total_loss(ce.loss, kd.loss, alpha),
                      Matrix<T>(logits.rows, logits.cols)};
    for (std::size_t i = 0; i < out.grad.data.size(); ++i)
      out.grad.data[i] = static_cast<T>((1.0 - alpha) * ce.grad.data[i] +
                                        alpha * kd.grad.data[i]);
    return out;
  };
}

// --- optimizer -------------------------------------------------------------------

// Decoupled weight decay; moments per trainable tensor, lazily shaped.
template <typename T>
class AdamW {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8)
      : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<ParamRef<T>>& params, double lr) {
    if (m_.empty()) {
      for (auto& p : params) {
        if (!p.trainable) continue;
        m_.emplace_back(p.value->rows, p.value->cols, T(0));
        v_.emplace_back(p.value->rows, p.value->cols, T(0));
      }
    }
    ++t_;
    kern::AdamwStep<T> st;
    st.lr = static_cast<T>(lr);
    st.beta1 = static_cast<T>(beta1_);
    st.beta2 = static_cast<T>(beta2_);
    st.eps = static_cast<T>(eps_);
    st.weight_decay = static_cast<T>(wd_);
    st.bc1 = static_cast<T>(1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_))));
    st.bc2 = static_cast<T>(1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_))));
    std::size_t slot = 0;
    for (auto& p : params) {
      if (!p.trainable) continue;
      kern::Ops<T>::adamw(p.value->data.data(), m_[slot].data.data(),
                          v_[slot].data.data(), p.grad->data.data(),
                          p.value->data.size(), st);
      ++slot;
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix<T>> m_, v_;
};

// --- fit ------------------------------------------------------------------------

std::vector<int> argmax_rows(const Mat32& logits);

// Gathers the named columns (in the given order) into a dense matrix.
Mat32 select_columns(const Mat32& x, const std::vector<std::size_t>& cols);

template <typename T>
std::vector<int> argmax_rows_t(const Matrix<T>& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const T* row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j)
      if (row[j] > row[best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

// AdamW + schedule + early stopping on validation macro-F1 (strict
// improvement, patience in epochs, best-epoch weights restored). Row ids
// passed to the loss callback refer to x_train row positions. Deterministic
// given cfg.seed: epoch shuffles come from one derived stream, dropout from
// another.
template <typename T>
TrainReport fit(ModelGraph<T>& model, const Matrix<T>& x_train,
                const std::vector<int>& y_train, const Matrix<T>& x_val,
                const std::vector<int>& y_val, const TrainConfig& cfg,
                const BatchLossFn<T>& loss_fn, Warnings* warnings = nullptr) {
  cfg.validate();
  if (x_train.rows == 0) throw DataError("fit: empty training split");
  if (x_train.rows != y_train.size() || x_val.rows != y_val.size())
    throw DataError("fit: feature/label row counts differ");
  const auto t_start = std::chrono::steady_clock::now();

  model.dropout_rng = SeededRng(SeededRng::derive(cfg.seed, 1));
  SeededRng shuffle_rng(SeededRng::derive(cfg.seed, 2));
  AdamW<T> opt(cfg.weight_decay);
  auto params = model.params();

  std::size_t n_classes = model.out_dim();
  TrainReport report;
  std::vector<std::size_t> order(x_train.rows);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Matrix<T>> best_snap;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg, epoch - 1);
    shuffle_rng.shuffle(order);
    model.train_mode = true;
    double loss_sum = 0.0;
    std::size_t loss_rows = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, order.size() - start);
      Matrix<T> xb(rows, x_train.cols);
      std::vector<int> yb(rows);
      std::vector<std::size_t> ids(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        std::size_t src = order[start + r];
        std::copy(x_train.row(src), x_train.row(src) + x_train.cols, xb.row(r));
        yb[r] = y_train[src];
        ids[r] = src;
      }
      Matrix<T> logits = model.forward(xb);
      LossResult<T> res = loss_fn(logits, yb, ids);
      if (!std::isfinite(res.loss))
        throw NumericError("non-finite training loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(start / cfg.batch_size) +
                           " (lr=" + std::to_string(lr) + ")");
      loss_sum += res.loss * static_cast<double>(rows);
      loss_rows += rows;
      model.zero_grad();
      model.backward(res.grad);
      opt.step(params, lr);
    }
    model.train_mode = false;

    Matrix<T> val_logits = model.predict(x_val);
    Warnings epoch_warnings;  // transient degenerate-predictor notes, dropped
    MetricBundle vm = confusion_and_metrics(y_val, argmax_rows_t(val_logits),
                                            n_classes, &epoch_warnings);
    EpochStat stat{epoch, loss_sum / static_cast<double>(loss_rows),
                   vm.macro_f1, lr};
    report.curve.push_back(stat);

    if (vm.macro_f1 > report.best_val_f1 || report.best_epoch == 0) {
      report.best_val_f1 = vm.macro_f1;
      report.best_epoch = epoch;
      best_snap = model.snapshot();
      since_best = 0;
    } else {
      ++since_best;
      if (since_best >= cfg.patience) {
        warn(warnings, "early stop at epoch " + std::to_string(epoch) +
                           " (no val macro-F1 improvement for " +
                           std::to_string(cfg.patience) + " epochs)");
        break;
      }
    }
  }
  if (!best_snap.empty()) model.restore(best_snap);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return report;
}

// --- distillation -----------------------------------------------------------------

struct DistillResult {
  TrainReport report;
  ModelGraph<float> student;
  double temperature = 0.0;
  double alpha = 0.0;
};

// Teacher logits are computed once per split in eval mode on full-width
// inputs; each grid cell trains a fresh student on the top-K columns with a
// seed derived from (cfg.seed, T index, alpha index). Selection: highest
// validation macro-F1, earlier grid order (T-major) winning ties.
DistillResult distill(const ModelGraph<float>& teacher, const Dataset& ds,
                      const std::vector<std::size_t>& topk_columns,
                      const StudentConfig& student_cfg,
                      const DistillConfig& grid, const TrainConfig& cfg,
                      Warnings* warnings = nullptr);

// Eval-mode forward in batches (memory-bounded); returns n x C logits.
Mat32 predict_in_batches(const ModelGraph<float>& model, const Mat32& x,
                         std::size_t batch_size = 2048);

void write_curves_csv(const TrainReport& report, const std::string& path);
void write_grid_csv(const TrainReport& report, const std::string& path);

}  // namespace kids
