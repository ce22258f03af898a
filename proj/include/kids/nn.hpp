#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kids/errors.hpp"
#include "kids/matrix.hpp"
#include "kids/numcore.hpp"
#include "kids/rng.hpp"

namespace kids {

template <typename T>
struct ParamRef {
  Matrix<T>* value;
  Matrix<T>* grad;
  std::string name;
  bool trainable;  // running BN stats are captured but not optimized
};

// A layer owns its parameters, gradients, and whatever it cached during the
// last train-mode forward. infer() is the pure eval path: const, cache-free,
// safe to call concurrently on a shared model.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix<T> forward(const Matrix<T>& x, bool train, SeededRng* rng) = 0;
  virtual Matrix<T> infer(const Matrix<T>& x) const = 0;
  virtual Matrix<T> backward(const Matrix<T>& g) = 0;
  virtual void collect_params(std::vector<ParamRef<T>>& out,
                              const std::string& prefix) {}
  virtual const char* kind() const = 0;
  // 0 means "any width" (elementwise layers)
  virtual std::size_t in_dim() const { return 0; }
  virtual std::size_t out_dim() const { return 0; }
};

namespace detail {

template <typename T>
void add_bias_rows(Matrix<T>& y, const Matrix<T>& bias) {
  for (std::size_t i = 0; i < y.rows; ++i) {
    T* row = y.row(i);
    for (std::size_t j = 0; j < y.cols; ++j) row[j] += bias.data[j];
  }
}

template <typename T>
Matrix<T> col_sums(const Matrix<T>& g) {
  Matrix<T> s(1, g.cols, T(0));
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = 0; j < g.cols; ++j) s.data[j] += g(i, j);
  return s;
}

template <typename T>
void accumulate(Matrix<T>& into, const Matrix<T>& delta) {
  for (std::size_t i = 0; i < into.data.size(); ++i)
    into.data[i] += delta.data[i];
}

template <typename T>
void fan_in_uniform(Matrix<T>& w, std::size_t fan_in, SeededRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data)
    v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * bound);
}

}  // namespace detail

template <typename T>
class DenseLayer : public Layer<T> {
 public:
  Matrix<T> w;  // stored (in x out) so forward is x * w
  Matrix<T> b;  // 1 x out
  Matrix<T> gw, gb;

  DenseLayer(std::size_t in, std::size_t out, SeededRng& rng)
      : w(in, out), b(1, out, T(0)), gw(in, out, T(0)), gb(1, out, T(0)) {
    detail::fan_in_uniform(w, in, rng);
  }

  Matrix<T> forward(const Matrix<T>& x, bool, SeededRng*) override {
    x_cache_ = x;
    return infer(x);
  }
  Matrix<T> infer(const Matrix<T>& x) const override {
    Matrix<T> y = matmul(x, w);
    detail::add_bias_rows(y, b);
    return y;
  }
  Matrix<T> backward(const Matrix<T>& g) override {
    detail::accumulate(gw, matmul(transpose(x_cache_), g));
    detail::accumulate(gb, detail::col_sums(g));
    return matmul(g, transpose(w));
  }
  void collect_params(std::vector<ParamRef<T>>& out,
                      const std::string& prefix) override {
    out.push_back({&w, &gw, prefix + ".dense.w", true});
    out.push_back({&b, &gb, prefix + ".dense.b", true});
  }
  const char* kind() const override { return "dense"; }
  std::size_t in_dim() const override { return w.rows; }
  std::size_t out_dim() const override { return w.cols; }

 private:
  Matrix<T> x_cache_;
};

template <typename T>
class BatchNormLayer : public Layer<T> {
 public:
  Matrix<T> gamma, beta, running_mean, running_var;
  Matrix<T> ggamma, gbeta;
  T eps;
  T momentum;  // running = (1 - momentum) * running + momentum * batch

  BatchNormLayer(std::size_t dim, T eps_val = T(1e-5), T mom = T(0.1))
      : gamma(1, dim, T(1)),
        beta(1, dim, T(0)),
        running_mean(1, dim, T(0)),
        running_var(1, dim, T(1)),
        ggamma(1, dim, T(0)),
        gbeta(1, dim, T(0)),
        eps(eps_val),
        momentum(mom) {}

  Matrix<T> forward(const Matrix<T>& x, bool train, SeededRng*) override {
    if (!train) return infer(x);
    if (x.rows == 0) throw NumericError("batchnorm forward on empty batch");
    const std::size_t n = x.rows, d = x.cols;
    mean_ = Matrix<T>(1, d, T(0));
    var_ = Matrix<T>(1, d, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean_.data[j] += x(i, j);
    for (std::size_t j = 0; j < d; ++j) mean_.data[j] /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        T c = x(i, j) - mean_.data[j];
        var_.data[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) var_.data[j] /= static_cast<T>(n);
    invstd_ = Matrix<T>(1, d);
    for (std::size_t j = 0; j < d; ++j)
      invstd_.data[j] = T(1) / std::sqrt(var_.data[j] + eps);
    xhat_ = Matrix<T>(n, d);
    Matrix<T> y(n, d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        xhat_(i, j) = (x(i, j) - mean_.data[j]) * invstd_.data[j];
        y(i, j) = gamma.data[j] * xhat_(i, j) + beta.data[j];
      }
    for (std::size_t j = 0; j < d; ++j) {
      running_mean.data[j] =
          (T(1) - momentum) * running_mean.data[j] + momentum * mean_.data[j];
      running_var.data[j] =
          (T(1) - momentum) * running_var.data[j] + momentum * var_.data[j];
    }
    return y;
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    Matrix<T> y(x.rows, x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
      T inv = T(1) / std::sqrt(running_var.data[j] + eps);
      for (std::size_t i = 0; i < x.rows; ++i)
        y(i, j) = gamma.data[j] * (x(i, j) - running_mean.data[j]) * inv +
                  beta.data[j];
    }
    return y;
  }

  // Standard batch-norm backward through the batch statistics.
  Matrix<T> backward(const Matrix<T>& g) override {
    if (xhat_.rows != g.rows)
      throw NumericError("batchnorm backward without a matching train forward");
    const std::size_t n = g.rows, d = g.cols;
    Matrix<T> dx(n, d);
    for (std::size_t j = 0; j < d; ++j) {
      T sum_g = T(0), sum_gx = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += g(i, j);
        sum_gx += g(i, j) * xhat_(i, j);
      }
      gbeta.data[j] += sum_g;
      ggamma.data[j] += sum_gx;
      const T k = gamma.data[j] * invstd_.data[j] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i)
        dx(i, j) = k * (static_cast<T>(n) * g(i, j) - sum_g -
                        xhat_(i, j) * sum_gx);
    }
    return dx;
  }

  void collect_params(std::vector<ParamRef<T>>& out,
                      const std::string& prefix) override {
    out.push_back({&gamma, &ggamma, prefix + ".bn.gamma", true});
    out.push_back({&beta, &gbeta, prefix + ".bn.beta", true});
    out.push_back({&running_mean, nullptr, prefix + ".bn.running_mean", false});
    out.push_back({&running_var, nullptr, prefix + ".bn.running_var", false});
  }
  const char* kind() const override { return "batchnorm"; }
  std::size_t in_dim() const override { return gamma.cols; }
  std::size_t out_dim() const override { return gamma.cols; }

 private:
  Matrix<T> mean_, var_, invstd_, xhat_;
};

template <typename T>
class DropoutLayer : public Layer<T> {
 public:
  T rate;

  explicit DropoutLayer(T r) : rate(r) {
    if (!(r >= T(0) && r < T(1)))
      throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }

  Matrix<T> forward(const Matrix<T>& x, bool train, SeededRng* rng) override {
    if (!train || rate == T(0)) {
      mask_ = Matrix<T>();  // pass-through; no rng draws at rate 0
      return x;
    }
    if (rng == nullptr)
      throw NumericError("dropout needs an rng in train mode");
    const T keep = T(1) - rate;
    mask_ = Matrix<T>(x.rows, x.cols);
    Matrix<T> y(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      // inverted scaling: eval forward needs no rescale
      mask_.data[i] = (rng->uniform() >= static_cast<double>(rate))
                          ? T(1) / keep
                          : T(0);
      y.data[i] = x.data[i] * mask_.data[i];
    }
    return y;
  }
  Matrix<T> infer(const Matrix<T>& x) const override { return x; }
  Matrix<T> backward(const Matrix<T>& g) override {
    if (mask_.data.empty()) return g;
    Matrix<T> dx(g.rows, g.cols);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      dx.data[i] = g.data[i] * mask_.data[i];
    return dx;
  }
  const char* kind() const override { return "dropout"; }

 private:
  Matrix<T> mask_;
};

template <typename T>
class ReluLayer : public Layer<T> {
 public:
  Matrix<T> forward(const Matrix<T>& x, bool, SeededRng*) override {
    x_cache_ = x;
    return infer(x);
  }
  Matrix<T> infer(const Matrix<T>& x) const override {
    Matrix<T> y(x.rows, x.cols);
    kern::Ops<T>::relu(x.data.data(), y.data.data(), x.data.size());
    return y;
  }
  Matrix<T> backward(const Matrix<T>& g) override {
    Matrix<T> dx(g.rows, g.cols);
    kern::Ops<T>::relu_bwd(x_cache_.data.data(), g.data.data(),
                           dx.data.data(), g.data.size());
    return dx;
  }
  const char* kind() const override { return "relu"; }

 private:
  Matrix<T> x_cache_;
};

// Appends zero columns; backward truncates them. Used to lift the pruned
// top-K input up to the first Kronecker layer's factorable width.
template <typename T>
class PadLayer : public Layer<T> {
 public:
  PadLayer(std::size_t in, std::size_t out) : in_(in), out_(out) {
    if (out < in)
      throw std::invalid_argument("pad layer cannot shrink: " +
                                  std::to_string(in) + " -> " +
                                  std::to_string(out));
  }
  Matrix<T> forward(const Matrix<T>& x, bool, SeededRng*) override {
    return infer(x);
  }
  Matrix<T> infer(const Matrix<T>& x) const override {
    if (x.cols != in_)
      throw std::invalid_argument("pad layer expected " + std::to_string(in_) +
                                  " cols, got " + std::to_string(x.cols));
    Matrix<T> y(x.rows, out_, T(0));
    for (std::size_t i = 0; i < x.rows; ++i)
      std::copy(x.row(i), x.row(i) + in_, y.row(i));
    return y;
  }
  Matrix<T> backward(const Matrix<T>& g) override {
    Matrix<T> dx(g.rows, in_);
    for (std::size_t i = 0; i < g.rows; ++i)
      std::copy(g.row(i), g.row(i) + in_, dx.row(i));
    return dx;
  }
  const char* kind() const override { return "pad"; }
  std::size_t in_dim() const override { return in_; }
  std::size_t out_dim() const override { return out_; }

 private:
  std::size_t in_, out_;
};

// Kronecker-factorized dense layer: the virtual weight is W = A (x) B of
// shape (m x n), m = a1*b1, n = a2*b2, but only the factors are stored. Per
// row the input reshapes row-major to Xm (a2 x b2) and the output is
// flatten(A * Xm * B^T) + bias, which never materializes W.
template <typename T>
class KronLayer : public Layer<T> {
 public:
  std::size_t a1, a2, b1, b2;
  Matrix<T> A, B, bias;
  Matrix<T> gA, gB, gbias;

  KronLayer(std::size_t a1_, std::size_t a2_, std::size_t b1_, std::size_t b2_,
            SeededRng& rng)
      : a1(a1_),
        a2(a2_),
        b1(b1_),
        b2(b2_),
        A(a1_, a2_),
        B(b1_, b2_),
        bias(1, a1_ * b1_, T(0)),
        gA(a1_, a2_, T(0)),
        gB(b1_, b2_, T(0)),
        gbias(1, a1_ * b1_, T(0)) {
    if (a1 == 0 || a2 == 0 || b1 == 0 || b2 == 0)
      throw std::invalid_argument("kron layer factor dims must be positive");
    detail::fan_in_uniform(A, a2, rng);
    detail::fan_in_uniform(B, b2, rng);
  }

  std::size_t m() const { return a1 * b1; }
  std::size_t n() const { return a2 * b2; }

  Matrix<T> forward(const Matrix<T>& x, bool, SeededRng*) override {
    x_cache_ = x;
    return infer(x);
  }

  Matrix<T> infer(const Matrix<T>& x) const override {
    if (x.cols != n())
      throw std::invalid_argument("kron layer expected " + std::to_string(n()) +
                                  " cols, got " + std::to_string(x.cols));
    Matrix<T> y(x.rows, m());
    Matrix<T> xbt(a2, b1);   // Xm * B^T
    Matrix<T> axbt(a1, b1);  // A * (Xm * B^T)
    Matrix<T> bt = transpose(B);
    for (std::size_t r = 0; r < x.rows; ++r) {
      // row-major reshape: Xm(j1, j2) = x[r][j1*b2 + j2]
      kern::Ops<T>::gemm(x.row(r), bt.data.data(), xbt.data.data(), a2, b2, b1);
      kern::Ops<T>::gemm(A.data.data(), xbt.data.data(), axbt.data.data(), a1,
                         a2, b1);
      T* out = y.row(r);
      for (std::size_t i = 0; i < m(); ++i) out[i] = axbt.data[i] + bias.data[i];
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& g) override {
    if (g.cols != m() || g.rows != x_cache_.rows)
      throw std::invalid_argument("kron backward shape mismatch");
    Matrix<T> dx(g.rows, n());
    Matrix<T> bt = transpose(B);
    Matrix<T> xbt(a2, b1), xbt_t(b1, a2);
    Matrix<T> ax(a1, b2);
    Matrix<T> gm_t(b1, a1);
    Matrix<T> da(a1, a2), db(b1, b2);
    Matrix<T> atg(a2, b1), atgb(a2, b2);
    Matrix<T> at = transpose(A);
    for (std::size_t r = 0; r < g.rows; ++r) {
      const T* xr = x_cache_.row(r);
      const T* gr = g.row(r);  // Gm(i1, i2) = g[r][i1*b1 + i2]
      // dA += Gm * (Xm * B^T)^T
      kern::Ops<T>::gemm(xr, bt.data.data(), xbt.data.data(), a2, b2, b1);
      for (std::size_t i = 0; i < a2; ++i)
        for (std::size_t j = 0; j < b1; ++j) xbt_t(j, i) = xbt(i, j);
      kern::Ops<T>::gemm(gr, xbt_t.data.data(), da.data.data(), a1, b1, a2);
      detail::accumulate(gA, da);
      // dB += Gm^T * (A * Xm)
      kern::Ops<T>::gemm(A.data.data(), xr, ax.data.data(), a1, a2, b2);
      for (std::size_t i = 0; i < a1; ++i)
        for (std::size_t j = 0; j < b1; ++j) gm_t(j, i) = gr[i * b1 + j];
      kern::Ops<T>::gemm(gm_t.data.data(), ax.data.data(), db.data.data(), b1,
                         a1, b2);
      detail::accumulate(gB, db);
      // dXm = A^T * Gm * B
      kern::Ops<T>::gemm(at.data.data(), gr, atg.data.data(), a2, a1, b1);
      kern::Ops<T>::gemm(atg.data.data(), B.data.data(), atgb.data.data(), a2,
                         b1, b2);
      std::copy(atgb.data.begin(), atgb.data.end(), dx.row(r));
    }
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < m(); ++j) gbias.data[j] += g(i, j);
    return dx;
  }

  void collect_params(std::vector<ParamRef<T>>& out,
                      const std::string& prefix) override {
    out.push_back({&A, &gA, prefix + ".kron.a", true});
    out.push_back({&B, &gB, prefix + ".kron.b", true});
    out.push_back({&bias, &gbias, prefix + ".kron.bias", true});
  }
  const char* kind() const override { return "kron"; }
  std::size_t in_dim() const override { return n(); }
  std::size_t out_dim() const override { return m(); }

 private:
  Matrix<T> x_cache_;
};

// Sequential model. forward() is the training path (caches, batch-norm
// statistics, dropout draws from the graph's rng); predict() is the pure
// eval path.
template <typename T>
class ModelGraph {
 public:
  std::vector<std::unique_ptr<Layer<T>>> layers;
  bool train_mode = false;
  SeededRng dropout_rng{0};

  Matrix<T> forward(const Matrix<T>& x) {
    Matrix<T> cur = x;
    for (auto& l : layers) cur = l->forward(cur, train_mode, &dropout_rng);
    return cur;
  }

  Matrix<T> predict(const Matrix<T>& x) const {
    Matrix<T> cur = x;
    for (const auto& l : layers) cur = l->infer(cur);
    return cur;
  }

  Matrix<T> backward(const Matrix<T>& g_out) {
    Matrix<T> g = g_out;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i]->collect_params(out, std::to_string(i));
    return out;
  }

  void zero_grad() {
    for (auto& p : params())
      if (p.grad != nullptr)
        std::fill(p.grad->data.begin(), p.grad->data.end(), T(0));
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& p : params())
      if (p.trainable) n += p.value->data.size();
    return n;
  }

  // Captures every tensor including BN running stats, so restoring an
  // early-stopping snapshot recovers eval behavior exactly.
  std::vector<Matrix<T>> snapshot() {
    std::vector<Matrix<T>> out;
    for (auto& p : params()) out.push_back(*p.value);
    return out;
  }
  void restore(const std::vector<Matrix<T>>& snap) {
    auto ps = params();
    if (snap.size() != ps.size())
      throw std::invalid_argument("snapshot does not match model layout");
    for (std::size_t i = 0; i < ps.size(); ++i) *ps[i].value = snap[i];
  }

  std::size_t in_dim() const {
    for (const auto& l : layers)
      if (l->in_dim() != 0) return l->in_dim();
    return 0;
  }
  std::size_t out_dim() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      if ((*it)->out_dim() != 0) return (*it)->out_dim();
    return 0;
  }

  // Throws unless adjacent layer widths conform starting from input_dim.
  void validate_dims(std::size_t input_dim) const {
    std::size_t cur = input_dim;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l->in_dim() != 0 && l->in_dim() != cur)
        throw std::invalid_argument(
            "layer " + std::to_string(i) + " (" + l->kind() + ") expects " +
            std::to_string(l->in_dim()) + " inputs but is fed " +
            std::to_string(cur));
      if (l->out_dim() != 0) cur = l->out_dim();
    }
  }

  std::string describe() const {
    std::string s;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      s += std::to_string(i) + ": " + l->kind();
      if (l->in_dim() != 0)
        s += " " + std::to_string(l->in_dim()) + "->" +
             std::to_string(l->out_dim());
      s += "\n";
    }
    return s;
  }
};

// --- builders ---------------------------------------------------------------

// MLP with hidden widths 512/256/128, each followed by batch norm, ReLU, and
// dropout, plus a linear logit head.
template <typename T>
ModelGraph<T> build_teacher(std::size_t p, std::size_t n_classes,
                            T dropout_rate, SeededRng& rng) {
  if (p < 1) throw std::invalid_argument("teacher input dim must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("teacher needs >= 2 classes");
  ModelGraph<T> g;
  const std::size_t widths[3] = {512, 256, 128};
  std::size_t cur = p;
  for (std::size_t w : widths) {
    g.layers.push_back(std::make_unique<DenseLayer<T>>(cur, w, rng));
    g.layers.push_back(std::make_unique<BatchNormLayer<T>>(w));
    g.layers.push_back(std::make_unique<ReluLayer<T>>());
    g.layers.push_back(std::make_unique<DropoutLayer<T>>(dropout_rate));
    cur = w;
  }
  g.layers.push_back(std::make_unique<DenseLayer<T>>(cur, n_classes, rng));
  g.validate_dims(p);
  return g;
}

// Splits n into the most square factor pair (f1 >= f2, f1*f2 == n).
std::pair<std::size_t, std::size_t> near_square_factors(std::size_t n);

// Smallest width >= k whose near-square factors have ratio <= 2 (so both
// Kronecker factor shapes stay balanced).
std::size_t nearest_factorable_width(std::size_t k);

struct StudentConfig {
  std::size_t k = 32;       // pruned input width
  std::size_t pad_to = 0;   // 0 = pick nearest_factorable_width(k)
  std::size_t hidden = 0;   // 0 = 2 * pad_to
};

// pad(K -> n1) -> kron(n1 -> H) -> BN -> ReLU -> kron(H -> n1) -> BN -> ReLU
// -> dense head. Factor shapes are near-square splits of each width.
template <typename T>
ModelGraph<T> build_student(const StudentConfig& cfg, std::size_t n_classes,
                            SeededRng& rng) {
  if (cfg.k < 1) throw std::invalid_argument("student input dim must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("student needs >= 2 classes");
  std::size_t n1 = cfg.pad_to != 0 ? cfg.pad_to : nearest_factorable_width(cfg.k);
  if (n1 < cfg.k)
    throw std::invalid_argument("student pad_to " + std::to_string(n1) +
                                " is smaller than k " + std::to_string(cfg.k));
  std::size_t h = cfg.hidden != 0 ? cfg.hidden : 2 * n1;
  auto [n1_hi, n1_lo] = near_square_factors(n1);
  auto [h_hi, h_lo] = near_square_factors(h);
  if (n1_hi > 2 * n1_lo || h_hi > 2 * h_lo)
    throw std::invalid_argument(
        "requested widths do not factor near-square: pad " +
        std::to_string(n1) + " = " + std::to_string(n1_hi) + "x" +
        std::to_string(n1_lo) + ", hidden " + std::to_string(h) + " = " +
        std::to_string(h_hi) + "x" + std::to_string(h_lo) +
        "; nearest factorable padding is " +
        std::to_string(nearest_factorable_width(cfg.k)));

  ModelGraph<T> g;
  g.layers.push_back(std::make_unique<PadLayer<T>>(cfg.k, n1));
  // kron1: (h_hi x n1_hi) (x) (h_lo x n1_lo): n1 -> h
  g.layers.push_back(
      std::make_unique<KronLayer<T>>(h_hi, n1_hi, h_lo, n1_lo, rng));
  g.layers.push_back(std::make_unique<BatchNormLayer<T>>(h));
  g.layers.push_back(std::make_unique<ReluLayer<T>>());
  // kron2: (n1_hi x h_hi) (x) (n1_lo x h_lo): h -> n1
  g.layers.push_back(
      std::make_unique<KronLayer<T>>(n1_hi, h_hi, n1_lo, h_lo, rng));
  g.layers.push_back(std::make_unique<BatchNormLayer<T>>(n1));
  g.layers.push_back(std::make_unique<ReluLayer<T>>());
  g.layers.push_back(std::make_unique<DenseLayer<T>>(n1, n_classes, rng));
  g.validate_dims(cfg.k);
  return g;
}

// --- serialization (f32 models) ----------------------------------------------

struct QuantizedTensor {
  std::vector<std::int8_t> q;
  float scale;
  std::int32_t zero_point;
};

// Returns a quantized payload for tensors that should be stored as int8, or
// nullopt to store the tensor as f32. Supplied by the quantization module.
using QuantizeFn = std::function<std::optional<QuantizedTensor>(
    const std::string& name, const Matrix<float>& value)>;

std::string serialize_model(const ModelGraph<float>& model,
                            const QuantizeFn* quantize = nullptr);
// Accepts both f32 and int8 tensors; int8 dequantizes on load.
ModelGraph<float> deserialize_model(const std::string& bytes,
                                    const std::string& origin = "model bytes");

void save_model(const ModelGraph<float>& model, const std::string& path,
                const QuantizeFn* quantize = nullptr);
ModelGraph<float> load_model(const std::string& path);

}  // namespace kids
