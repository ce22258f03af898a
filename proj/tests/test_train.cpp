#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <vector>

#include "kids/errors.hpp"
#include "kids/ioutil.hpp"
#include "kids/evalbench.hpp"
#include "kids/ingest.hpp"
#include "kids/nn.hpp"
#include "kids/rng.hpp"
#include "kids/train.hpp"

using kids::class_weights;
using kids::kd_loss;
using kids::LossResult;
using kids::Mat32;
using kids::Mat64;
using kids::Matrix;
using kids::ModelGraph;
using kids::SeededRng;
using kids::TrainConfig;
using kids::weighted_ce;

namespace {

Mat64 random_logits(SeededRng& rng, std::size_t r, std::size_t c) {
  Mat64 m(r, c);
  for (auto& x : m.data) x = rng.uniform(-3.0, 3.0);
  return m;
}

// central finite differences of a scalar loss wrt every logit
template <typename LossFn>
void fd_grad_check(const Mat64& z, const Matrix<double>& analytic, LossFn f,
                   double tol) {
  const double h = 1e-6;
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    Mat64 zp = z, zm = z;
    zp.data[i] += h;
    zm.data[i] -= h;
    double fd = (f(zp) - f(zm)) / (2.0 * h);
    double denom = std::max({1.0, std::abs(fd), std::abs(analytic.data[i])});
    CHECK(std::abs(fd - analytic.data[i]) / denom < tol);
  }
}

// dense -> relu -> dense, no batch norm (eval output independent of epochs
// when the weights are frozen, which the lr=0 tests rely on)
ModelGraph<float> small_net(std::size_t in, std::size_t hidden, std::size_t out,
                            std::uint64_t seed) {
  SeededRng rng(seed);
  ModelGraph<float> g;
  g.layers.push_back(std::make_unique<kids::DenseLayer<float>>(in, hidden, rng));
  g.layers.push_back(std::make_unique<kids::ReluLayer<float>>());
  g.layers.push_back(std::make_unique<kids::DenseLayer<float>>(hidden, out, rng));
  return g;
}

struct Blobs {
  Mat32 x_train, x_val;
  std::vector<int> y_train, y_val;
};

// two well-separated gaussian blobs in 2-d
Blobs two_blobs(std::size_t per_class_train, std::size_t per_class_val,
                std::uint64_t seed) {
  SeededRng rng(seed);
  Blobs b;
  auto fill = [&](Mat32& x, std::vector<int>& y, std::size_t per_class) {
    x = Mat32(2 * per_class, 2);
    y.resize(2 * per_class);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
      int cls = i < per_class ? 0 : 1;
      double mu = cls == 0 ? -2.0 : 2.0;
      x(i, 0) = static_cast<float>(rng.normal(mu, 1.0));
      x(i, 1) = static_cast<float>(rng.normal(mu, 1.0));
      y[i] = cls;
    }
  };
  fill(b.x_train, b.y_train, per_class_train);
  fill(b.x_val, b.y_val, per_class_val);
  return b;
}

double val_macro_f1(const ModelGraph<float>& model, const Mat32& x,
                    const std::vector<int>& y, std::size_t c) {
  Mat32 logits = model.predict(x);
  return kids::confusion_and_metrics(y, kids::argmax_rows(logits), c, nullptr)
      .macro_f1;
}

}  // namespace

TEST_CASE("class weights") {
  auto balanced = class_weights({10, 10});
  CHECK(balanced[0] == doctest::Approx(1.0));
  CHECK(balanced[1] == doctest::Approx(1.0));

  auto skew = class_weights({90, 10});
  CHECK(skew[0] == doctest::Approx(100.0 / 180.0));
  CHECK(skew[0] == doctest::Approx(0.5556).epsilon(1e-3));
  CHECK(skew[1] == doctest::Approx(5.0));

  CHECK(class_weights({7})[0] == doctest::Approx(1.0));

  // sum over samples of w_y equals N for any count vector
  auto w = class_weights({3, 14, 159});
  double total = 3.0 * w[0] + 14.0 * w[1] + 159.0 * w[2];
  CHECK(total == doctest::Approx(3 + 14 + 159));

  CHECK_THROWS_AS(class_weights({5, 0}), kids::DataError);
  CHECK_THROWS_AS(class_weights({}), kids::DataError);
}

TEST_CASE("weighted cross-entropy values") {
  // softmax([ln 3, 0]) = (0.75, 0.25)
  Mat64 z(1, 2);
  z(0, 0) = std::log(3.0);
  z(0, 1) = 0.0;
  auto res = weighted_ce<double>(z, {0}, {1.0, 1.0});
  CHECK(res.loss == doctest::Approx(-std::log(0.75)));
  CHECK(res.loss == doctest::Approx(0.2877).epsilon(1e-3));

  // certain correct prediction: p_y -> 1, loss -> 0
  Mat64 sure(1, 2);
  sure(0, 0) = 50.0;
  sure(0, 1) = -50.0;
  CHECK(weighted_ce<double>(sure, {0}, {1.0, 1.0}).loss ==
        doctest::Approx(0.0).epsilon(1e-12));

  // doubling w_y doubles the per-sample loss
  auto once = weighted_ce<double>(z, {0}, {1.0, 1.0});
  auto twice = weighted_ce<double>(z, {0}, {2.0, 1.0});
  CHECK(twice.loss == doctest::Approx(2.0 * once.loss));

  CHECK_THROWS_AS(weighted_ce<double>(z, {0, 1}, {1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(weighted_ce<double>(z, {0}, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(weighted_ce<double>(z, {5}, {1.0, 1.0}), kids::DataError);
}

TEST_CASE("weighted cross-entropy gradient vs finite differences") {
  SeededRng rng(11);
  Mat64 z = random_logits(rng, 4, 5);
  std::vector<int> y = {3, 0, 4, 1};
  std::vector<double> w = {0.5, 1.0, 2.0, 1.5, 0.25};
  auto res = weighted_ce<double>(z, y, w);
  fd_grad_check(z, res.grad,
                [&](const Mat64& q) { return weighted_ce<double>(q, y, w).loss; },
                1e-4);
}

TEST_CASE("kd loss values") {
  SeededRng rng(13);
  Mat64 z = random_logits(rng, 3, 6);
  for (double t : {1.0, 2.0, 4.0}) {
    auto self = kd_loss<double>(z, z, t);
    CHECK(self.loss == 0.0);
    for (double g : self.grad.data) CHECK(g == 0.0);
  }

  // hand oracle: z_t = [2, 0], z_s = [0, 0], T = 2
  Mat64 zs(1, 2), zt(1, 2);
  zs(0, 0) = 0.0;
  zs(0, 1) = 0.0;
  zt(0, 0) = 2.0;
  zt(0, 1) = 0.0;
  double e = std::exp(1.0);
  double pt0 = e / (e + 1.0), pt1 = 1.0 / (e + 1.0);  // softmax([1, 0])
  double expected =
      4.0 * (pt0 * std::log(pt0 / 0.5) + pt1 * std::log(pt1 / 0.5));
  auto res = kd_loss<double>(zs, zt, 2.0);
  CHECK(res.loss == doctest::Approx(expected).epsilon(1e-12));

  // KL non-negativity on random pairs
  for (int trial = 0; trial < 20; ++trial) {
    Mat64 a = random_logits(rng, 2, 4);
    Mat64 b = random_logits(rng, 2, 4);
    CHECK(kd_loss<double>(a, b, 3.0).loss >= 0.0);
  }

  CHECK_THROWS_AS(kd_loss<double>(zs, zt, 0.0), std::invalid_argument);
  Mat64 wrong(1, 3);
  CHECK_THROWS_AS(kd_loss<double>(zs, wrong, 2.0), std::invalid_argument);
}

TEST_CASE("kd gradient vs finite differences") {
  SeededRng rng(17);
  Mat64 zs = random_logits(rng, 3, 4);
  Mat64 zt = random_logits(rng, 3, 4);
  for (double t : {1.0, 2.5}) {
    auto res = kd_loss<double>(zs, zt, t);
    fd_grad_check(zs, res.grad,
                  [&](const Mat64& q) { return kd_loss<double>(q, zt, t).loss; },
                  1e-4);
  }
}

TEST_CASE("total loss combination") {
  CHECK(kids::total_loss(1.0, 0.5, 0.0) == 1.0);
  CHECK(kids::total_loss(1.0, 0.5, 1.0) == 0.5);
  CHECK(kids::total_loss(1.0, 0.5, 0.7) == doctest::Approx(0.65));
  // monotone in each argument for interior alpha
  CHECK(kids::total_loss(2.0, 0.5, 0.3) > kids::total_loss(1.0, 0.5, 0.3));
  CHECK(kids::total_loss(1.0, 1.5, 0.3) > kids::total_loss(1.0, 0.5, 0.3));
  CHECK_THROWS_AS(kids::total_loss(1.0, 1.0, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(kids::total_loss(1.0, 1.0, 1.1), std::invalid_argument);
}

TEST_CASE("combined distill loss endpoints and mixture") {
  SeededRng rng(23);
  Matrix<float> z(5, 3), zt_all(9, 3);
  for (auto& v : z.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  for (auto& v : zt_all.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  std::vector<int> y = {0, 2, 1, 1, 0};
  std::vector<std::size_t> ids = {4, 0, 7, 2, 5};  // dataset row ids
  std::vector<double> w = {1.0, 0.8, 1.3};

  // alpha = 0: bitwise identical to plain weighted CE, teacher unused
  auto ce_fn = kids::make_ce_loss<float>(w);
  auto a0 = kids::make_distill_loss<float>(w, nullptr, 3.0, 0.0);
  auto ra = a0(z, y, ids);
  auto rb = ce_fn(z, y, ids);
  CHECK(ra.loss == rb.loss);
  CHECK(ra.grad.data == rb.grad.data);

  // alpha = 1: pure KD against the gathered teacher rows
  Matrix<float> zt(5, 3);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) zt(i, j) = zt_all(ids[i], j);
  auto a1 = kids::make_distill_loss<float>(w, &zt_all, 3.0, 1.0);
  auto r1 = a1(z, y, ids);
  auto kd = kd_loss<float>(z, zt, 3.0);
  CHECK(r1.loss == kd.loss);
  CHECK(r1.grad.data == kd.grad.data);

  // interior alpha: convex combination of the two parts
  auto mid = kids::make_distill_loss<float>(w, &zt_all, 3.0, 0.7)(z, y, ids);
  CHECK(mid.loss == doctest::Approx(0.3 * rb.loss + 0.7 * kd.loss).epsilon(1e-12));
  for (std::size_t i = 0; i < mid.grad.data.size(); ++i)
    CHECK(mid.grad.data[i] ==
          doctest::Approx(0.3 * rb.grad.data[i] + 0.7 * kd.grad.data[i])
              .epsilon(1e-5));

  CHECK_THROWS_AS(kids::make_distill_loss<float>(w, nullptr, 3.0, 0.5),
                  std::invalid_argument);
}

TEST_CASE("adamw matches the closed-form update for constant gradients") {
  // with wd = 0 and g constant, bias-corrected moments give exactly
  // p_t = p_0 - t * lr * g / (|g| + eps)
  Matrix<double> p(1, 3), g(1, 3);
  p(0, 0) = 1.0;
  p(0, 1) = -2.0;
  p(0, 2) = 0.5;
  g(0, 0) = 0.3;
  g(0, 1) = -0.7;
  g(0, 2) = 1.9;
  Matrix<double> p0 = p;
  std::vector<kids::ParamRef<double>> params = {{&p, &g, "p", true}};
  kids::AdamW<double> opt(0.0);
  const double lr = 1e-3, eps = 1e-8;
  for (int t = 0; t < 3; ++t) opt.step(params, lr);
  for (std::size_t i = 0; i < 3; ++i) {
    double expect =
        p0.data[i] - 3.0 * lr * g.data[i] / (std::abs(g.data[i]) + eps);
    CHECK(std::abs(p.data[i] - expect) < 1e-10);
  }
}

TEST_CASE("adamw weight decay is decoupled from the gradient") {
  Matrix<double> p(1, 1), g(1, 1);
  p(0, 0) = 2.0;
  g(0, 0) = 0.0;
  std::vector<kids::ParamRef<double>> params = {{&p, &g, "p", true}};
  kids::AdamW<double> opt(0.1);
  opt.step(params, 0.01);
  // zero gradient: only the decay term moves the weight
  CHECK(p(0, 0) == doctest::Approx(2.0 * (1.0 - 0.01 * 0.1)).epsilon(1e-12));

  // non-trainable tensors are left alone
  Matrix<double> frozen(1, 1), gf(1, 1);
  frozen(0, 0) = 3.0;
  gf(0, 0) = 5.0;
  std::vector<kids::ParamRef<double>> mixed = {{&p, &g, "p", true},
                                               {&frozen, &gf, "stat", false}};
  kids::AdamW<double> opt2(0.0);
  opt2.step(mixed, 0.5);
  CHECK(frozen(0, 0) == 3.0);
}

TEST_CASE("learning-rate schedules") {
  const double lr = 1e-3;
  CHECK(kids::cosine_lr(lr, 0, 50) == doctest::Approx(lr).epsilon(1e-12));
  CHECK(kids::cosine_lr(lr, 50, 50) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(kids::cosine_lr(lr, 25, 50) == doctest::Approx(lr / 2.0).epsilon(1e-12));
  for (std::size_t e = 1; e <= 50; ++e)
    CHECK(kids::cosine_lr(lr, e, 50) < kids::cosine_lr(lr, e - 1, 50));

  CHECK(kids::step_lr(1.0, 0, 10, 0.5) == 1.0);
  CHECK(kids::step_lr(1.0, 9, 10, 0.5) == 1.0);
  CHECK(kids::step_lr(1.0, 10, 10, 0.5) == 0.5);
  CHECK(kids::step_lr(1.0, 25, 10, 0.5) == 0.25);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.patience = bad.epochs + 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  kids::DistillConfig grid;
  CHECK_NOTHROW(grid.validate());
  grid.alphas = {1.5};
  CHECK_THROWS_AS(grid.validate(), std::invalid_argument);
  grid = kids::DistillConfig{};
  grid.temperatures.clear();
  CHECK_THROWS_AS(grid.validate(), std::invalid_argument);
}

TEST_CASE("fit separates a 2-class problem") {
  Blobs b = two_blobs(100, 30, 31);
  ModelGraph<float> net = small_net(2, 16, 2, 5);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.lr = 1e-2;
  cfg.epochs = 20;
  cfg.patience = 20;
  cfg.dropout = 0.0;
  cfg.seed = 7;
  auto ce = kids::make_ce_loss<float>(class_weights({100, 100}));
  kids::TrainReport rep = kids::fit(net, b.x_train, b.y_train, b.x_val,
                                    b.y_val, cfg, ce);
  CHECK(rep.best_val_f1 >= 0.99);
  REQUIRE(!rep.curve.empty());
  CHECK(rep.curve.back().train_loss < rep.curve.front().train_loss);
  // best == max over epochs, and the returned weights reproduce it
  double mx = 0.0;
  for (const auto& s : rep.curve) mx = std::max(mx, s.val_macro_f1);
  CHECK(rep.best_val_f1 == doctest::Approx(mx).epsilon(1e-12));
  CHECK(val_macro_f1(net, b.x_val, b.y_val, 2) == doctest::Approx(rep.best_val_f1));
  // lr column follows the cosine schedule
  for (const auto& s : rep.curve)
    CHECK(s.lr == doctest::Approx(kids::cosine_lr(cfg.lr, s.epoch - 1, cfg.epochs)));
}

TEST_CASE("early stopping fires after `patience` flat epochs") {
  Blobs b = two_blobs(40, 20, 37);
  ModelGraph<float> net = small_net(2, 8, 2, 9);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 0.0;  // frozen weights: the first epoch is never beaten
  cfg.epochs = 50;
  cfg.patience = 3;
  cfg.dropout = 0.0;
  cfg.seed = 1;
  kids::Warnings w;
  auto ce = kids::make_ce_loss<float>(class_weights({40, 40}));
  kids::TrainReport rep =
      kids::fit(net, b.x_train, b.y_train, b.x_val, b.y_val, cfg, ce, &w);
  CHECK(rep.curve.size() == cfg.patience + 1);
  CHECK(rep.best_epoch == 1);
  bool mentioned = false;
  for (const auto& s : w)
    mentioned = mentioned || s.find("early stop") != std::string::npos;
  CHECK(mentioned);
}

TEST_CASE("fit is bitwise deterministic given a seed") {
  Blobs b = two_blobs(50, 20, 41);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 5e-3;
  cfg.epochs = 6;
  cfg.patience = 6;
  cfg.dropout = 0.2;
  cfg.seed = 99;
  auto ce = kids::make_ce_loss<float>(class_weights({50, 50}));

  ModelGraph<float> n1 = small_net(2, 12, 2, 77);
  ModelGraph<float> n2 = small_net(2, 12, 2, 77);
  auto r1 = kids::fit(n1, b.x_train, b.y_train, b.x_val, b.y_val, cfg, ce);
  auto r2 = kids::fit(n2, b.x_train, b.y_train, b.x_val, b.y_val, cfg, ce);
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i) {
    CHECK(r1.curve[i].train_loss == r2.curve[i].train_loss);
    CHECK(r1.curve[i].val_macro_f1 == r2.curve[i].val_macro_f1);
  }
  CHECK(kids::serialize_model(n1) == kids::serialize_model(n2));

  // a different seed takes a different path
  cfg.seed = 100;
  ModelGraph<float> n3 = small_net(2, 12, 2, 77);
  auto r3 = kids::fit(n3, b.x_train, b.y_train, b.x_val, b.y_val, cfg, ce);
  bool differs = r3.curve.size() != r1.curve.size();
  for (std::size_t i = 0; !differs && i < r1.curve.size(); ++i)
    differs = r1.curve[i].train_loss != r3.curve[i].train_loss;
  CHECK(differs);
}

TEST_CASE("non-finite loss aborts with context") {
  Blobs b = two_blobs(10, 5, 43);
  ModelGraph<float> net = small_net(2, 4, 2, 3);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.patience = 2;
  cfg.dropout = 0.0;
  kids::BatchLossFn<float> poison =
      [](const Matrix<float>& logits, const std::vector<int>&,
         const std::vector<std::size_t>&) {
        return LossResult<float>{std::nan(""), Matrix<float>(logits.rows,
                                                             logits.cols)};
      };
  CHECK_THROWS_AS(
      kids::fit(net, b.x_train, b.y_train, b.x_val, b.y_val, cfg, poison),
      kids::NumericError);
}

TEST_CASE("alpha 0 distillation cell trains exactly like plain CE") {
  Blobs b = two_blobs(30, 15, 53);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.lr = 1e-2;
  cfg.epochs = 4;
  cfg.patience = 4;
  cfg.dropout = 0.0;
  cfg.seed = 5;
  auto w = class_weights({30, 30});

  ModelGraph<float> net_ce = small_net(2, 8, 2, 21);
  ModelGraph<float> net_kd = small_net(2, 8, 2, 21);
  auto r_ce = kids::fit(net_ce, b.x_train, b.y_train, b.x_val, b.y_val, cfg,
                        kids::make_ce_loss<float>(w));
  auto r_kd = kids::fit(net_kd, b.x_train, b.y_train, b.x_val, b.y_val, cfg,
                        kids::make_distill_loss<float>(w, nullptr, 2.0, 0.0));
  REQUIRE(r_ce.curve.size() == r_kd.curve.size());
  for (std::size_t i = 0; i < r_ce.curve.size(); ++i)
    CHECK(r_ce.curve[i].train_loss == r_kd.curve[i].train_loss);
  CHECK(kids::serialize_model(net_ce) == kids::serialize_model(net_kd));
}

namespace {

// small but realistic end-to-end fixture shared by the distillation tests
struct DistillFixture {
  kids::Dataset ds;
  ModelGraph<float> teacher;
  double teacher_val_f1;

  DistillFixture() {
    kids::SynthSpec spec;
    spec.class_counts = {220, 220, 220};
    spec.numeric_dim = 8;
    spec.informative_dim = 8;
    spec.cat_vocab_sizes = {};
    spec.separability = 0.9;
    SeededRng rng(404);
    kids::Schema schema;
    kids::RawTable table = kids::synthesize(spec, rng, &schema);
    auto tags = kids::split(table.labels, table.source_ids, kids::SplitRatios{},
                            rng);
    std::vector<std::size_t> fit_rows;
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == kids::SplitTag::kTrain) fit_rows.push_back(i);
    auto map = kids::fit_preprocess(table, fit_rows);
    ds = kids::build_dataset(table, schema, map, tags);

    SeededRng trng(505);
    teacher = kids::build_teacher<float>(ds.x.cols, 3, 0.1f, trng);
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.lr = 1e-3;
    cfg.epochs = 15;
    cfg.patience = 15;
    cfg.dropout = 0.1;
    cfg.seed = 606;
    auto train_rows = ds.rows_with_tag(kids::SplitTag::kTrain);
    auto val_rows = ds.rows_with_tag(kids::SplitTag::kVal);
    std::vector<std::size_t> counts(3, 0);
    for (int y : ds.y_rows(train_rows)) ++counts[static_cast<std::size_t>(y)];
    kids::fit(teacher, ds.x_rows(train_rows), ds.y_rows(train_rows),
              ds.x_rows(val_rows), ds.y_rows(val_rows), cfg,
              kids::make_ce_loss<float>(class_weights(counts)));
    teacher_val_f1 =
        val_macro_f1(teacher, ds.x_rows(val_rows), ds.y_rows(val_rows), 3);
  }
};

DistillFixture& fixture() {
  static DistillFixture f;
  return f;
}

}  // namespace

TEST_CASE("distillation grid search") {
  auto& fx = fixture();
  std::vector<std::size_t> topk = {0, 1, 2, 3, 4, 5};
  kids::StudentConfig scfg;
  scfg.k = topk.size();
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.lr = 5e-3;
  cfg.epochs = 20;
  cfg.patience = 20;
  cfg.dropout = 0.0;
  cfg.seed = 808;
  kids::DistillConfig grid;

  kids::DistillResult res =
      kids::distill(fx.teacher, fx.ds, topk, scfg, grid, cfg);

  REQUIRE(res.report.grid.size() == 9);
  // T-major enumeration with one chosen cell, the argmax (earlier wins ties)
  std::size_t chosen = 9, best = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(res.report.grid[i].temperature ==
          grid.temperatures[i / 3]);
    CHECK(res.report.grid[i].alpha == grid.alphas[i % 3]);
    if (res.report.grid[i].chosen) {
      CHECK(chosen == 9);
      chosen = i;
    }
    if (res.report.grid[i].val_macro_f1 > res.report.grid[best].val_macro_f1)
      best = i;
  }
  REQUIRE(chosen < 9);
  CHECK(chosen == best);
  CHECK(res.temperature == res.report.grid[chosen].temperature);
  CHECK(res.alpha == res.report.grid[chosen].alpha);
  CHECK(res.report.chosen_temperature == res.temperature);

  // the returned student reproduces the winning cell's validation score
  auto val_rows = fx.ds.rows_with_tag(kids::SplitTag::kVal);
  Mat32 x_val = kids::select_columns(fx.ds.x_rows(val_rows), topk);
  double f1 = val_macro_f1(res.student, x_val, fx.ds.y_rows(val_rows), 3);
  CHECK(f1 == doctest::Approx(res.report.best_val_f1).epsilon(1e-9));

  // student keeps within 2 points of the teacher on this separable fixture
  CHECK(fx.teacher_val_f1 - res.report.best_val_f1 <= 0.02);

  // deterministic: re-running the grid reproduces every cell bitwise
  kids::DistillResult res2 =
      kids::distill(fx.teacher, fx.ds, topk, scfg, grid, cfg);
  for (std::size_t i = 0; i < 9; ++i)
    CHECK(res.report.grid[i].val_macro_f1 ==
          res2.report.grid[i].val_macro_f1);
  CHECK(kids::serialize_model(res.student) ==
        kids::serialize_model(res2.student));
}

TEST_CASE("csv emission for curves and grids") {
  kids::TrainReport rep;
  rep.curve = {{1, 0.9, 0.5, 1e-3}, {2, 0.7, 0.625, 9e-4}};
  rep.grid = {{2.0, 0.5, 0.8, false}, {2.0, 0.7, 0.9, true}};
  auto dir = std::filesystem::temp_directory_path() / "kids_train_csv";
  std::filesystem::create_directories(dir);
  kids::write_curves_csv(rep, (dir / "curves.csv").string());
  kids::write_grid_csv(rep, (dir / "grid.csv").string());
  auto curves = kids::read_file_bytes((dir / "curves.csv").string());
  CHECK(curves.find("epoch,train_loss,val_macro_f1,lr\n") == 0);
  CHECK(curves.find("\n1,0.9,0.5,0.001\n") != std::string::npos);
  auto gridtxt = kids::read_file_bytes((dir / "grid.csv").string());
  CHECK(gridtxt.find("T,alpha,val_macro_f1,chosen\n") == 0);
  CHECK(gridtxt.find("2,0.7,0.9,1\n") != std::string::npos);
  CHECK(std::count(gridtxt.begin(), gridtxt.end(), '\n') == 3);
  std::filesystem::remove_all(dir);
}
