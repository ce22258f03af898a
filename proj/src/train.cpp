#include "kids/train.hpp"

#include <algorithm>

#include "kids/ioutil.hpp"

namespace kids {

std::vector<double> class_weights(const std::vector<std::size_t>& class_counts) {
  if (class_counts.empty()) throw DataError("class_weights: no classes");
  std::size_t n = 0;
  for (std::size_t c : class_counts) n += c;
  std::vector<double> w(class_counts.size());
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] == 0)
      throw DataError("class " + std::to_string(c) +
                      " has no training rows; cannot weight the loss");
    w[c] = static_cast<double>(n) /
           (static_cast<double>(class_counts.size()) *
            static_cast<double>(class_counts[c]));
  }
  return w;
}

std::vector<int> argmax_rows(const Mat32& logits) {
  return argmax_rows_t<float>(logits);
}

Mat32 select_columns(const Mat32& x, const std::vector<std::size_t>& cols) {
  Mat32 out(x.rows, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (cols[j] >= x.cols)
      throw std::invalid_argument("column " + std::to_string(cols[j]) +
                                  " outside matrix with " +
                                  std::to_string(x.cols) + " columns");
  for (std::size_t i = 0; i < x.rows; ++i) {
    const float* src = x.row(i);
    float* dst = out.row(i);
    for (std::size_t j = 0; j < cols.size(); ++j) dst[j] = src[cols[j]];
  }
  return out;
}

Mat32 predict_in_batches(const ModelGraph<float>& model, const Mat32& x,
                         std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  Mat32 out;
  for (std::size_t start = 0; start < x.rows; start += batch_size) {
    std::size_t rows = std::min(batch_size, x.rows - start);
    Mat32 xb(rows, x.cols);
    std::copy(x.row(start), x.row(start) + rows * x.cols, xb.data.data());
    Mat32 logits = model.predict(xb);
    if (out.rows == 0) out = Mat32(x.rows, logits.cols);
    std::copy(logits.data.begin(), logits.data.end(), out.row(start));
  }
  return out;
}

DistillResult distill(const ModelGraph<float>& teacher, const Dataset& ds,
                      const std::vector<std::size_t>& topk_columns,
                      const StudentConfig& student_cfg,
                      const DistillConfig& grid, const TrainConfig& cfg,
                      Warnings* warnings) {
  grid.validate();
  cfg.validate();
  if (topk_columns.empty())
    throw std::invalid_argument("distill: no input columns selected");

  const auto train_rows = ds.rows_with_tag(SplitTag::kTrain);
  const auto val_rows = ds.rows_with_tag(SplitTag::kVal);
  if (train_rows.empty() || val_rows.empty())
    throw DataError("distill: dataset is missing a train or val split");

  const Mat32 x_train_full = ds.x_rows(train_rows);
  const Mat32 x_val_full = ds.x_rows(val_rows);
  const std::vector<int> y_train = ds.y_rows(train_rows);
  const std::vector<int> y_val = ds.y_rows(val_rows);
  const Mat32 x_train = select_columns(x_train_full, topk_columns);
  const Mat32 x_val = select_columns(x_val_full, topk_columns);

  const std::size_t n_classes = ds.class_names.size();
  std::vector<std::size_t> train_counts(n_classes, 0);
  for (int y : y_train) ++train_counts[static_cast<std::size_t>(y)];
  std::vector<double> weights = class_weights(train_counts);

  // soft targets from the full-width teacher, computed once in eval mode
  const Mat32 teacher_train_logits = predict_in_batches(teacher, x_train_full);

  StudentConfig scfg = student_cfg;
  if (scfg.k != topk_columns.size()) {
    warn(warnings, "student input width adjusted from " +
                       std::to_string(scfg.k) + " to the " +
                       std::to_string(topk_columns.size()) +
                       " selected columns");
    scfg.k = topk_columns.size();
  }

  DistillResult best;
  std::string best_bytes;
  TrainReport best_report;

  for (std::size_t ti = 0; ti < grid.temperatures.size(); ++ti) {
    for (std::size_t ai = 0; ai < grid.alphas.size(); ++ai) {
      const double temp = grid.temperatures[ti];
      const double alpha = grid.alphas[ai];
      TrainConfig cell_cfg = cfg;
      cell_cfg.seed = SeededRng::derive(cfg.seed, ti + 1, ai + 1);

      SeededRng init_rng(SeededRng::derive(cell_cfg.seed, 3));
      ModelGraph<float> student =
          build_student<float>(scfg, n_classes, init_rng);

      auto loss = make_distill_loss<float>(weights, &teacher_train_logits,
                                           temp, alpha);
      TrainReport rep =
          fit(student, x_train, y_train, x_val, y_val, cell_cfg, loss, warnings);

      best.report.grid.push_back({temp, alpha, rep.best_val_f1, false});
      if (best_bytes.empty() || rep.best_val_f1 > best.report.best_val_f1) {
        best.report.best_val_f1 = rep.best_val_f1;
        best.report.best_epoch = rep.best_epoch;
        best_report = rep;
        best.temperature = temp;
        best.alpha = alpha;
        best_bytes = serialize_model(student);
      }
    }
  }

  best.report.curve = best_report.curve;
  best.report.wall_seconds = best_report.wall_seconds;
  best.report.chosen_temperature = best.temperature;
  best.report.chosen_alpha = best.alpha;
  for (auto& cell : best.report.grid)
    cell.chosen = (cell.temperature == best.temperature &&
                   cell.alpha == best.alpha);
  best.student = deserialize_model(best_bytes, "distilled student");
  return best;
}

void write_curves_csv(const TrainReport& report, const std::string& path) {
  std::string csv = "epoch,train_loss,val_macro_f1,lr\n";
  for (const auto& s : report.curve)
    csv += std::to_string(s.epoch) + "," + fmt_real(s.train_loss) + "," +
           fmt_real(s.val_macro_f1) + "," + fmt_real(s.lr) + "\n";
  write_file_bytes(path, csv);
}

void write_grid_csv(const TrainReport& report, const std::string& path) {
  std::string csv = "T,alpha,val_macro_f1,chosen\n";
  for (const auto& c : report.grid)
    csv += fmt_real(c.temperature) + "," + fmt_real(c.alpha) + "," +
           fmt_real(c.val_macro_f1) + "," + (c.chosen ? "1" : "0") + "\n";
  write_file_bytes(path, csv);
}

}  // namespace kids
