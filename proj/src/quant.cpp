#include "kids/quant.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "kids/errors.hpp"
#include "kids/ioutil.hpp"

namespace kids {

QuantizedTensor quantize_tensor(const Matrix<float>& t) {
  float peak = 0.0f;
  for (float v : t.data) {
    if (!std::isfinite(v))
      throw NumericError("cannot quantize a tensor holding a non-finite value");
    peak = std::max(peak, std::abs(v));
  }
  QuantizedTensor q;
  q.zero_point = 0;
  q.scale = peak == 0.0f ? 1.0f : peak / 127.0f;
  q.q.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    long r = std::lround(static_cast<double>(t.data[i]) /
                         static_cast<double>(q.scale));
    q.q[i] = static_cast<std::int8_t>(std::clamp(r, -127l, 127l));
  }
  return q;
}

namespace {

bool is_weight_tensor(const std::string& name) {
  return name.find(".dense.") != std::string::npos ||
         name.find(".kron.") != std::string::npos;
}

}  // namespace

QuantizeFn weight_quantizer() {
  return [](const std::string& name,
            const Matrix<float>& t) -> std::optional<QuantizedTensor> {
    if (!is_weight_tensor(name)) return std::nullopt;
    return quantize_tensor(t);
  };
}

std::string serialize_quantized(const ModelGraph<float>& model) {
  QuantizeFn fn = weight_quantizer();
  return serialize_model(model, &fn);
}

void save_quantized(const ModelGraph<float>& model, const std::string& path) {
  write_file_bytes(path, serialize_quantized(model));
}

ModelGraph<float> quantize_dequantize(const ModelGraph<float>& model) {
  return deserialize_model(serialize_quantized(model), "in-memory int8 model");
}

ParityReport parity_eval(const ModelGraph<float>& fp32_model,
                         const ModelGraph<float>& int8_model, const Mat32& x,
                         const std::vector<int>& y, std::size_t n_classes,
                         Warnings* warnings) {
  if (fp32_model.describe() != int8_model.describe())
    throw std::invalid_argument(
        "parity_eval: architectures differ:\n" + fp32_model.describe() +
        "\nvs\n" + int8_model.describe());
  if (x.rows != y.size())
    throw DataError("parity_eval: feature/label row counts differ");

  ParityReport rep;
  auto eval = [&](const ModelGraph<float>& m, const char* name) {
    Mat32 logits = m.predict(x);
    std::vector<int> pred(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols; ++j)
        if (logits(i, j) > logits(i, best)) best = j;
      pred[i] = static_cast<int>(best);
    }
    MetricBundle b = confusion_and_metrics(y, pred, n_classes, warnings);
    b.name = name;
    return b;
  };
  rep.fp32 = eval(fp32_model, "fp32");
  rep.int8 = eval(int8_model, "int8");
  rep.accuracy_delta = rep.int8.accuracy - rep.fp32.accuracy;
  rep.macro_f1_delta = rep.int8.macro_f1 - rep.fp32.macro_f1;
  return rep;
}

SizeReport size_report(const std::string& path) {
  std::error_code ec;
  std::uintmax_t bytes = std::filesystem::file_size(path, ec);
  if (ec)
    throw DataError("cannot size '" + path + "': " + ec.message());
  return {bytes, static_cast<double>(bytes) / 1024.0};
}

double compression_ratio(const std::string& reference_path,
                         const std::string& candidate_path) {
  SizeReport ref = size_report(reference_path);
  SizeReport cand = size_report(candidate_path);
  if (cand.bytes == 0)
    throw DataError("candidate file '" + candidate_path + "' is empty");
  return static_cast<double>(ref.bytes) / static_cast<double>(cand.bytes);
}

}  // namespace kids
