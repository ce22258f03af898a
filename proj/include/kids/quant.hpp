#pragma once

#include <cstdint>
#include <string>

#include "kids/evalbench.hpp"
#include "kids/matrix.hpp"
#include "kids/nn.hpp"

namespace kids {

// Per-tensor symmetric int8: scale = max|w| / 127 (1.0 sentinel for all-zero
// tensors), zero_point = 0, round half away from zero, clamp to [-127, 127].
// Dequantization error is bounded by scale / 2 per element.
QuantizedTensor quantize_tensor(const Matrix<float>& t);

// Selects the weight- and bias-carrying tensors (dense and factorized layers)
// for int8 storage; batch-norm tensors stay fp32.
QuantizeFn weight_quantizer();

// Serialized model with int8 weight payloads (dequantize-on-load semantics:
// reading the file back yields a plain fp32 model).
std::string serialize_quantized(const ModelGraph<float>& model);
void save_quantized(const ModelGraph<float>& model, const std::string& path);

// In-memory quantize -> dequantize round trip, i.e. the model the int8 file
// will reproduce at load time.
ModelGraph<float> quantize_dequantize(const ModelGraph<float>& model);

struct ParityReport {
  MetricBundle fp32;
  MetricBundle int8;
  double accuracy_delta;  // int8 - fp32
  double macro_f1_delta;
};

// Evaluates both variants on identical rows and reports the metric deltas.
ParityReport parity_eval(const ModelGraph<float>& fp32_model,
                         const ModelGraph<float>& int8_model, const Mat32& x,
                         const std::vector<int>& y, std::size_t n_classes,
                         Warnings* warnings = nullptr);

struct SizeReport {
  std::uintmax_t bytes = 0;
  double kb = 0.0;
};

SizeReport size_report(const std::string& path);

// reference size / candidate size, from the files on disk
double compression_ratio(const std::string& reference_path,
                         const std::string& candidate_path);

}  // namespace kids
