#include "kids/nn.hpp"

#include <cmath>
#include <cstring>

#include "kids/ioutil.hpp"

namespace kids {

std::pair<std::size_t, std::size_t> near_square_factors(std::size_t n) {
  if (n == 0) throw std::invalid_argument("cannot factor 0");
  std::size_t best = 1;
  for (std::size_t f = 1; f * f <= n; ++f)
    if (n % f == 0) best = f;
  return {n / best, best};  // hi >= lo
}

std::size_t nearest_factorable_width(std::size_t k) {
  for (std::size_t n = std::max<std::size_t>(k, 4);; ++n) {
    auto [hi, lo] = near_square_factors(n);
    if (hi <= 2 * lo) return n;
  }
}

namespace {

constexpr char kModelMagic[4] = {'K', 'I', 'D', 'S'};

enum LayerTag : std::uint8_t {
  kTagDense = 0,
  kTagBatchNorm = 1,
  kTagDropout = 2,
  kTagRelu = 3,
  kTagKron = 4,
  kTagPad = 5,
};

enum DtypeTag : std::uint8_t { kDtypeF32 = 0, kDtypeI8 = 1 };

void write_tensor(BinWriter& w, const std::string& name,
                  const Matrix<float>& t, const QuantizeFn* quantize) {
  if (quantize != nullptr && *quantize) {
    auto q = (*quantize)(name, t);
    if (q.has_value()) {
      if (q->q.size() != t.data.size())
        throw std::invalid_argument("quantizer returned " +
                                    std::to_string(q->q.size()) +
                                    " bytes for tensor " + name + " of size " +
                                    std::to_string(t.data.size()));
      w.u8(kDtypeI8);
      w.u32(static_cast<std::uint32_t>(q->q.size()));
      w.raw(q->q.data(), q->q.size());
      w.f32(q->scale);  // scale and zero point trail the payload
      w.i32(q->zero_point);
      return;
    }
  }
  w.u8(kDtypeF32);
  w.u32(static_cast<std::uint32_t>(t.data.size()));
  w.raw(t.data.data(), t.data.size() * sizeof(float));
}

void read_tensor(BinReader& r, Matrix<float>& into) {
  std::uint8_t dtype = r.u8();
  std::uint32_t count = r.u32();
  if (count != into.data.size())
    throw DataError("tensor size " + std::to_string(count) + " in " +
                    r.origin + " does not match expected " +
                    std::to_string(into.data.size()));
  if (dtype == kDtypeF32) {
    r.raw(into.data.data(), count * sizeof(float));
  } else if (dtype == kDtypeI8) {
    std::vector<std::int8_t> q(count);
    r.raw(q.data(), count);
    float scale = r.f32();
    std::int32_t zp = r.i32();
    // weight-only int8: dequantize on load
    for (std::uint32_t i = 0; i < count; ++i)
      into.data[i] = scale * (static_cast<float>(q[i]) - static_cast<float>(zp));
  } else {
    throw DataError("unknown tensor dtype tag " + std::to_string(dtype) +
                    " in " + r.origin);
  }
}

}  // namespace

std::string serialize_model(const ModelGraph<float>& model,
                            const QuantizeFn* quantize) {
  BinWriter w;
  w.raw(kModelMagic, 4);
  w.u16(1);  // version
  w.u8(1);   // little-endian payload
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer<float>* l = model.layers[i].get();
    const std::string prefix = std::to_string(i);
    if (auto* d = dynamic_cast<const DenseLayer<float>*>(l)) {
      w.u8(kTagDense);
      w.u32(static_cast<std::uint32_t>(d->w.rows));
      w.u32(static_cast<std::uint32_t>(d->w.cols));
      write_tensor(w, prefix + ".dense.w", d->w, quantize);
      write_tensor(w, prefix + ".dense.b", d->b, quantize);
    } else if (auto* bn = dynamic_cast<const BatchNormLayer<float>*>(l)) {
      w.u8(kTagBatchNorm);
      w.u32(static_cast<std::uint32_t>(bn->gamma.cols));
      w.f32(bn->eps);
      w.f32(bn->momentum);
      write_tensor(w, prefix + ".bn.gamma", bn->gamma, quantize);
      write_tensor(w, prefix + ".bn.beta", bn->beta, quantize);
      write_tensor(w, prefix + ".bn.running_mean", bn->running_mean, quantize);
      write_tensor(w, prefix + ".bn.running_var", bn->running_var, quantize);
    } else if (auto* dr = dynamic_cast<const DropoutLayer<float>*>(l)) {
      w.u8(kTagDropout);
      w.f32(dr->rate);
    } else if (dynamic_cast<const ReluLayer<float>*>(l) != nullptr) {
      w.u8(kTagRelu);
    } else if (auto* k = dynamic_cast<const KronLayer<float>*>(l)) {
      w.u8(kTagKron);
      w.u32(static_cast<std::uint32_t>(k->a1));
      w.u32(static_cast<std::uint32_t>(k->a2));
      w.u32(static_cast<std::uint32_t>(k->b1));
      w.u32(static_cast<std::uint32_t>(k->b2));
      write_tensor(w, prefix + ".kron.a", k->A, quantize);
      write_tensor(w, prefix + ".kron.b", k->B, quantize);
      write_tensor(w, prefix + ".kron.bias", k->bias, quantize);
    } else if (auto* p = dynamic_cast<const PadLayer<float>*>(l)) {
      w.u8(kTagPad);
      w.u32(static_cast<std::uint32_t>(p->in_dim()));
      w.u32(static_cast<std::uint32_t>(p->out_dim()));
    } else {
      throw std::invalid_argument("cannot serialize layer kind " +
                                  std::string(l->kind()));
    }
  }
  w.u32(crc32_bytes(w.buf.data(), w.buf.size()));
  return std::move(w.buf);
}

ModelGraph<float> deserialize_model(const std::string& bytes,
                                    const std::string& origin) {
  if (bytes.size() < 4) throw DataError("model too small: " + origin);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (stored != crc32_bytes(bytes.data(), bytes.size() - 4))
    throw DataError("model checksum mismatch in " + origin +
                    " (file corrupt or truncated)");
  BinReader r(std::string_view(bytes.data(), bytes.size() - 4), origin);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    throw DataError("bad model magic in " + origin);
  std::uint16_t version = r.u16();
  if (version != 1)
    throw DataError("unsupported model version " + std::to_string(version) +
                    " in " + origin);
  if (r.u8() != 1) throw DataError("unsupported endianness flag in " + origin);

  ModelGraph<float> g;
  SeededRng init_rng(0);  // layer ctor init is overwritten by file tensors
  std::uint32_t n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    std::uint8_t tag = r.u8();
    switch (tag) {
      case kTagDense: {
        std::uint32_t in = r.u32(), out = r.u32();
        auto d = std::make_unique<DenseLayer<float>>(in, out, init_rng);
        read_tensor(r, d->w);
        read_tensor(r, d->b);
        g.layers.push_back(std::move(d));
        break;
      }
      case kTagBatchNorm: {
        std::uint32_t dim = r.u32();
        float eps = r.f32();
        float momentum = r.f32();
        auto bn = std::make_unique<BatchNormLayer<float>>(dim, eps, momentum);
        read_tensor(r, bn->gamma);
        read_tensor(r, bn->beta);
        read_tensor(r, bn->running_mean);
        read_tensor(r, bn->running_var);
        g.layers.push_back(std::move(bn));
        break;
      }
      case kTagDropout: {
        float rate = r.f32();
        g.layers.push_back(std::make_unique<DropoutLayer<float>>(rate));
        break;
      }
      case kTagRelu:
        g.layers.push_back(std::make_unique<ReluLayer<float>>());
        break;
      case kTagKron: {
        std::uint32_t a1 = r.u32(), a2 = r.u32(), b1 = r.u32(), b2 = r.u32();
        auto k = std::make_unique<KronLayer<float>>(a1, a2, b1, b2, init_rng);
        read_tensor(r, k->A);
        read_tensor(r, k->B);
        read_tensor(r, k->bias);
        g.layers.push_back(std::move(k));
        break;
      }
      case kTagPad: {
        std::uint32_t in = r.u32(), out = r.u32();
        g.layers.push_back(std::make_unique<PadLayer<float>>(in, out));
        break;
      }
      default:
        throw DataError("unknown layer tag " + std::to_string(tag) + " in " +
                        origin);
    }
  }
  if (r.remaining() != 0)
    throw DataError("trailing bytes after model payload in " + origin);
  return g;
}

void save_model(const ModelGraph<float>& model, const std::string& path,
                const QuantizeFn* quantize) {
  write_file_bytes(path, serialize_model(model, quantize));
}

ModelGraph<float> load_model(const std::string& path) {
  return deserialize_model(read_file_bytes(path), path);
}

}  // namespace kids
