#include "docbin/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "docbin/errors.hpp"

namespace docbin {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'F', 'C', 'K', 'P', 'T', '1'};

class Writer {
 public:
  template <class U>
  void put(U value) {
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    const auto bits = std::bit_cast<Bits>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(U);
    using Bits = std::conditional_t<sizeof(U) == 1, std::uint8_t,
                 std::conditional_t<sizeof(U) == 2, std::uint16_t,
                 std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>>;
    return std::bit_cast<U>(static_cast<Bits>(bits));
  }
  std::string string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what +
                        " at byte " + std::to_string(pos_));
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_config(Writer& w, const ModelConfig& c) {
  const auto eps_bits = std::bit_cast<std::uint64_t>(c.ln_eps);
  const std::int32_t fields[] = {c.height, c.width, c.channels, c.patch, c.subpatch, c.dim,
                                 c.local_dim, c.heads_global, c.heads_local, c.heads_decoder,
                                 c.global_layers, c.local_layers, c.decoder_layers,
                                 c.mlp_dim_global, c.mlp_dim_local, c.mlp_dim_decoder,
                                 static_cast<std::int32_t>(eps_bits & 0xffffffffu),
                                 static_cast<std::int32_t>(eps_bits >> 32),
                                 c.attn_residual ? 1 : 0};
  for (const std::int32_t f : fields) w.put(f);
}

ModelConfig get_config(Reader& r) {
  ModelConfig c;
  int* ints[] = {&c.height, &c.width, &c.channels, &c.patch, &c.subpatch, &c.dim,
                 &c.local_dim, &c.heads_global, &c.heads_local, &c.heads_decoder,
                 &c.global_layers, &c.local_layers, &c.decoder_layers, &c.mlp_dim_global,
                 &c.mlp_dim_local, &c.mlp_dim_decoder};
  for (int* f : ints) *f = r.get<std::int32_t>("model config");
  const auto lo = static_cast<std::uint32_t>(r.get<std::int32_t>("model config"));
  const auto hi = static_cast<std::uint32_t>(r.get<std::int32_t>("model config"));
  c.ln_eps = std::bit_cast<double>((static_cast<std::uint64_t>(hi) << 32) | lo);
  const std::int32_t residual = r.get<std::int32_t>("model config");
  if (residual != 0 && residual != 1) {
    throw FormatError("checkpoint attn_residual flag is " + std::to_string(residual));
  }
  c.attn_residual = residual == 1;
  return c;
}

void put_tensors(Writer& w, const std::vector<NamedTensor>& tensors) {
  w.put(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw FormatError("tensor name too long: " + t.name);
    w.put(static_cast<std::uint16_t>(t.name.size()));
    w.raw(t.name.data(), t.name.size());
    w.put(static_cast<std::uint8_t>(t.tensor.rank()));
    for (const std::size_t d : t.tensor.shape()) w.put(static_cast<std::uint32_t>(d));
    for (const float v : t.tensor.data()) w.put(v);
  }
}

std::vector<NamedTensor> get_tensors(Reader& r) {
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>("tensor name length");
    std::string name = r.string(len, "tensor name");
    const auto rank = r.get<std::uint8_t>("tensor rank");
    Shape shape;
    for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>("tensor dims"));
    std::vector<float> values(numel(shape));
    for (float& v : values) v = r.get<float>("tensor data");
    out.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  put_config(w, ckpt.config);
  put_tensors(w, ckpt.params);
  put_tensors(w, ckpt.optimizer);
  w.put(ckpt.step);
  Writer blob;
  blob.put(static_cast<std::int32_t>(ckpt.epoch));
  blob.raw(ckpt.rng_state.data(), ckpt.rng_state.size());
  const std::vector<std::uint8_t> rng = blob.take();
  w.put(static_cast<std::uint32_t>(rng.size()));
  w.raw(rng.data(), rng.size());
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.string(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw FormatError("not a checkpoint: bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config = get_config(r);
  c.params = get_tensors(r);
  c.optimizer = get_tensors(r);
  c.step = r.get<std::uint64_t>("step counter");
  const auto blob_len = r.get<std::uint32_t>("rng length");
  if (blob_len < 4) throw FormatError("checkpoint RNG blob too short");
  c.epoch = r.get<std::int32_t>("epoch");
  c.rng_state = r.string(blob_len - 4, "rng state");
  if (!r.done()) {
    throw FormatError("checkpoint has " + std::to_string(bytes.size() - r.pos()) +
                      " trailing bytes");
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> snapshot_params(const TLViTParams<float>& params) {
  std::vector<NamedTensor> out;
  for_each_param(params, [&out](const std::string& name, const Tensor<float>& t, ParamKind) {
    out.push_back({name, t.clone()});
  });
  return out;
}

TLViTParams<float> restore_params(const Checkpoint& ckpt, const ModelConfig& config) {
  config.validate();
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : ckpt.params) by_name[t.name] = &t.tensor;
  TLViTParams<float> params = TLViTParams<float>::zeros(config);
  std::size_t used = 0;
  for_each_param(params, [&by_name, &used](const std::string& name, Tensor<float>& t, ParamKind) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks tensor " + name);
    if (it->second->shape() != t.shape()) {
      throw DimensionError("tensor " + name + " has shape " + shape_str(it->second->shape()) +
                           " in the checkpoint, configuration expects " + shape_str(t.shape()));
    }
    t = it->second->clone();
    ++used;
  });
  if (by_name.size() != ckpt.params.size()) throw FormatError("checkpoint repeats a tensor name");
  if (used != by_name.size()) {
    for (const auto& [name, t] : by_name) {
      bool known = false;
      for_each_param(params, [&](const std::string& n, const Tensor<float>&, ParamKind) {
        known = known || n == name;
      });
      if (!known) {
        throw DimensionError("tensor " + name + " in the checkpoint has no place in the configuration");
      }
    }
  }
  return params;
}

}  // namespace docbin
