#include "docbin/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

#include "docbin/ops.hpp"

namespace docbin {

namespace {

using Index = std::shared_ptr<const std::vector<std::size_t>>;

std::size_t as_size(int v) { return static_cast<std::size_t>(v); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid model config: " + what);
}

// Returns (batch, H, W) for a [B, H, W] or [H, W] tensor.
template <class T>
std::array<std::size_t, 3> tile_dims(const Tensor<T>& tiles) {
  if (tiles.rank() == 2) return {1, tiles.dim(0), tiles.dim(1)};
  if (tiles.rank() == 3) return {tiles.dim(0), tiles.dim(1), tiles.dim(2)};
  throw DimensionError("expected tiles of shape [B, H, W] or [H, W], got " +
                       shape_str(tiles.shape()));
}

void check_divisible(std::size_t h, std::size_t w, std::size_t p) {
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw DimensionError("tile " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not divisible into " + std::to_string(p) + "x" +
                         std::to_string(p) + " patches");
  }
}

// patch-major position -> flat image offset, for one tile.
std::vector<std::size_t> patch_order(std::size_t h, std::size_t w, std::size_t p) {
  std::vector<std::size_t> order;
  order.reserve(h * w);
  for (std::size_t py = 0; py < h / p; ++py) {
    for (std::size_t px = 0; px < w / p; ++px) {
      for (std::size_t r = 0; r < p; ++r) {
        for (std::size_t c = 0; c < p; ++c) order.push_back((py * p + r) * w + px * p + c);
      }
    }
  }
  return order;
}

std::vector<std::size_t> subpatch_order(std::size_t h, std::size_t w, std::size_t p,
                                        std::size_t s) {
  std::vector<std::size_t> order;
  order.reserve(h * w);
  for (std::size_t py = 0; py < h / p; ++py) {
    for (std::size_t px = 0; px < w / p; ++px) {
      for (std::size_t sy = 0; sy < p / s; ++sy) {
        for (std::size_t sx = 0; sx < p / s; ++sx) {
          for (std::size_t r = 0; r < s; ++r) {
            for (std::size_t c = 0; c < s; ++c) {
              order.push_back((py * p + sy * s + r) * w + px * p + sx * s + c);
            }
          }
        }
      }
    }
  }
  return order;
}

Index batched(const std::vector<std::size_t>& per_tile, std::size_t batch) {
  auto idx = std::make_shared<std::vector<std::size_t>>();
  const std::size_t n = per_tile.size();
  idx->reserve(batch * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (const std::size_t i : per_tile) idx->push_back(b * n + i);
  }
  return idx;
}

template <class T>
Tensor<T> gaussian(Shape shape, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<T> v(numel(shape));
  for (T& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

template <class T>
EncoderLayer<T> zero_layer(std::size_t dim, std::size_t mlp) {
  EncoderLayer<T> l;
  l.ln1_gamma = Tensor<T>({dim}, T(1));
  l.ln1_beta = Tensor<T>({dim});
  l.w_q = Tensor<T>({dim, dim});
  l.w_k = Tensor<T>({dim, dim});
  l.w_v = Tensor<T>({dim, dim});
  l.w_o = Tensor<T>({dim, dim});
  l.w_l = Tensor<T>({dim, dim});
  l.ln2_gamma = Tensor<T>({dim}, T(1));
  l.ln2_beta = Tensor<T>({dim});
  l.mlp_w1 = Tensor<T>({dim, mlp});
  l.mlp_b1 = Tensor<T>({mlp});
  l.mlp_w2 = Tensor<T>({mlp, dim});
  l.mlp_b2 = Tensor<T>({dim});
  return l;
}

std::size_t layer_params(std::size_t dim, std::size_t mlp) {
  return 2 * dim + 5 * dim * dim + 2 * dim + dim * mlp + mlp + mlp * dim + dim;
}

}  // namespace

// ---- ModelConfig ----------------------------------------------------------

std::size_t ModelConfig::num_patches() const {
  return as_size(height / patch) * as_size(width / patch);
}

std::size_t ModelConfig::subpatches_per_patch() const {
  const std::size_t r = as_size(patch / subpatch);
  return r * r;
}

void ModelConfig::validate() const {
  require(height > 0 && width > 0, "height and width must be positive");
  require(channels == 1, "channels must be 1 (grayscale)");
  require(patch > 0 && subpatch > 0, "patch and subpatch must be positive");
  require(height % patch == 0 && width % patch == 0,
          "height and width must be multiples of patch");
  require(patch % subpatch == 0, "patch must be a multiple of subpatch");
  require(subpatch < patch, "subpatch must be smaller than patch");
  require(dim > 0 && local_dim > 0, "dim and local_dim must be positive");
  require(heads_global > 0 && heads_local > 0 && heads_decoder > 0,
          "head counts must be positive");
  require(dim % heads_global == 0, "dim must be divisible by heads_global");
  require(dim % heads_decoder == 0, "dim must be divisible by heads_decoder");
  require(local_dim % heads_local == 0, "local_dim must be divisible by heads_local");
  require(global_layers >= 0 && local_layers >= 0 && decoder_layers >= 0,
          "layer counts must be non-negative");
  require(mlp_dim_global > 0 && mlp_dim_local > 0 && mlp_dim_decoder > 0,
          "mlp dims must be positive");
  require(ln_eps > 0.0, "ln_eps must be positive");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.height = 16;
  c.width = 16;
  c.patch = 8;
  c.subpatch = 4;
  c.dim = 16;
  c.local_dim = 8;
  c.heads_global = 2;
  c.heads_local = 2;
  c.heads_decoder = 2;
  c.global_layers = 1;
  c.local_layers = 1;
  c.decoder_layers = 1;
  c.mlp_dim_global = 32;
  c.mlp_dim_local = 32;
  c.mlp_dim_decoder = 32;
  return c;
}

BlockSpec global_spec(const ModelConfig& c) {
  return {as_size(c.dim), as_size(c.heads_global), as_size(c.mlp_dim_global), c.ln_eps,
          c.attn_residual};
}

BlockSpec local_spec(const ModelConfig& c) {
  return {as_size(c.local_dim), as_size(c.heads_local), as_size(c.mlp_dim_local), c.ln_eps,
          c.attn_residual};
}

BlockSpec decoder_spec(const ModelConfig& c) {
  return {as_size(c.dim), as_size(c.heads_decoder), as_size(c.mlp_dim_decoder), c.ln_eps,
          c.attn_residual};
}

// ---- parameters -------------------------------------------------------------

template <class T>
TLViTParams<T> TLViTParams<T>::zeros(const ModelConfig& c) {
  c.validate();
  const std::size_t d = as_size(c.dim);
  const std::size_t dl = as_size(c.local_dim);
  const std::size_t nsub = c.subpatches_per_patch();
  TLViTParams<T> p;
  p.patch_w = Tensor<T>({c.patch_pixels(), d});
  p.patch_b = Tensor<T>({d});
  p.subpatch_w = Tensor<T>({c.subpatch_pixels(), dl});
  p.subpatch_b = Tensor<T>({dl});
  p.pe_patch = Tensor<T>({c.num_patches(), d});
  p.pe_subpatch = Tensor<T>({nsub, dl});
  for (int i = 0; i < c.global_layers; ++i) {
    p.global_layers.push_back(zero_layer<T>(d, as_size(c.mlp_dim_global)));
  }
  for (int i = 0; i < c.local_layers; ++i) {
    p.local_layers.push_back(zero_layer<T>(dl, as_size(c.mlp_dim_local)));
  }
  for (int i = 0; i < c.decoder_layers; ++i) {
    p.decoder_layers.push_back(zero_layer<T>(d, as_size(c.mlp_dim_decoder)));
  }
  p.fusion_w = Tensor<T>({nsub * dl, d});
  p.fusion_b = Tensor<T>({d});
  p.fusion_gamma = Tensor<T>({d}, T(1));
  p.fusion_beta = Tensor<T>({d});
  p.out_w = Tensor<T>({d, c.patch_pixels()});
  p.out_b = Tensor<T>({c.patch_pixels()});
  return p;
}

template <class T>
TLViTParams<T> TLViTParams<T>::initialized(const ModelConfig& c, std::mt19937_64& rng) {
  TLViTParams<T> p = zeros(c);
  for_each_param(p, [&rng](const std::string&, Tensor<T>& t, ParamKind kind) {
    if (kind == ParamKind::weight || kind == ParamKind::positional) {
      t = gaussian<T>(t.shape(), rng, 0.02);
    }
  });
  return p;
}

template <class T>
std::vector<NamedParam<T>> TLViTParams<T>::named() const {
  std::vector<NamedParam<T>> out;
  for_each_param(*this, [&out](const std::string& name, const Tensor<T>& t, ParamKind kind) {
    out.push_back({name, t, kind});
  });
  return out;
}

template <class T>
void TLViTParams<T>::audit(const ModelConfig& config) const {
  const auto expected = zeros(config).named();
  const auto actual = named();
  if (expected.size() != actual.size()) {
    throw DimensionError("parameter set has " + std::to_string(actual.size()) +
                         " tensors, config implies " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (!actual[i].tensor.defined() ||
        actual[i].tensor.shape() != expected[i].tensor.shape()) {
      throw DimensionError(
          "parameter " + expected[i].name + " has shape " +
          (actual[i].tensor.defined() ? shape_str(actual[i].tensor.shape()) : "(undefined)") +
          ", config implies " + shape_str(expected[i].tensor.shape()));
    }
  }
}

template <class T>
void TLViTParams<T>::set_requires_grad(bool on) const {
  for (auto& np : named()) np.tensor.set_requires_grad(on);
}

template <class T>
void TLViTParams<T>::zero_grad() const {
  for (auto& np : named()) np.tensor.zero_grad();
}

// ---- tokenization -----------------------------------------------------------

template <class T>
Tensor<T> patchify(const Tensor<T>& tiles, std::size_t patch) {
  const auto [b, h, w] = tile_dims(tiles);
  check_divisible(h, w, patch);
  const std::size_t n = (h / patch) * (w / patch);
  return gather(tiles, batched(patch_order(h, w, patch), b), {b, n, patch * patch});
}

template <class T>
Tensor<T> subpatchify(const Tensor<T>& tiles, std::size_t patch, std::size_t subpatch) {
  const auto [b, h, w] = tile_dims(tiles);
  check_divisible(h, w, patch);
  if (subpatch == 0 || patch % subpatch != 0) {
    throw DimensionError("patch " + std::to_string(patch) +
                         " is not divisible into sub-patches of " + std::to_string(subpatch));
  }
  const std::size_t n = (h / patch) * (w / patch);
  const std::size_t per = (patch / subpatch) * (patch / subpatch);
  return gather(tiles, batched(subpatch_order(h, w, patch, subpatch), b),
                {b, n, per, subpatch * subpatch});
}

template <class T>
Tensor<T> stitch(const Tensor<T>& patches, std::size_t height, std::size_t width,
                 std::size_t patch) {
  check_divisible(height, width, patch);
  const std::size_t n = (height / patch) * (width / patch);
  if (patches.rank() != 3 || patches.dim(1) != n || patches.dim(2) != patch * patch) {
    throw DimensionError("stitch: expected [B, " + std::to_string(n) + ", " +
                         std::to_string(patch * patch) + "] for a " + std::to_string(height) +
                         "x" + std::to_string(width) + " tile, got " +
                         shape_str(patches.shape()));
  }
  const auto order = patch_order(height, width, patch);
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  const std::size_t b = patches.dim(0);
  return gather(patches, batched(inverse, b), {b, height, width});
}

template <class T>
Tensor<T> embed_patches(const Tensor<T>& raw, const TLViTParams<T>& params) {
  return add(add(matmul(raw, params.patch_w), params.patch_b), params.pe_patch);
}

template <class T>
Tensor<T> embed_subpatches(const Tensor<T>& raw, const TLViTParams<T>& params) {
  return add(add(matmul(raw, params.subpatch_w), params.subpatch_b), params.pe_subpatch);
}

// ---- attention --------------------------------------------------------------

template <class T>
int lexicographic(const T* a, const T* b, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] < b[i]) return -1;
    if (b[i] < a[i]) return 1;
  }
  return 0;
}

// Keys (with their values) are visited in lexicographic order of their
// (key, value) rows, so every reduction over keys sees the same sequence of
// terms whatever the token order was.
template <class T>
std::pair<Tensor<T>, Tensor<T>> canonical_key_order(const Tensor<T>& k, const Tensor<T>& v) {
  const std::size_t n = k.dim(-2);
  const std::size_t dk = k.dim(-1);
  const std::size_t dv = v.dim(-1);
  const std::size_t slices = n == 0 ? 0 : k.size() / (n * dk);
  const auto kd = k.data();
  const auto vd = v.data();
  auto k_index = std::make_shared<std::vector<std::size_t>>(k.size());
  auto v_index = std::make_shared<std::vector<std::size_t>>(v.size());
  std::vector<std::size_t> order(n);
  for (std::size_t b = 0; b < slices; ++b) {
    const T* kb = kd.data() + b * n * dk;
    const T* vb = vd.data() + b * n * dv;
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      const int c = lexicographic(kb + i * dk, kb + j * dk, dk);
      if (c != 0) return c < 0;
      return lexicographic(vb + i * dv, vb + j * dv, dv) < 0;
    });
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < dk; ++c) {
        (*k_index)[(b * n + i) * dk + c] = (b * n + order[i]) * dk + c;
      }
      for (std::size_t c = 0; c < dv; ++c) {
        (*v_index)[(b * n + i) * dv + c] = (b * n + order[i]) * dv + c;
      }
    }
  }
  return {gather<T>(k, std::move(k_index), k.shape()), gather<T>(v, std::move(v_index), v.shape())};
}

template <class T>
Tensor<T> self_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  if (q.rank() < 2 || k.rank() < 2 || v.rank() < 2 || q.dim(-1) != k.dim(-1) ||
      k.dim(-2) != v.dim(-2)) {
    throw DimensionError("self_attention: incompatible Q " + shape_str(q.shape()) + ", K " +
                         shape_str(k.shape()) + ", V " + shape_str(v.shape()));
  }
  const Shape kb(k.shape().begin(), k.shape().end() - 2);
  const Shape vb(v.shape().begin(), v.shape().end() - 2);
  if (kb != vb) {
    throw DimensionError("self_attention: K " + shape_str(k.shape()) + " and V " +
                         shape_str(v.shape()) + " differ in batch dimensions");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.dim(-1)));
  const auto [ks, vs] = canonical_key_order(k, v);
  Tensor<T> scores = scale(matmul(q, transpose(ks)), inv_scale);
  return matmul(softmax(scores, -1), vs);
}

template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const EncoderLayer<T>& layer,
                               std::size_t heads) {
  if (x.rank() < 2) throw DimensionError("attention input must be [..., n, dim]");
  const std::size_t dim = x.dim(-1);
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("attention: dim " + std::to_string(dim) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t n = x.dim(-2);
  const std::size_t batch = x.size() / (n * dim);
  const std::size_t hd = dim / heads;
  const Tensor<T> x3 = reshape(x, {batch, n, dim});
  auto split = [&](const Tensor<T>& w) {
    return transpose(reshape(matmul(x3, w), {batch, n, heads, hd}), 1, 2);
  };
  const Tensor<T> attended = self_attention(split(layer.w_q), split(layer.w_k), split(layer.w_v));
  const Tensor<T> merged = reshape(transpose(attended, 1, 2), {batch, n, dim});
  return reshape(matmul(merged, layer.w_o), x.shape());
}

template <class T>
Tensor<T> encoder_block(const Tensor<T>& x, const EncoderLayer<T>& layer,
                        const BlockSpec& spec) {
  if (x.rank() < 2 || x.dim(-1) != spec.dim) {
    throw DimensionError("encoder block of width " + std::to_string(spec.dim) +
                         " applied to " + shape_str(x.shape()));
  }
  const Tensor<T> normed = layer_norm(x, layer.ln1_gamma, layer.ln1_beta, spec.ln_eps);
  const Tensor<T> attn = matmul(multi_head_attention(normed, layer, spec.heads), layer.w_l);
  const Tensor<T> y = spec.attn_residual ? add(x, attn) : attn;
  const Tensor<T> normed2 = layer_norm(y, layer.ln2_gamma, layer.ln2_beta, spec.ln_eps);
  const Tensor<T> hidden = gelu(add(matmul(normed2, layer.mlp_w1), layer.mlp_b1));
  return add(y, add(matmul(hidden, layer.mlp_w2), layer.mlp_b2));
}

template <class T>
Tensor<T> encode_stack(Tensor<T> x, const std::vector<EncoderLayer<T>>& layers,
                       const BlockSpec& spec) {
  for (const auto& layer : layers) x = encoder_block(x, layer, spec);
  return x;
}

template <class T>
Tensor<T> global_encode(const Tensor<T>& tokens, const TLViTParams<T>& params,
                        const ModelConfig& config) {
  return encode_stack(tokens, params.global_layers, global_spec(config));
}

template <class T>
Tensor<T> local_encode(const Tensor<T>& tokens, const TLViTParams<T>& params,
                       const ModelConfig& config) {
  if (tokens.rank() != 4) {
    throw DimensionError("local_encode expects [B, n_patch, n_sub, D'], got " +
                         shape_str(tokens.shape()));
  }
  const Shape s = tokens.shape();
  const Tensor<T> groups = reshape(tokens, {s[0] * s[1], s[2], s[3]});
  return reshape(encode_stack(groups, params.local_layers, local_spec(config)), s);
}

template <class T>
Tensor<T> fuse(const Tensor<T>& patch_tokens, const Tensor<T>& sub_tokens,
               const TLViTParams<T>& params, const ModelConfig& config) {
  if (sub_tokens.rank() != 4 || patch_tokens.rank() != 3 ||
      sub_tokens.dim(0) != patch_tokens.dim(0) || sub_tokens.dim(1) != patch_tokens.dim(1)) {
    throw DimensionError("fuse: patch tokens " + shape_str(patch_tokens.shape()) +
                         " and sub-patch tokens " + shape_str(sub_tokens.shape()) +
                         " disagree");
  }
  const Shape s = sub_tokens.shape();
  const Tensor<T> flat = reshape(sub_tokens, {s[0], s[1], s[2] * s[3]});
  const Tensor<T> projected = add(matmul(flat, params.fusion_w), params.fusion_b);
  return add(patch_tokens,
             layer_norm(projected, params.fusion_gamma, params.fusion_beta, config.ln_eps));
}

template <class T>
Tensor<T> decode(const Tensor<T>& encoded, const TLViTParams<T>& params,
                 const ModelConfig& config) {
  const Tensor<T> decoded = encode_stack(encoded, params.decoder_layers, decoder_spec(config));
  return sigmoid(add(matmul(decoded, params.out_w), params.out_b));
}

template <class T>
Tensor<T> forward(const Tensor<T>& tiles, const TLViTParams<T>& params,
                  const ModelConfig& config) {
  const auto [b, h, w] = tile_dims(tiles);
  if (h != as_size(config.height) || w != as_size(config.width)) {
    throw DimensionError("model expects " + std::to_string(config.height) + "x" +
                         std::to_string(config.width) + " tiles, got " + shape_str(tiles.shape()));
  }
  const std::size_t p = as_size(config.patch);
  const Tensor<T> batch = tiles.rank() == 2 ? reshape(tiles, {1, h, w}) : tiles;
  const Tensor<T> patch_tokens = embed_patches(patchify(batch, p), params);
  const Tensor<T> sub_tokens =
      embed_subpatches(subpatchify(batch, p, as_size(config.subpatch)), params);
  const Tensor<T> encoded = fuse(global_encode(patch_tokens, params, config),
                                 local_encode(sub_tokens, params, config), params, config);
  return stitch(decode(encoded, params, config), h, w, p);
}

// ---- TLViT ------------------------------------------------------------------

template <class T>
TLViT<T>::TLViT(ModelConfig config, TLViTParams<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  params_.audit(config_);
}

template <class T>
TLViT<T> TLViT<T>::initialized(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return TLViT(config, TLViTParams<T>::initialized(config, rng));
}

template <class T>
Tensor<T> TLViT<T>::forward(const Tensor<T>& tiles) const {
  return docbin::forward(tiles, params_, config_);
}

template <class T>
GrayImage TLViT<T>::predict(const GrayImage& tile) const {
  return tensor_to_image(forward(image_to_tensor<T>(tile)));
}

template <class T>
BinaryImage TLViT<T>::binarize(const GrayImage& tile, double threshold) const {
  return threshold_image(predict(tile), threshold);
}

// ---- parameter counting -----------------------------------------------------

ParameterCount parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = as_size(c.dim);
  const std::size_t dl = as_size(c.local_dim);
  const std::size_t nsub = c.subpatches_per_patch();
  ParameterCount n;
  n.embedding = c.patch_pixels() * d + d + c.subpatch_pixels() * dl + dl +
                c.num_patches() * d + nsub * dl;
  n.global_encoder = as_size(c.global_layers) * layer_params(d, as_size(c.mlp_dim_global));
  n.local_encoder = as_size(c.local_layers) * layer_params(dl, as_size(c.mlp_dim_local)) +
                    nsub * dl * d + d + 2 * d;
  n.decoder = as_size(c.decoder_layers) * layer_params(d, as_size(c.mlp_dim_decoder)) +
              d * c.patch_pixels() + c.patch_pixels();
  n.total = n.embedding + n.global_encoder + n.local_encoder + n.decoder;
  return n;
}

std::string parameter_count_boundary() {
  return "global_encoder = global transformer layers (LN, W_Q/W_K/W_V, W_O, W_l, MLP); "
         "local_encoder = local transformer layers + fusion projection and fusion LN; "
         "decoder = decoder layers + output head; "
         "embedding = patch/sub-patch projections + both positional tables";
}

// ---- image conversion -------------------------------------------------------

template <class T>
Tensor<T> image_to_tensor(const GrayImage& image) {
  std::vector<T> v(image.pixels.begin(), image.pixels.end());
  return Tensor<T>({1, image.height, image.width}, std::move(v));
}

template <class T>
GrayImage tensor_to_image(const Tensor<T>& t, std::size_t batch_index) {
  const auto [b, h, w] = tile_dims(t);
  if (batch_index >= b) {
    throw DimensionError("batch index " + std::to_string(batch_index) + " out of range for " +
                         shape_str(t.shape()));
  }
  GrayImage img(h, w);
  const auto data = t.data();
  for (std::size_t i = 0; i < h * w; ++i) img.pixels[i] = data[batch_index * h * w + i];
  return img;
}

#define DOCBIN_INSTANTIATE(T)                                                         \
  template struct TLViTParams<T>;                                                     \
  template class TLViT<T>;                                                            \
  template Tensor<T> patchify<T>(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> subpatchify<T>(const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> stitch<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor<T> embed_patches<T>(const Tensor<T>&, const TLViTParams<T>&);       \
  template Tensor<T> embed_subpatches<T>(const Tensor<T>&, const TLViTParams<T>&);    \
  template Tensor<T> self_attention<T>(const Tensor<T>&, const Tensor<T>&,            \
                                       const Tensor<T>&);                             \
  template Tensor<T> multi_head_attention<T>(const Tensor<T>&, const EncoderLayer<T>&, \
                                             std::size_t);                            \
  template Tensor<T> encoder_block<T>(const Tensor<T>&, const EncoderLayer<T>&,       \
                                      const BlockSpec&);                              \
  template Tensor<T> encode_stack<T>(Tensor<T>, const std::vector<EncoderLayer<T>>&,  \
                                     const BlockSpec&);                               \
  template Tensor<T> global_encode<T>(const Tensor<T>&, const TLViTParams<T>&,        \
                                      const ModelConfig&);                            \
  template Tensor<T> local_encode<T>(const Tensor<T>&, const TLViTParams<T>&,         \
                                     const ModelConfig&);                             \
  template Tensor<T> fuse<T>(const Tensor<T>&, const Tensor<T>&, const TLViTParams<T>&, \
                             const ModelConfig&);                                     \
  template Tensor<T> decode<T>(const Tensor<T>&, const TLViTParams<T>&,               \
                               const ModelConfig&);                                   \
  template Tensor<T> forward<T>(const Tensor<T>&, const TLViTParams<T>&,              \
                                const ModelConfig&);                                  \
  template Tensor<T> image_to_tensor<T>(const GrayImage&);                            \
  template GrayImage tensor_to_image<T>(const Tensor<T>&, std::size_t);

DOCBIN_INSTANTIATE(float)
DOCBIN_INSTANTIATE(double)
#undef DOCBIN_INSTANTIATE

}  // namespace docbin
