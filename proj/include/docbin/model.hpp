#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "docbin/image.hpp"
#include "docbin/tensor.hpp"

namespace docbin {

/// Architecture hyperparameters of the two-level vision transformer.
/// Defaults are the published configuration for 256x256 grayscale tiles.
struct ModelConfig {
  int height = 256;
  int width = 256;
  int channels = 1;
  int patch = 16;         // p
  int subpatch = 8;       // s
  int dim = 768;          // D, global embedding width
  int local_dim = 256;    // D', local embedding width
  int heads_global = 8;
  int heads_local = 8;
  int heads_decoder = 1;
  int global_layers = 6;
  int local_layers = 4;
  int decoder_layers = 1;
  int mlp_dim_global = 2048;
  int mlp_dim_local = 2048;
  int mlp_dim_decoder = 256;
  double ln_eps = 1e-6;
  bool attn_residual = true;

  std::size_t num_patches() const;
  std::size_t subpatches_per_patch() const;
  std::size_t patch_pixels() const { return static_cast<std::size_t>(patch) * patch; }
  std::size_t subpatch_pixels() const {
    return static_cast<std::size_t>(subpatch) * subpatch;
  }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Small configuration used for gradient checks and desk-scale training:
  /// 16x16 tiles, p=8, s=4, D=16, D'=8, one layer per stack, two heads.
  static ModelConfig tiny();

  bool operator==(const ModelConfig&) const = default;
};

/// How a parameter is treated by the optimizer's weight decay.
enum class ParamKind : std::uint8_t { weight, bias, norm, positional };

template <class T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  ParamKind kind;
};

/// Weights of one pre-norm transformer encoder block. Matrices are stored
/// input-major (x * W).
template <class T>
struct EncoderLayer {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> w_q, w_k, w_v;  // dim x dim, heads packed along columns
  Tensor<T> w_o;            // (heads * head_dim) x dim
  Tensor<T> w_l;            // dim x dim, linear layer after attention
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> mlp_w1, mlp_b1;  // dim x mlp_dim
  Tensor<T> mlp_w2, mlp_b2;  // mlp_dim x dim
};

/// Static description of an encoder stack.
struct BlockSpec {
  std::size_t dim = 0;
  std::size_t heads = 1;
  std::size_t mlp_dim = 0;
  double ln_eps = 1e-6;
  bool attn_residual = true;
};

/// Every learnable tensor of the model. Shapes follow from ModelConfig.
template <class T>
struct TLViTParams {
  Tensor<T> patch_w, patch_b;        // p^2 x D, D
  Tensor<T> subpatch_w, subpatch_b;  // s^2 x D', D'
  Tensor<T> pe_patch;                // n_patch x D
  Tensor<T> pe_subpatch;             // n_sub x D', shared across patches
  std::vector<EncoderLayer<T>> global_layers;
  std::vector<EncoderLayer<T>> local_layers;
  std::vector<EncoderLayer<T>> decoder_layers;
  Tensor<T> fusion_w, fusion_b;          // (n_sub * D') x D, D
  Tensor<T> fusion_gamma, fusion_beta;   // D
  Tensor<T> out_w, out_b;                // D x p^2, p^2

  /// Correctly shaped parameters: zeros, except LN gammas which are 1.
  static TLViTParams zeros(const ModelConfig& config);
  /// Gaussian(0, 0.02) weights and positional tables, zero biases, unit
  /// LN gammas.
  static TLViTParams initialized(const ModelConfig& config, std::mt19937_64& rng);

  /// Stable, ordered list of every parameter with its checkpoint name.
  std::vector<NamedParam<T>> named() const;

  /// Throws DimensionError naming the first tensor whose shape disagrees
  /// with `config`.
  void audit(const ModelConfig& config) const;

  void set_requires_grad(bool on) const;
  void zero_grad() const;

  /// Deep copy converted to another scalar type.
  template <class U>
  TLViTParams<U> cast() const;
  TLViTParams clone() const { return cast<T>(); }
};

/// Calls f(name, tensor, kind) for every parameter in a fixed order. Works on
/// const and mutable parameter sets.
template <class Params, class F>
void for_each_param(Params& p, F&& f) {
  f(std::string("patch_embed.weight"), p.patch_w, ParamKind::weight);
  f(std::string("patch_embed.bias"), p.patch_b, ParamKind::bias);
  f(std::string("subpatch_embed.weight"), p.subpatch_w, ParamKind::weight);
  f(std::string("subpatch_embed.bias"), p.subpatch_b, ParamKind::bias);
  f(std::string("pos_embed.patch"), p.pe_patch, ParamKind::positional);
  f(std::string("pos_embed.subpatch"), p.pe_subpatch, ParamKind::positional);
  auto layer = [&f](const std::string& prefix, auto& l) {
    f(prefix + ".ln1.gamma", l.ln1_gamma, ParamKind::norm);
    f(prefix + ".ln1.beta", l.ln1_beta, ParamKind::norm);
    f(prefix + ".attn.w_q", l.w_q, ParamKind::weight);
    f(prefix + ".attn.w_k", l.w_k, ParamKind::weight);
    f(prefix + ".attn.w_v", l.w_v, ParamKind::weight);
    f(prefix + ".attn.w_o", l.w_o, ParamKind::weight);
    f(prefix + ".attn.w_l", l.w_l, ParamKind::weight);
    f(prefix + ".ln2.gamma", l.ln2_gamma, ParamKind::norm);
    f(prefix + ".ln2.beta", l.ln2_beta, ParamKind::norm);
    f(prefix + ".mlp.w1", l.mlp_w1, ParamKind::weight);
    f(prefix + ".mlp.b1", l.mlp_b1, ParamKind::bias);
    f(prefix + ".mlp.w2", l.mlp_w2, ParamKind::weight);
    f(prefix + ".mlp.b2", l.mlp_b2, ParamKind::bias);
  };
  for (std::size_t i = 0; i < p.global_layers.size(); ++i) {
    layer("global." + std::to_string(i), p.global_layers[i]);
  }
  for (std::size_t i = 0; i < p.local_layers.size(); ++i) {
    layer("local." + std::to_string(i), p.local_layers[i]);
  }
  f(std::string("fusion.weight"), p.fusion_w, ParamKind::weight);
  f(std::string("fusion.bias"), p.fusion_b, ParamKind::bias);
  f(std::string("fusion.ln.gamma"), p.fusion_gamma, ParamKind::norm);
  f(std::string("fusion.ln.beta"), p.fusion_beta, ParamKind::norm);
  for (std::size_t i = 0; i < p.decoder_layers.size(); ++i) {
    layer("decoder." + std::to_string(i), p.decoder_layers[i]);
  }
  f(std::string("head.weight"), p.out_w, ParamKind::weight);
  f(std::string("head.bias"), p.out_b, ParamKind::bias);
}

template <class T>
template <class U>
TLViTParams<U> TLViTParams<T>::cast() const {
  TLViTParams<U> out;
  out.global_layers.resize(global_layers.size());
  out.local_layers.resize(local_layers.size());
  out.decoder_layers.resize(decoder_layers.size());
  std::vector<const Tensor<T>*> src;
  for_each_param(*this, [&src](const std::string&, const Tensor<T>& t, ParamKind) {
    src.push_back(&t);
  });
  std::size_t i = 0;
  for_each_param(out, [&src, &i](const std::string&, Tensor<U>& t, ParamKind) {
    const Tensor<T>& s = *src[i++];
    std::vector<U> values(s.data().begin(), s.data().end());
    t = Tensor<U>(s.shape(), std::move(values));
  });
  return out;
}

// ---- tokenization -------------------------------------------------------

/// [B, H, W] (or [H, W]) -> [B, n_patch, p^2]; patches row-major over the
/// grid, pixels row-major within a patch.
template <class T>
Tensor<T> patchify(const Tensor<T>& tiles, std::size_t patch);

/// [B, H, W] -> [B, n_patch, (p/s)^2, s^2]; sub-patches grouped by owning
/// patch, row-major within it.
template <class T>
Tensor<T> subpatchify(const Tensor<T>& tiles, std::size_t patch, std::size_t subpatch);

/// Exact inverse of patchify: [B, n_patch, p^2] -> [B, H, W].
template <class T>
Tensor<T> stitch(const Tensor<T>& patches, std::size_t height, std::size_t width,
                 std::size_t patch);

template <class T>
Tensor<T> embed_patches(const Tensor<T>& raw, const TLViTParams<T>& params);

template <class T>
Tensor<T> embed_subpatches(const Tensor<T>& raw, const TLViTParams<T>& params);

// ---- attention and encoder blocks ---------------------------------------

/// softmax(Q K^T / sqrt(d_k)) V over the last two axes.
template <class T>
Tensor<T> self_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v);

/// Multi-head self-attention on [..., n, dim]: per-head attention with
/// head_dim = dim / heads, heads concatenated and projected by W_O.
template <class T>
Tensor<T> multi_head_attention(const Tensor<T>& x, const EncoderLayer<T>& layer,
                               std::size_t heads);

/// y = x + MHA(LN1(x)) W_l  (or MHA(LN1(x)) W_l without the residual);
/// out = y + MLP(LN2(y)).
template <class T>
Tensor<T> encoder_block(const Tensor<T>& x, const EncoderLayer<T>& layer,
                        const BlockSpec& spec);

template <class T>
Tensor<T> encode_stack(Tensor<T> x, const std::vector<EncoderLayer<T>>& layers,
                       const BlockSpec& spec);

BlockSpec global_spec(const ModelConfig& config);
BlockSpec local_spec(const ModelConfig& config);
BlockSpec decoder_spec(const ModelConfig& config);

/// Global stack over patch tokens [B, n_patch, D].
template <class T>
Tensor<T> global_encode(const Tensor<T>& tokens, const TLViTParams<T>& params,
                        const ModelConfig& config);

/// Local stack over [B, n_patch, n_sub, D']; attention stays within each
/// patch's own sub-patch group, weights shared across patches.
template <class T>
Tensor<T> local_encode(const Tensor<T>& tokens, const TLViTParams<T>& params,
                       const ModelConfig& config);

/// Y_patch + LN(flatten(Y_sub) W_f + b_f).
template <class T>
Tensor<T> fuse(const Tensor<T>& patch_tokens, const Tensor<T>& sub_tokens,
               const TLViTParams<T>& params, const ModelConfig& config);

/// Decoder stack, projection D -> p^2, logistic squashing: [B, n_patch, p^2].
template <class T>
Tensor<T> decode(const Tensor<T>& encoded, const TLViTParams<T>& params,
                 const ModelConfig& config);

/// Full forward pass on tiles [B, H, W] -> per-pixel values in (0, 1).
template <class T>
Tensor<T> forward(const Tensor<T>& tiles, const TLViTParams<T>& params,
                  const ModelConfig& config);

/// Configuration plus parameters.
template <class T>
class TLViT {
 public:
  TLViT(ModelConfig config, TLViTParams<T> params);
  static TLViT initialized(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const TLViTParams<T>& params() const { return params_; }
  TLViTParams<T>& params() { return params_; }

  Tensor<T> forward(const Tensor<T>& tiles) const;
  /// Runs one H x W tile and returns the continuous output image.
  GrayImage predict(const GrayImage& tile) const;
  /// predict() followed by a per-pixel threshold.
  BinaryImage binarize(const GrayImage& tile, double threshold = 0.5) const;

 private:
  ModelConfig config_;
  TLViTParams<T> params_;
};

/// Scalar parameter counts per component. `embedding` holds the patch and
/// sub-patch projections and both positional tables; `local_encoder`
/// includes the fusion projection and its LN; `decoder` includes the output
/// head.
struct ParameterCount {
  std::size_t embedding = 0;
  std::size_t global_encoder = 0;
  std::size_t local_encoder = 0;
  std::size_t decoder = 0;
  std::size_t total = 0;
};

ParameterCount parameter_count(const ModelConfig& config);

/// Human-readable statement of what each ParameterCount field covers.
std::string parameter_count_boundary();

/// Converts between images and [1, H, W] tensors.
template <class T>
Tensor<T> image_to_tensor(const GrayImage& image);
template <class T>
GrayImage tensor_to_image(const Tensor<T>& tensor, std::size_t batch_index = 0);

}  // namespace docbin
