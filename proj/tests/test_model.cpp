#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "docbin/ablation.hpp"
#include "docbin/errors.hpp"
#include "docbin/model.hpp"
#include "docbin/ops.hpp"
#include "docbin/training.hpp"
#include "test_support.hpp"

using namespace docbin;
using docbin::test::grad_check;
using docbin::test::random_tensor;
using V = std::vector<Tensor<double>>;

namespace {

TLViTParams<double> tiny_params(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return TLViTParams<double>::initialized(ModelConfig::tiny(), rng);
}

/// Every weight and bias zero; LN gammas one, betas zero.
EncoderLayer<double> zero_layer(std::size_t dim, std::size_t mlp) {
  return {Tensor<double>(Shape{dim}, 1.0), Tensor<double>(Shape{dim}),
          Tensor<double>(Shape{dim, dim}),  Tensor<double>(Shape{dim, dim}),
          Tensor<double>(Shape{dim, dim}),  Tensor<double>(Shape{dim, dim}),
          Tensor<double>(Shape{dim, dim}),  Tensor<double>(Shape{dim}, 1.0),
          Tensor<double>(Shape{dim}),       Tensor<double>(Shape{dim, mlp}),
          Tensor<double>(Shape{mlp}),       Tensor<double>(Shape{mlp, dim}),
          Tensor<double>(Shape{dim})};
}

EncoderLayer<double> random_layer(std::size_t dim, std::size_t mlp, std::mt19937_64& rng) {
  return {random_tensor({dim}, rng, 0.5, 1.5), random_tensor({dim}, rng, -0.2, 0.2),
          random_tensor({dim, dim}, rng, -0.5, 0.5), random_tensor({dim, dim}, rng, -0.5, 0.5),
          random_tensor({dim, dim}, rng, -0.5, 0.5), random_tensor({dim, dim}, rng, -0.5, 0.5),
          random_tensor({dim, dim}, rng, -0.5, 0.5), random_tensor({dim}, rng, 0.5, 1.5),
          random_tensor({dim}, rng, -0.2, 0.2),     random_tensor({dim, mlp}, rng, -0.5, 0.5),
          random_tensor({mlp}, rng, -0.2, 0.2),     random_tensor({mlp, dim}, rng, -0.5, 0.5),
          random_tensor({dim}, rng, -0.2, 0.2)};
}

bool same_bits(const Tensor<double>& a, const Tensor<double>& b) {
  return a.shape() == b.shape() &&
         std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(ModelConfig{}.validate());
  CHECK_NOTHROW(ModelConfig::tiny().validate());
  ModelConfig c;
  c.height = 250;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.subpatch = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.subpatch = 16;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.heads_global = 7;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.local_dim = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.channels = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig{}.num_patches() == 256);
  CHECK(ModelConfig{}.subpatches_per_patch() == 4);
}

TEST_CASE("patchify layout and round trip") {
  std::mt19937_64 rng(2);
  const Tensor<double> x = random_tensor({1, 256, 256}, rng, 0, 1);
  const Tensor<double> p = patchify(x, 16);
  CHECK(p.shape() == Shape{1, 256, 256});
  // patch 17 is grid row 1, column 1; its pixel (2, 3) is image (18, 19)
  CHECK(p.data()[17 * 256 + 2 * 16 + 3] == x.data()[18 * 256 + 19]);
  CHECK(same_bits(stitch(p, 256, 256, 16), x));

  const Tensor<double> small = random_tensor({1, 16, 16}, rng);
  const Tensor<double> one = patchify(small, 16);
  CHECK(one.shape() == Shape{1, 1, 256});
  CHECK(std::equal(one.data().begin(), one.data().end(), small.data().begin()));

  CHECK_THROWS_AS(patchify(random_tensor({1, 20, 16}, rng), 16), DimensionError);
}

TEST_CASE("subpatchify groups sub-patches by patch") {
  std::mt19937_64 rng(3);
  const Tensor<double> x = random_tensor({2, 32, 32}, rng, 0, 1);
  const Tensor<double> sp = subpatchify(x, 16, 8);
  CHECK(sp.shape() == Shape{2, 4, 4, 64});

  const Tensor<double> p = patchify(x, 16);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> from_patch(p.data().begin() + (b * 4 + i) * 256,
                                     p.data().begin() + (b * 4 + i + 1) * 256);
      std::vector<double> from_sub(sp.data().begin() + (b * 4 + i) * 256,
                                   sp.data().begin() + (b * 4 + i + 1) * 256);
      std::sort(from_patch.begin(), from_patch.end());
      std::sort(from_sub.begin(), from_sub.end());
      CHECK(from_patch == from_sub);
    }
  }
  // sub-patch 1 of patch 0 starts at image column 8
  CHECK(sp.data()[1 * 64] == x.data()[8]);

  const Tensor<double> same = subpatchify(x, 16, 16);
  CHECK(same.shape() == Shape{2, 4, 1, 256});
  CHECK(std::equal(same.data().begin(), same.data().end(), p.data().begin()));
  CHECK_THROWS_AS(subpatchify(x, 16, 6), DimensionError);
}

TEST_CASE("stitch") {
  const Tensor<double> constant(Shape{1, 4, 64}, 0.25);
  const Tensor<double> img = stitch(constant, 16, 16, 8);
  for (const double v : img.data()) CHECK(v == 0.25);

  std::mt19937_64 rng(4);
  const Tensor<double> x = random_tensor({1, 16, 16}, rng);
  const Tensor<double> p = patchify(x, 8);
  Tensor<double> swapped = p.clone();
  std::swap_ranges(swapped.data().begin(), swapped.data().begin() + 64,
                   swapped.data().begin() + 64);
  CHECK_FALSE(same_bits(stitch(swapped, 16, 16, 8), x));
  CHECK_THROWS_AS(stitch(p, 16, 24, 8), DimensionError);
}

TEST_CASE("embeddings") {
  const ModelConfig cfg = ModelConfig::tiny();
  std::mt19937_64 rng(5);
  TLViTParams<double> params = tiny_params();
  const Tensor<double> x = random_tensor({1, 16, 16}, rng, 0, 1);
  const Tensor<double> raw = patchify(x, 8);

  TLViTParams<double> no_pe = params.clone();
  no_pe.pe_patch = Tensor<double>(no_pe.pe_patch.shape());
  const Tensor<double> projected = embed_patches(raw, no_pe);
  CHECK(same_bits(projected, add(matmul(raw, params.patch_w), params.patch_b)));

  TLViTParams<double> zero_proj = params.clone();
  zero_proj.patch_w = Tensor<double>(params.patch_w.shape());
  zero_proj.subpatch_w = Tensor<double>(params.subpatch_w.shape());
  const Tensor<double> pe_only = embed_patches(raw, zero_proj);
  CHECK(std::equal(pe_only.data().begin(), pe_only.data().end(), params.pe_patch.data().begin()));

  const Tensor<double> sub_pe = embed_subpatches(subpatchify(x, 8, 4), zero_proj);
  CHECK(sub_pe.shape() == Shape{1, 4, 4, 8});
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::equal(sub_pe.data().begin() + i * 32, sub_pe.data().begin() + (i + 1) * 32,
                     params.pe_subpatch.data().begin()));
  }

  // identical pixel content in patches 0 and 3
  Tensor<double> twin = x.clone();
  for (std::size_t r = 0; r < 8; ++r) {
    for (std::size_t c = 0; c < 8; ++c) twin.data()[(r + 8) * 16 + c + 8] = twin.data()[r * 16 + c];
  }
  const Tensor<double> sub = embed_subpatches(subpatchify(twin, 8, 4), params);
  CHECK(std::equal(sub.data().begin(), sub.data().begin() + 32, sub.data().begin() + 3 * 32));
  (void)cfg;
}

TEST_CASE("default-size embedding shapes") {
  const ModelConfig cfg;
  const TLViTParams<float> params = TLViTParams<float>::zeros(cfg);
  const Tensor<float> x(Shape{1, 256, 256}, 0.5f);
  CHECK(embed_patches(patchify(x, 16), params).shape() == Shape{1, 256, 768});
  CHECK(embed_subpatches(subpatchify(x, 16, 8), params).shape() == Shape{1, 256, 4, 256});
  CHECK(global_spec(cfg).dim / global_spec(cfg).heads == 96);
}

TEST_CASE("self attention cases") {
  std::mt19937_64 rng(6);
  const Tensor<double> q1 = random_tensor({1, 4}, rng);
  const Tensor<double> k1 = random_tensor({1, 4}, rng);
  const Tensor<double> v1 = random_tensor({1, 4}, rng);
  CHECK(same_bits(self_attention(q1, k1, v1), v1));

  const Tensor<double> q0(Shape{3, 2}, 0.0);
  const Tensor<double> v = random_tensor({3, 2}, rng);
  const Tensor<double> uniform = self_attention(q0, random_tensor({3, 2}, rng), v);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 2; ++c) {
      const double mean = (v.data()[c] + v.data()[2 + c] + v.data()[4 + c]) / 3.0;
      CHECK(std::abs(uniform.data()[r * 2 + c] - mean) <= 1e-15);
    }
  }

  // Hand-expanded three-token attention.
  const Tensor<double> q = random_tensor({3, 2}, rng);
  const Tensor<double> k = random_tensor({3, 2}, rng);
  const Tensor<double> out = self_attention(q, k, v);
  for (std::size_t i = 0; i < 3; ++i) {
    double w[3];
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double s = (q.data()[i * 2] * k.data()[j * 2] + q.data()[i * 2 + 1] * k.data()[j * 2 + 1]) /
                       std::sqrt(2.0);
      w[j] = std::exp(s);
      z += w[j];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expect += w[j] / z * v.data()[j * 2 + c];
      CHECK(std::abs(out.data()[i * 2 + c] - expect) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(self_attention(q, random_tensor({3, 3}, rng), v), DimensionError);
}

TEST_CASE("multi-head attention") {
  std::mt19937_64 rng(7);
  const EncoderLayer<double> layer = random_layer(8, 16, rng);
  const Tensor<double> x = random_tensor({5, 8}, rng);

  const Tensor<double> one_head = multi_head_attention(x, layer, 1);
  const Tensor<double> manual = matmul(
      self_attention(matmul(x, layer.w_q), matmul(x, layer.w_k), matmul(x, layer.w_v)),
      layer.w_o);
  CHECK(same_bits(one_head, manual));

  const Tensor<double> y = multi_head_attention(x, layer, 2);
  const std::size_t perm[5] = {3, 0, 4, 1, 2};
  Tensor<double> xp(Shape{5, 8});
  for (std::size_t i = 0; i < 5; ++i) {
    std::copy_n(x.data().begin() + perm[i] * 8, 8, xp.data().begin() + i * 8);
  }
  const Tensor<double> yp = multi_head_attention(xp, layer, 2);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::equal(yp.data().begin() + i * 8, yp.data().begin() + (i + 1) * 8,
                     y.data().begin() + perm[i] * 8));
  }
  CHECK_THROWS_AS(multi_head_attention(x, layer, 3), ConfigError);
}

TEST_CASE("encoder block") {
  std::mt19937_64 rng(8);
  const Tensor<double> x = random_tensor({2, 5, 8}, rng);
  const BlockSpec spec{8, 2, 16, 1e-6, true};
  CHECK(same_bits(encoder_block(x, zero_layer(8, 16), spec), x));
  BlockSpec literal = spec;
  literal.attn_residual = false;
  const Tensor<double> zero_out = encoder_block(x, zero_layer(8, 16), literal);
  for (const double v : zero_out.data()) CHECK(v == 0.0);

  const EncoderLayer<double> layer = random_layer(8, 16, rng);
  CHECK(encoder_block(x, layer, spec).shape() == x.shape());
  CHECK(encoder_block(random_tensor({3, 8}, rng), layer, spec).shape() == Shape{3, 8});

  const auto block = [&](const V& in) {
    EncoderLayer<double> l = layer;
    l.w_q = in[1];
    l.mlp_w1 = in[2];
    l.ln2_gamma = in[3];
    return encoder_block(in[0], l, spec);
  };
  CHECK(grad_check(block, {random_tensor({1, 4, 8}, rng), layer.w_q.clone(),
                           layer.mlp_w1.clone(), layer.ln2_gamma.clone()}) <= 1e-4);
}

TEST_CASE("local encoding stays within each patch") {
  const ModelConfig cfg = ModelConfig::tiny();
  const TLViTParams<double> params = tiny_params(9);
  std::mt19937_64 rng(9);
  Tensor<double> x = random_tensor({1, 16, 16}, rng, 0, 1);
  const Tensor<double> before = local_encode(embed_subpatches(subpatchify(x, 8, 4), params), params, cfg);
  CHECK(before.shape() == Shape{1, 4, 4, 8});
  // perturb patch 2 (rows 8..15, cols 0..7)
  for (std::size_t r = 8; r < 16; ++r) {
    for (std::size_t c = 0; c < 8; ++c) x.data()[r * 16 + c] = 1.0 - x.data()[r * 16 + c];
  }
  const Tensor<double> after = local_encode(embed_subpatches(subpatchify(x, 8, 4), params), params, cfg);
  for (std::size_t p = 0; p < 4; ++p) {
    const bool same = std::equal(after.data().begin() + p * 32, after.data().begin() + (p + 1) * 32,
                                 before.data().begin() + p * 32);
    CHECK(same == (p != 2));
  }
}

TEST_CASE("fusion") {
  const ModelConfig cfg = ModelConfig::tiny();
  std::mt19937_64 rng(10);
  TLViTParams<double> params = tiny_params(10);
  const Tensor<double> yp = random_tensor({1, 4, 16}, rng);
  const Tensor<double> ys = random_tensor({1, 4, 4, 8}, rng);
  CHECK(fuse(yp, ys, params, cfg).shape() == Shape{1, 4, 16});

  TLViTParams<double> zero = params.clone();
  zero.fusion_w = Tensor<double>(params.fusion_w.shape());
  zero.fusion_b = Tensor<double>(params.fusion_b.shape());
  zero.fusion_beta = Tensor<double>(params.fusion_beta.shape());
  CHECK(same_bits(fuse(yp, ys, zero, cfg), yp));

  Tensor<double> x = random_tensor({1, 16, 16}, rng, 0, 1);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    x.set_requires_grad(true);
    const Tensor<double> sub = local_encode(embed_subpatches(subpatchify(x, 8, 4), params), params, cfg);
    Tensor<double> loss = sum(fuse(yp, sub, params, cfg));
    tape.backward(loss);
  }
  CHECK(x.grad()[0] != 0.0);
}

TEST_CASE("decode") {
  const ModelConfig cfg = ModelConfig::tiny();
  std::mt19937_64 rng(11);
  TLViTParams<double> params = tiny_params(11);
  const Tensor<double> enc = random_tensor({2, 4, 16}, rng, -3, 3);
  const Tensor<double> out = decode(enc, params, cfg);
  CHECK(out.shape() == Shape{2, 4, 64});
  for (const double v : out.data()) CHECK((v > 0.0 && v < 1.0));
  params.out_w = Tensor<double>(params.out_w.shape());
  const Tensor<double> half = decode(enc, params, cfg);
  for (const double v : half.data()) CHECK(v == 0.5);
}

TEST_CASE("forward is deterministic and every parameter gets a finite gradient") {
  const ModelConfig cfg = ModelConfig::tiny();
  TLViTParams<double> params = tiny_params(12);
  std::mt19937_64 rng(12);
  const Tensor<double> x = random_tensor({2, 16, 16}, rng, 0, 1);
  const Tensor<double> gt = random_tensor({2, 16, 16}, rng, 0, 1);
  CHECK(same_bits(forward(x, params, cfg), forward(x, params, cfg)));
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    params.set_requires_grad(true);
    params.zero_grad();
    Tensor<double> loss = mse_loss(forward(x, params, cfg), gt);
    tape.backward(loss);
  }
  for (const auto& np : params.named()) {
    bool finite = true;
    bool nonzero = false;
    for (const double g : np.tensor.grad()) {
      finite = finite && std::isfinite(g);
      nonzero = nonzero || g != 0.0;
    }
    CHECK_MESSAGE(finite, np.name);
    CHECK_MESSAGE(nonzero, np.name);
  }
}

TEST_CASE("shape audit rejects a mis-shaped tensor by name") {
  const ModelConfig cfg = ModelConfig::tiny();
  TLViTParams<double> params = tiny_params();
  params.local_layers[0].mlp_w2 = Tensor<double>(Shape{31, 8});
  try {
    params.audit(cfg);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("local.0.mlp.w2") != std::string::npos);
  }
  CHECK_THROWS_AS(TLViT<double>(cfg, params), DimensionError);
}

TEST_CASE("parameter counts") {
  ModelConfig bare = ModelConfig::tiny();
  bare.global_layers = 0;
  bare.local_layers = 0;
  bare.decoder_layers = 0;
  const ParameterCount n = parameter_count(bare);
  const std::size_t fusion = 4 * 8 * 16 + 16 + 2 * 16;
  const std::size_t head = 16 * 64 + 64;
  CHECK(n.global_encoder == 0);
  CHECK(n.local_encoder == fusion);
  CHECK(n.decoder == head);
  CHECK(n.embedding == 64 * 16 + 16 + 16 * 8 + 8 + 4 * 16 + 4 * 8);
  CHECK(n.total == n.embedding + fusion + head);

  std::size_t counted = 0;
  for (const auto& np : tiny_params().named()) counted += np.tensor.size();
  CHECK(parameter_count(ModelConfig::tiny()).total == counted);

  const ParameterCount def = parameter_count(ModelConfig{});
  CHECK(std::abs(double(def.global_encoder) - 30.7e6) <= 0.2 * 30.7e6);
  CHECK(std::abs(double(def.local_encoder) - 6.9e6) <= 0.2 * 6.9e6);
  CHECK_FALSE(parameter_count_boundary().empty());
}

TEST_CASE("ablation rows") {
  CHECK(ablation_rows().size() == 5);
  CHECK(ablation_row("3").config() == ModelConfig{});
  CHECK(ablation_row("5").config().num_patches() == 1024);
  CHECK(ablation_row("4").config().subpatches_per_patch() == 16);
  CHECK_THROWS_AS(ablation_row("9"), ConfigError);
}
