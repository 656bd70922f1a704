#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "docbin/checkpoint.hpp"
#include "docbin/config.hpp"
#include "docbin/errors.hpp"
#include "docbin/synth.hpp"
#include "docbin/training.hpp"
#include "test_support.hpp"

using namespace docbin;
namespace fs = std::filesystem;
using V = std::vector<Tensor<double>>;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("docbin_train_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<TrainSample> tiny_samples(int pages) {
  std::vector<DocumentPair> pairs;
  SynthOptions o;
  o.height = 32;
  o.width = 32;
  for (int i = 0; i < pages; ++i) pairs.push_back(synth_document(100 + i, o));
  return make_samples(pairs, 16);
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("mse loss") {
  const Tensor<double> a(Shape{2}, {0.0, 1.0});
  const Tensor<double> b(Shape{2}, {1.0, 1.0});
  CHECK(mse_loss(a, a).item() == 0.0);
  CHECK(mse_loss(a, b).item() == 0.5);
  CHECK_THROWS_AS(mse_loss(a, Tensor<double>(Shape{3})), DimensionError);

  std::mt19937_64 rng(1);
  Tensor<double> pred = test::random_tensor({3, 4}, rng, 0, 1);
  const Tensor<double> gt = test::random_tensor({3, 4}, rng, 0, 1);
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    pred.set_requires_grad(true);
    Tensor<double> loss = mse_loss(pred, gt);
    tape.backward(loss);
  }
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(std::abs(pred.grad()[i] - 2.0 * (pred.data()[i] - gt.data()[i]) / 12.0) <= 1e-15);
  }
  CHECK(test::grad_check([gt](const V& in) { return mse_loss(in[0], gt); }, {pred}) <= 1e-5);
}

TEST_CASE("adamw hand-computed steps") {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  Tensor<double> theta(Shape{1}, 0.0);
  theta.grad()[0] = 1.0;
  std::vector<OptimParam<double>> params{{theta, true}};
  auto state = AdamWState<double>::zeros_like(params);
  adamw_step(params, state, cfg);
  CHECK(std::abs(theta.data()[0] - (-1.5e-4 / (1.0 + 1e-8))) <= 1e-12);
  CHECK(state.step == 1);
  CHECK(state.v[0].data()[0] >= 0.0);

  TrainConfig decay;
  Tensor<double> one(Shape{1}, 1.0);
  one.grad()[0] = 0.0;
  std::vector<OptimParam<double>> p2{{one, true}};
  auto s2 = AdamWState<double>::zeros_like(p2);
  adamw_step(p2, s2, decay);
  CHECK(std::abs(one.data()[0] - (1.0 - 7.5e-6)) <= 1e-12);

  Tensor<double> bias(Shape{1}, 1.0);
  bias.grad()[0] = 0.0;
  std::vector<OptimParam<double>> p3{{bias, false}};
  auto s3 = AdamWState<double>::zeros_like(p3);
  adamw_step(p3, s3, decay);
  CHECK(bias.data()[0] == 1.0);
}

TEST_CASE("adamw with zero gradients and no decay is the identity") {
  std::mt19937_64 rng(2);
  std::mt19937_64 init(3);
  const TLViTParams<double> params = TLViTParams<double>::initialized(ModelConfig::tiny(), init);
  const TLViTParams<double> before = params.clone();
  params.zero_grad();
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  auto optim = optim_params(params);
  auto state = AdamWState<double>::zeros_like(optim);
  for (int i = 0; i < 3; ++i) adamw_step(optim, state, cfg);
  CHECK(state.step == 3);
  const auto a = params.named();
  const auto b = before.named();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                     b[i].tensor.data().begin()));
  }
}

TEST_CASE("adamw contract errors") {
  Tensor<double> theta(Shape{2}, 0.0);
  theta.grad();
  std::vector<OptimParam<double>> params{{theta, true}};
  AdamWState<double> empty;
  CHECK_THROWS_AS(adamw_step(params, empty, TrainConfig{}), ContractError);
  Tensor<double> no_grad(Shape{2}, 0.0);
  std::vector<OptimParam<double>> p2{{no_grad, true}};
  auto s2 = AdamWState<double>::zeros_like(p2);
  CHECK_THROWS_AS(adamw_step(p2, s2, TrainConfig{}), ContractError);
  auto wrong = AdamWState<double>::zeros_like({{Tensor<double>(Shape{3}), true}});
  CHECK_THROWS_AS(adamw_step(params, wrong, TrainConfig{}), DimensionError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam_beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("leave-one-out split") {
  std::vector<DocumentPair> corpus;
  for (int year = 2009; year <= 2019; ++year) {
    if (year == 2015) continue;
    for (int i = 0; i < 3; ++i) corpus.push_back({GrayImage(1, 1), GrayImage(1, 1), year, "x"});
  }
  const auto [train, test] = leave_one_out_split(corpus, 2017);
  CHECK(test.size() == 3);
  for (const auto& p : test) CHECK(p.year == 2017);
  for (const auto& p : train) CHECK(p.year != 2017);
  CHECK(train.size() + test.size() == corpus.size());
  CHECK_THROWS_AS(leave_one_out_split(corpus, 2015), DataError);
  const std::vector<DocumentPair> single{{GrayImage(1, 1), GrayImage(1, 1), 2009, "a"}};
  CHECK_THROWS_AS(leave_one_out_split(single, 2009), DataError);
}

TEST_CASE("checkpoint round trips") {
  TempDir dir;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.epochs = 1;
  tc.seed = 9;
  Trainer trainer(ModelConfig::tiny(), tc);
  trainer.run_epoch(tiny_samples(1));
  const Checkpoint ckpt = trainer.checkpoint();
  save_checkpoint(ckpt, dir.path / "a.ckpt");
  const Checkpoint loaded = load_checkpoint(dir.path / "a.ckpt");
  CHECK(loaded.config == ModelConfig::tiny());
  CHECK(loaded.step == trainer.steps());
  CHECK(loaded.epoch == 1);
  save_checkpoint(loaded, dir.path / "b.ckpt");
  CHECK(file_bytes(dir.path / "a.ckpt") == file_bytes(dir.path / "b.ckpt"));

  const TLViT<float> restored(loaded.config, restore_params(loaded, loaded.config));
  const Tensor<float> x(Shape{1, 16, 16}, 0.3f);
  const Tensor<float> y1 = trainer.model().forward(x);
  const Tensor<float> y2 = restored.forward(x);
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));

  auto bytes = file_bytes(dir.path / "a.ckpt");
  bytes[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  bytes = file_bytes(dir.path / "a.ckpt");
  bytes.resize(bytes.size() - 10);
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
  bytes = file_bytes(dir.path / "a.ckpt");
  bytes[8] = 7;
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);

  ModelConfig other = ModelConfig::tiny();
  other.dim = 32;
  other.mlp_dim_global = 64;
  try {
    restore_params(loaded, other);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("patch_embed.weight") != std::string::npos);
  }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), IoError);
}

TEST_CASE("training is deterministic and resumes bit for bit") {
  TempDir dir;
  const auto samples = tiny_samples(2);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.epochs = 4;
  tc.seed = 21;
  tc.learning_rate = 1e-3;

  Trainer a(ModelConfig::tiny(), tc);
  a.fit(samples);
  Trainer b(ModelConfig::tiny(), tc);
  b.fit(samples);
  CHECK(a.epoch_losses() == b.epoch_losses());
  CHECK(a.step_losses() == b.step_losses());
  CHECK(a.epoch_losses().size() == 4);

  TrainConfig half = tc;
  half.epochs = 2;
  half.checkpoint_every = 1;
  Trainer first(ModelConfig::tiny(), half);
  first.fit(samples, dir.path);
  CHECK(fs::exists(dir.path / "epoch_1.ckpt"));
  Trainer resumed(load_checkpoint(dir.path / "epoch_2.ckpt"), tc);
  CHECK(resumed.epoch() == 2);
  resumed.fit(samples);
  REQUIRE(resumed.epoch_losses().size() == 2);
  CHECK(resumed.epoch_losses()[0] == a.epoch_losses()[2]);
  CHECK(resumed.epoch_losses()[1] == a.epoch_losses()[3]);
  const std::vector<double> tail(a.step_losses().begin() + first.step_losses().size(),
                                 a.step_losses().end());
  CHECK(resumed.step_losses() == tail);

  CHECK_THROWS_AS(Trainer(ModelConfig::tiny(), tc).fit({}), DataError);
}

TEST_CASE("run config parsing") {
  const RunConfig c = parse_run_config(R"(
# comment
[model]
height = 16
width = 16
patch = 8
subpatch = 4
dim = 16
local_dim = 8
heads_global = 2
heads_local = 2
heads_decoder = 2
mlp_dim_global = 32
mlp_dim_local = 32
mlp_dim_decoder = 32
global_layers = 1
local_layers = 1
attn_residual = false

[train]
learning_rate = 0.001 ; inline comment
batch_size = 8
seed = 77

[paths]
dataset_root = data/corpus
[run]
held_out_year = 2017
)");
  ModelConfig expected = ModelConfig::tiny();
  expected.attn_residual = false;
  CHECK(c.model == expected);
  CHECK(c.train.learning_rate == 0.001);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.seed == 77);
  CHECK(c.dataset_root == "data/corpus");
  CHECK(c.held_out_year == 2017);

  try {
    parse_run_config("[model]\nwidht = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.widht") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("[train]\nbatch_size = four\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[train]\nlearning_rate = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[model]\npatch = 15\n"), ConfigError);
  RunConfig o;
  set_config_value(o, "train.epochs", "3");
  CHECK(o.train.epochs == 3);
  CHECK_THROWS_AS(set_config_value(o, "train.epoch", "3"), ConfigError);
  CHECK(config_keys().size() > 25);
}
