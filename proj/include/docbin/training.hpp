#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "docbin/dataset.hpp"
#include "docbin/model.hpp"
#include "docbin/tensor.hpp"

namespace docbin {

struct TrainConfig {
  double learning_rate = 1.5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.05;
  int batch_size = 16;
  int epochs = 200;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

/// (1/n) sum (gt - pred)^2 over all elements.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt);

/// A tensor updated by the optimizer and whether weight decay applies.
template <class T>
struct OptimParam {
  Tensor<T> tensor;
  bool decay = true;
};

/// Decay applies to ParamKind::weight only.
template <class T>
std::vector<OptimParam<T>> optim_params(const TLViTParams<T>& params);

template <class T>
struct AdamWState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  bool initialized() const { return !m.empty() || step > 0; }
  static AdamWState zeros_like(const std::vector<OptimParam<T>>& params);
};

/// One decoupled-weight-decay Adam update from the gradients stored on the
/// parameter tensors. Throws ContractError on an uninitialized state or a
/// missing gradient, DimensionError on a shape mismatch.
template <class T>
void adamw_step(const std::vector<OptimParam<T>>& params, AdamWState<T>& state,
                const TrainConfig& config);

/// A model-sized input tile and its ground-truth tile.
struct TrainSample {
  GrayImage input;
  GrayImage target;
  std::string id;
};

/// Cuts every pair into `tile_size` tiles (white padding).
std::vector<TrainSample> make_samples(const std::vector<DocumentPair>& pairs,
                                      std::size_t tile_size);

/// Training set = every year except `held_out_year`; test set = that year.
std::pair<std::vector<DocumentPair>, std::vector<DocumentPair>> leave_one_out_split(
    const std::vector<DocumentPair>& corpus, int held_out_year);

struct Checkpoint;

/// Float32 training loop with a seeded per-epoch shuffle.
class Trainer {
 public:
  Trainer(ModelConfig model, TrainConfig train);
  /// Continues from a checkpoint; the model configuration comes from it.
  Trainer(const Checkpoint& checkpoint, TrainConfig train);

  /// Runs one epoch; returns the mean step loss.
  double run_epoch(const std::vector<TrainSample>& samples);
  /// One optimizer step on the given samples; returns the loss.
  double step(const std::vector<const TrainSample*>& batch);

  /// Runs epochs up to train_config().epochs, writing
  /// `checkpoint_dir/epoch_<n>.ckpt` on schedule when the directory is set.
  void fit(const std::vector<TrainSample>& samples,
           const std::filesystem::path& checkpoint_dir = {},
           const std::function<void(int epoch, double loss)>& on_epoch = {});

  Checkpoint checkpoint() const;

  const ModelConfig& model_config() const { return model_.config(); }
  const TrainConfig& train_config() const { return train_; }
  const TLViT<float>& model() const { return model_; }
  int epoch() const { return epoch_; }
  std::uint64_t steps() const { return state_.step; }
  const std::vector<double>& step_losses() const { return step_losses_; }
  const std::vector<double>& epoch_losses() const { return epoch_losses_; }

 private:
  TLViT<float> model_;
  TrainConfig train_;
  std::vector<OptimParam<float>> optim_;
  AdamWState<float> state_;
  std::mt19937_64 rng_;
  int epoch_ = 0;
  std::vector<double> step_losses_;
  std::vector<double> epoch_losses_;
};

/// Writes one loss per line as `epoch,loss` with 17 significant digits.
void write_loss_log(const std::filesystem::path& path, const std::vector<double>& epoch_losses);

}  // namespace docbin
