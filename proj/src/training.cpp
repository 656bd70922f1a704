#include "docbin/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "docbin/checkpoint.hpp"
#include "docbin/errors.hpp"
#include "docbin/kernels.hpp"
#include "docbin/ops.hpp"
#include "docbin/tiling.hpp"

namespace docbin {

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate", "must be positive");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (epochs < 0) fail("epochs", "must be >= 0");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
}

template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("mse_loss: prediction " + shape_str(pred.shape()) +
                         " vs ground truth " + shape_str(gt.shape()));
  }
  return mean(square(sub(gt, pred)));
}

template <class T>
std::vector<OptimParam<T>> optim_params(const TLViTParams<T>& params) {
  std::vector<OptimParam<T>> out;
  for_each_param(params, [&out](const std::string&, const Tensor<T>& t, ParamKind kind) {
    out.push_back({t, kind == ParamKind::weight});
  });
  return out;
}

template <class T>
AdamWState<T> AdamWState<T>::zeros_like(const std::vector<OptimParam<T>>& params) {
  AdamWState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.shape());
    s.v.emplace_back(p.tensor.shape());
  }
  return s;
}

template <class T>
void adamw_step(const std::vector<OptimParam<T>>& params, AdamWState<T>& state,
                const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw_step: optimizer state holds " + std::to_string(state.m.size()) +
                        " moments for " + std::to_string(params.size()) +
                        " parameters; initialize it with zeros_like");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& p = params[i].tensor;
    if (state.m[i].shape() != p.shape() || state.v[i].shape() != p.shape()) {
      throw DimensionError("adamw_step: state of parameter " + std::to_string(i) + " is " +
                           shape_str(state.m[i].shape()) + ", parameter is " +
                           shape_str(p.shape()));
    }
    if (!p.has_grad()) {
      throw ContractError("adamw_step: parameter " + std::to_string(i) + " has no gradient");
    }
  }
  const std::uint64_t t = state.step + 1;
  kernels::AdamWHyper h;
  h.lr = config.learning_rate;
  h.beta1 = config.adam_beta1;
  h.beta2 = config.adam_beta2;
  h.eps = config.adam_eps;
  h.bias_correction1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(t));
  h.bias_correction2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T> p = params[i].tensor;
    h.weight_decay = params[i].decay ? config.weight_decay : 0.0;
    const auto g = std::as_const(p).grad();
    kernels::parallel::adamw_update<T>(p.data().data(), g.data(), state.m[i].data().data(),
                                       state.v[i].data().data(), p.size(), h);
  }
  state.step = t;
}

std::vector<TrainSample> make_samples(const std::vector<DocumentPair>& pairs,
                                      std::size_t tile_size) {
  std::vector<TrainSample> out;
  for (const auto& pair : pairs) {
    const TileSet in = tile(pair.degraded, tile_size, 1.0);
    const TileSet gt = tile(pair.ground_truth, tile_size, 1.0);
    for (std::size_t i = 0; i < in.tiles.size(); ++i) {
      out.push_back({in.tiles[i], gt.tiles[i], pair.id + "#" + std::to_string(i)});
    }
  }
  return out;
}

std::pair<std::vector<DocumentPair>, std::vector<DocumentPair>> leave_one_out_split(
    const std::vector<DocumentPair>& corpus, int held_out_year) {
  std::vector<DocumentPair> train;
  std::vector<DocumentPair> test;
  for (const auto& p : corpus) (p.year == held_out_year ? test : train).push_back(p);
  if (test.empty()) {
    throw DataError("leave_one_out_split: year " + std::to_string(held_out_year) +
                    " is not in the corpus");
  }
  if (train.empty()) {
    throw DataError("leave_one_out_split: holding out " + std::to_string(held_out_year) +
                    " leaves no training data");
  }
  return {std::move(train), std::move(test)};
}

namespace {

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

Tensor<float> stack(const std::vector<const TrainSample*>& batch, bool target,
                    const ModelConfig& cfg) {
  const auto h = static_cast<std::size_t>(cfg.height);
  const auto w = static_cast<std::size_t>(cfg.width);
  Tensor<float> out(Shape{batch.size(), h, w});
  auto dst = out.data();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const GrayImage& img = target ? batch[b]->target : batch[b]->input;
    if (img.height != h || img.width != w) {
      throw DimensionError("sample " + batch[b]->id + " is " + std::to_string(img.height) +
                           "x" + std::to_string(img.width) + ", model expects " +
                           std::to_string(h) + "x" + std::to_string(w));
    }
    for (std::size_t i = 0; i < h * w; ++i) dst[b * h * w + i] = static_cast<float>(img.pixels[i]);
  }
  return out;
}

}  // namespace

Trainer::Trainer(ModelConfig model, TrainConfig train)
    : model_(TLViT<float>::initialized(model, train.seed)),
      train_(train),
      rng_(train.seed) {
  train_.validate();
  optim_ = optim_params(model_.params());
  state_ = AdamWState<float>::zeros_like(optim_);
}

Trainer::Trainer(const Checkpoint& ckpt, TrainConfig train)
    : model_(ckpt.config, restore_params(ckpt, ckpt.config)), train_(train) {
  train_.validate();
  optim_ = optim_params(model_.params());
  const std::vector<NamedTensor> names = snapshot_params(model_.params());
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto& t : ckpt.optimizer) by_name[t.name] = &t.tensor;
  for (const auto& p : names) {
    for (const char* moment : {"adam.m.", "adam.v."}) {
      const auto it = by_name.find(moment + p.name);
      if (it == by_name.end()) {
        throw FormatError("checkpoint lacks optimizer tensor " + std::string(moment) + p.name);
      }
      if (it->second->shape() != p.tensor.shape()) {
        throw DimensionError("optimizer tensor " + it->first + " has shape " +
                             shape_str(it->second->shape()) + ", expected " +
                             shape_str(p.tensor.shape()));
      }
      (moment[5] == 'm' ? state_.m : state_.v).push_back(it->second->clone());
    }
  }
  state_.step = ckpt.step;
  epoch_ = ckpt.epoch;
  std::istringstream s(ckpt.rng_state);
  s >> rng_;
  if (!s) throw FormatError("checkpoint RNG state is unreadable");
}

double Trainer::step(const std::vector<const TrainSample*>& batch) {
  if (batch.empty()) throw ContractError("Trainer::step: empty batch");
  const ModelConfig& cfg = model_.config();
  const Tensor<float> x = stack(batch, false, cfg);
  const Tensor<float> y = stack(batch, true, cfg);
  Tape<float> tape;
  double loss_value = 0.0;
  {
    TapeScope<float> scope(tape);
    model_.params().set_requires_grad(true);
    model_.params().zero_grad();
    Tensor<float> loss = mse_loss(model_.forward(x), y);
    loss_value = static_cast<double>(loss.item());
    tape.backward(loss);
  }
  tape.clear();
  adamw_step(optim_, state_, train_);
  for (auto& p : optim_) p.tensor.drop_grad();
  step_losses_.push_back(loss_value);
  return loss_value;
}

double Trainer::run_epoch(const std::vector<TrainSample>& samples) {
  if (samples.empty()) throw DataError("training set is empty");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);
  const auto bs = static_cast<std::size_t>(train_.batch_size);
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const TrainSample*> batch;
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
      batch.push_back(&samples[order[i]]);
    }
    total += step(batch);
    ++steps;
  }
  ++epoch_;
  const double mean_loss = total / static_cast<double>(steps);
  epoch_losses_.push_back(mean_loss);
  return mean_loss;
}

void Trainer::fit(const std::vector<TrainSample>& samples,
                  const std::filesystem::path& checkpoint_dir,
                  const std::function<void(int, double)>& on_epoch) {
  if (samples.empty()) throw DataError("training set is empty");
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);
  while (epoch_ < train_.epochs) {
    const double loss = run_epoch(samples);
    if (on_epoch) on_epoch(epoch_, loss);
    const bool scheduled = train_.checkpoint_every > 0 && epoch_ % train_.checkpoint_every == 0;
    if (!checkpoint_dir.empty() && (scheduled || epoch_ == train_.epochs)) {
      save_checkpoint(checkpoint(),
                      checkpoint_dir / ("epoch_" + std::to_string(epoch_) + ".ckpt"));
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = model_.config();
  c.params = snapshot_params(model_.params());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    c.optimizer.push_back({"adam.m." + c.params[i].name, state_.m[i].clone()});
  }
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    c.optimizer.push_back({"adam.v." + c.params[i].name, state_.v[i].clone()});
  }
  c.step = state_.step;
  c.epoch = epoch_;
  c.rng_state = rng_text(rng_);
  return c;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<double>& epoch_losses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write loss log " + path.string());
  out << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < epoch_losses.size(); ++i) {
    out << i + 1 << ',' << epoch_losses[i] << '\n';
  }
  if (!out) throw IoError("failed writing loss log " + path.string());
}

template Tensor<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mse_loss(const Tensor<double>&, const Tensor<double>&);
template std::vector<OptimParam<float>> optim_params(const TLViTParams<float>&);
template std::vector<OptimParam<double>> optim_params(const TLViTParams<double>&);
template struct AdamWState<float>;
template struct AdamWState<double>;
template void adamw_step(const std::vector<OptimParam<float>>&, AdamWState<float>&,
                         const TrainConfig&);
template void adamw_step(const std::vector<OptimParam<double>>&, AdamWState<double>&,
                         const TrainConfig&);

}  // namespace docbin
