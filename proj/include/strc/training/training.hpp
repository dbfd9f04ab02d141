#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "strc/dataset/image.hpp"
#include "strc/model/checkpoint.hpp"
#include "strc/model/model.hpp"
#include "strc/training/losses.hpp"

namespace strc {

struct LossWeights {
  double adv = 1.0;
  double cyc = 10.0;
  double astro = 1.0;
  double idt = 0.0;     ///< identity loss; needs 3-channel LR images
  double paired = 0.0;  ///< L1(G(lr), hr) on index-paired batches

  void validate() const;
};

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Adam with bias correction. Moments are shaped like the parameters they
/// were created for, in the same order.
class Adam {
 public:
  Adam(AdamConfig config, const std::vector<ParamRef<float>>& params);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }

  void step(const std::vector<ParamRef<float>>& params, const std::vector<Tensor<float>>& grads);

  /// Moments as `<prefix>m.<i>` / `<prefix>v.<i>`.
  std::vector<NamedTensor> state(const std::string& prefix) const;
  void load_state(const std::vector<NamedTensor>& stored, const std::string& prefix, std::uint64_t steps);

 private:
  AdamConfig config_;
  std::vector<Tensor<float>> m_, v_;
  std::uint64_t step_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  std::size_t side = 32;
  FusionConfig fusion;
  std::size_t checkpoint_every = 0;  ///< 0: only the final checkpoint
  std::size_t log_every = 1;
  std::size_t max_steps = 0;         ///< 0: epochs x batches per epoch
  LossWeights weights;
  AdamConfig adam;
  bool use_attention = true;

  void validate() const;
};

/// Loss components of one step. Unweighted except `g_total`; terms whose
/// weight is zero are not evaluated and stay 0.
struct LossRecord {
  std::uint64_t step = 0;  ///< 1-based
  double d_hr = 0;
  double d_lr = 0;
  double g_adv = 0;
  double cyc = 0;
  double astro = 0;
  double idt = 0;
  double paired = 0;
  double g_total = 0;

  bool finite() const;
  /// `step=1 loss_d_hr=... loss_g=...`, values printed with %.9g.
  std::string format() const;
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

LossRecord parse_loss_record(const std::string& line);

/// Two generators (G: LR -> HR, F: HR -> LR) and two discriminators, with
/// their optimizers.
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  const TrainConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }

  /// One discriminator update followed by one generator update on
  /// model-domain batches lr [B, C_lr, S, S] and hr [B, 3, S, S]. Throws
  /// NumericError (before touching the parameters) on a non-finite loss.
  LossRecord step(const Tensor<float>& lr, const Tensor<float>& hr);

  std::vector<NamedTensor> state();
  Metadata metadata() const;
  /// Writes `<dir>/ckpt_<step>.strc` and its `.meta` sidecar; returns the
  /// checkpoint path.
  std::filesystem::path save(const std::filesystem::path& dir);
  /// Restores parameters, buffers, optimizer moments and the step counter.
  /// Throws ConfigError if the checkpoint came from an incompatible config.
  void load(const std::filesystem::path& checkpoint);

  Generator<float> g;      ///< LR -> HR
  Generator<float> f;      ///< HR -> LR
  Discriminator<float> d_hr;
  Discriminator<float> d_lr;

 private:
  std::vector<ParamRef<float>> generator_params();
  std::vector<ParamRef<float>> discriminator_params();
  std::vector<ParamRef<float>> buffers();

  TrainConfig config_;
  Adam opt_g_;
  Adam opt_d_;
  std::uint64_t step_ = 0;
};

/// Unit-domain training pools. In unpaired training each pool is shuffled
/// independently every epoch.
struct TrainData {
  std::vector<Image> lr;
  std::vector<Image> hr;
};

std::size_t batches_per_epoch(const TrainConfig& config, const TrainData& data);

/// Sample indices of global step `step` (0-based) into each pool.
struct BatchIndices {
  std::vector<std::size_t> lr, hr;
};
BatchIndices batch_indices(const TrainConfig& config, const TrainData& data, std::uint64_t step);

/// Stacks images into a model-domain [B, C, H, W] tensor.
Tensor<float> stack_batch(const std::vector<Image>& pool, const std::vector<std::size_t>& indices);

struct LoopOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;  ///< checkpoint to continue from
  std::function<void(const LossRecord&)> on_step;
};

struct LoopResult {
  std::vector<LossRecord> records;  ///< steps run by this call
  std::filesystem::path last_checkpoint;
};

/// Runs the remaining steps, appending records to `<out>/train_log.txt`,
/// wall times to `<out>/timing.txt`, and checkpoints to `<out>/checkpoints`.
/// Throws ConfigError for empty pools or images of the wrong shape.
LoopResult train_loop(const TrainConfig& config, const TrainData& data, const LoopOptions& options);

}  // namespace strc
