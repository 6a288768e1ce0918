#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ctn/checkpoint.hpp"
#include "ctn/fusion.hpp"
#include "ctn/volio.hpp"

namespace ctn {

struct TrainConfig {
  int epochs = 200;
  double base_lr = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_decay_every = 50;  // epochs
  double weight_decay = 1e-4;
  double first_moment_decay = 0.9;
  double second_moment_decay = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 1;
  uint64_t seed = 0;
  double dice_weight = 1.0;
  double ce_weight = 1.0;
  std::array<double, 3> flip_prob{0.5, 0.5, 0.5};  // per axis (z, y, x)

  void validate() const;
};

/// Piecewise-constant schedule: base_lr * factor^floor(epoch / every).
double lr_at(int epoch, const TrainConfig& cfg);

/// Decoupled-weight-decay Adam over a parameter store. Gradients are read
/// from the autograd nodes after backward(); decay is applied directly to
/// the parameters, never through the moment estimates.
class AdamW {
 public:
  AdamW(nn::ParamStore& ps, const TrainConfig& cfg);

  void step(double lr);
  int64_t step_count() const { return t_; }

  // Serialized alongside model parameters for bit-identical resume.
  void append_state(TensorMap& out) const;
  void restore_state(const TensorMap& in, int64_t step_count);

 private:
  nn::ParamStore& ps_;
  TrainConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainState {
  int epoch = 0;
  int64_t step = 0;
  double best_val_dice = -1.0;
  int best_val_epoch = -1;
};

/// One forward/backward/update on a single image/label pair already moved to
/// network resolution and normalized. Returns the loss; throws on non-finite
/// loss or gradients.
double train_step(const Ctn& model, AdamW& opt, const Tensor& image, const Tensor& labels,
                  double lr, const TrainConfig& cfg);

/// Per-volume z-score normalization into a [1,1,D,H,W] network input tensor.
Tensor normalize_volume(const Volume& v);
Tensor labels_to_tensor(const LabelMask& m);

/// Forward pass + per-voxel argmax over classes.
LabelMask predict_labels(const Ctn& model, const Tensor& image);

struct FitOptions {
  std::string out_dir;              // checkpoints + log destination
  std::optional<std::string> resume;  // checkpoint base to resume from
  int max_steps = -1;               // cap on optimizer steps (<0 = unlimited)
  std::function<void(int epoch, int64_t step, double lr, double loss)> on_step;
};

struct FitResult {
  TrainState state;
  std::string final_checkpoint;  // base path
  std::string best_checkpoint;   // base path ("" when no validation ran)
};

/// Full training run over a dataset manifest: per-epoch checkpointing,
/// validation DICE tracking, seeded flip augmentation, JSONL logging.
/// When the manifest has no val split, 10% of train (at least 1 when
/// possible) is carved out deterministically.
FitResult fit(Ctn& model, nn::ParamStore& ps, const std::vector<ManifestEntry>& manifest,
              const TrainConfig& cfg, const FitOptions& opts);

}  // namespace ctn
