#include "ctn/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctn/metrics.hpp"

namespace ctn {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (base_lr <= 0) throw std::invalid_argument("train: base_lr must be positive");
  if (lr_decay_factor <= 0 || lr_decay_factor >= 1)
    throw std::invalid_argument("train: lr_decay_factor must be in (0, 1)");
  if (lr_decay_every < 1) throw std::invalid_argument("train: lr_decay_every must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (weight_decay < 0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (first_moment_decay < 0 || first_moment_decay >= 1 || second_moment_decay < 0 ||
      second_moment_decay >= 1)
    throw std::invalid_argument("train: moment decays must be in [0, 1)");
  if (dice_weight < 0 || ce_weight < 0)
    throw std::invalid_argument("train: loss weights must be >= 0");
  for (double p : flip_prob)
    if (p < 0 || p > 1) throw std::invalid_argument("train: flip probabilities must be in [0, 1]");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) throw std::out_of_range("lr_at: epoch out of range");
  return cfg.base_lr * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

AdamW::AdamW(nn::ParamStore& ps, const TrainConfig& cfg) : ps_(ps), cfg_(cfg) {
  for (const auto& [name, v] : ps_.params()) {
    m_.push_back(Tensor::zeros(v->value.shape()));
    v_.push_back(Tensor::zeros(v->value.shape()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = cfg_.first_moment_decay, b2 = cfg_.second_moment_decay;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto& params = ps_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    Node& p = *params[i].second;
    const Tensor& g = p.ensure_grad();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.adam_eps);
      p.value[j] -= lr * cfg_.weight_decay * p.value[j];
    }
  }
}

void AdamW::append_state(TensorMap& out) const {
  const auto& params = ps_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    out.items.emplace_back("opt.m." + params[i].first, m_[i]);
    out.items.emplace_back("opt.v." + params[i].first, v_[i]);
  }
}

void AdamW::restore_state(const TensorMap& in, int64_t step_count) {
  const auto& params = ps_.params();
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor* m = in.find("opt.m." + params[i].first);
    const Tensor* v = in.find("opt.v." + params[i].first);
    if (!m || !v)
      throw std::runtime_error("checkpoint: missing optimizer state for " + params[i].first);
    if (m->shape() != m_[i].shape() || v->shape() != v_[i].shape())
      throw std::runtime_error("checkpoint: optimizer state shape mismatch for " +
                               params[i].first);
    m_[i] = *m;
    v_[i] = *v;
  }
  t_ = step_count;
}

Tensor normalize_volume(const Volume& vol) {
  const int64_t n = vol.numel();
  if (n == 0) throw std::invalid_argument("normalize_volume: empty volume");
  double mean = 0;
  for (float x : vol.data) mean += x;
  mean /= static_cast<double>(n);
  double var = 0;
  for (float x : vol.data) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  const double inv_std = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;

  Tensor t({1, 1, vol.shape[0], vol.shape[1], vol.shape[2]});
  for (int64_t i = 0; i < n; ++i) t[i] = (vol.data[i] - mean) * inv_std;
  return t;
}

Tensor labels_to_tensor(const LabelMask& m) {
  Tensor t({1, m.shape[0], m.shape[1], m.shape[2]});
  for (int64_t i = 0; i < m.numel(); ++i) t[i] = static_cast<real>(m.data[i]);
  return t;
}

double train_step(const Ctn& model, AdamW& opt, const Tensor& image, const Tensor& labels,
                  double lr, const TrainConfig& cfg) {
  Var x = make_leaf(image);
  Var logits = model.forward(x);
  Var loss = ops::dice_ce_loss(logits, labels, cfg.dice_weight, cfg.ce_weight);
  const double loss_value = loss->value[0];
  if (!std::isfinite(loss_value))
    throw std::runtime_error("train_step: non-finite loss; aborting");
  backward(loss);
  opt.step(lr);
  return loss_value;
}

namespace {

// Flip a [..., D, H, W] tensor in place along the chosen trailing axes.
void flip_spatial(Tensor& t, const std::array<bool, 3>& flip) {
  if (!flip[0] && !flip[1] && !flip[2]) return;
  const auto& s = t.shape();
  const int64_t W = s[s.size() - 1], H = s[s.size() - 2], D = s[s.size() - 3];
  const int64_t batch = t.numel() / (D * H * W);
  Tensor out(t.shape());
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t base = b * D * H * W;
    for (int64_t z = 0; z < D; ++z)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          const int64_t sz = flip[0] ? D - 1 - z : z;
          const int64_t sy = flip[1] ? H - 1 - y : y;
          const int64_t sx = flip[2] ? W - 1 - x : x;
          out[base + (z * H + y) * W + x] = t[base + (sz * H + sy) * W + sx];
        }
  }
  t = std::move(out);
}

}  // namespace

LabelMask predict_labels(const Ctn& model, const Tensor& image) {
  Var logits = model.forward(make_leaf(image));
  const auto& s = logits->value.shape();
  const int64_t C = s[1], N = s[2] * s[3] * s[4];
  LabelMask out;
  out.shape = {s[2], s[3], s[4]};
  out.data.resize(static_cast<size_t>(N));
  const Tensor& lv = logits->value;
  for (int64_t i = 0; i < N; ++i) {
    int best = 0;
    real best_v = lv[i];
    for (int64_t c = 1; c < C; ++c)
      if (lv[c * N + i] > best_v) {
        best_v = lv[c * N + i];
        best = static_cast<int>(c);
      }
    out.data[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
  }
  return out;
}

namespace {

std::string rng_to_string(Rng& rng) {
  std::ostringstream ss;
  ss << rng.engine();
  return ss.str();
}

void rng_from_string(Rng& rng, const std::string& s) {
  std::istringstream ss(s);
  ss >> rng.engine();
  if (!ss) throw std::runtime_error("checkpoint: malformed RNG state");
}

struct Sample {
  Tensor image;   // [1,1,D,H,W], z-scored
  Tensor labels;  // [1,D,H,W]
  LabelMask gt;
};

Sample load_sample(const ManifestEntry& e) {
  auto [vol, label] = read_volume(e.image);
  LabelMask gt = label ? std::move(*label) : read_label(e.label);
  if (gt.shape != vol.shape)
    throw std::runtime_error("train: image/label shape mismatch for " + e.image);
  Sample s;
  s.image = normalize_volume(vol);
  s.labels = labels_to_tensor(gt);
  s.gt = std::move(gt);
  return s;
}

}  // namespace

FitResult fit(Ctn& model, nn::ParamStore& ps, const std::vector<ManifestEntry>& manifest,
              const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  std::vector<const ManifestEntry*> train_set, val_set;
  for (const auto& e : manifest) {
    if (e.split == "train") train_set.push_back(&e);
    if (e.split == "val") val_set.push_back(&e);
  }
  if (train_set.empty()) throw std::runtime_error("fit: manifest has no train entries");
  if (val_set.empty() && train_set.size() > 1) {
    // Carve 10% of train (at least one volume) for validation.
    const size_t n_val = std::max<size_t>(1, train_set.size() / 10);
    val_set.assign(train_set.end() - static_cast<ptrdiff_t>(n_val), train_set.end());
    train_set.resize(train_set.size() - n_val);
  }

  fs::create_directories(opts.out_dir);
  std::ofstream log(fs::path(opts.out_dir) / "train_log.jsonl", std::ios::app);
  if (!log) throw std::runtime_error("fit: cannot open training log in " + opts.out_dir);

  AdamW opt(ps, cfg);
  Rng rng(cfg.seed);
  TrainState state;

  if (opts.resume) {
    auto [tensors, meta] = load_tensors(*opts.resume);
    load_params(ps, tensors);
    state.epoch = meta.at("epoch");
    state.step = meta.at("step");
    state.best_val_dice = meta.at("best_val_dice");
    state.best_val_epoch = meta.at("best_val_epoch");
    opt.restore_state(tensors, state.step);
    rng_from_string(rng, meta.at("rng"));
  }

  auto save = [&](const std::string& base) {
    TensorMap tm = snapshot_params(ps);
    opt.append_state(tm);
    json meta{{"epoch", state.epoch},
              {"step", state.step},
              {"best_val_dice", state.best_val_dice},
              {"best_val_epoch", state.best_val_epoch},
              {"rng", rng_to_string(rng)}};
    save_tensors(tm, base, meta);
  };

  FitResult result;
  bool stop = false;
  for (; state.epoch < cfg.epochs && !stop; ++state.epoch) {
    const double lr = lr_at(state.epoch, cfg);

    // Seed-determined visiting order (Fisher-Yates on the epoch's RNG state).
    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.randint(i)]);

    for (size_t idx : order) {
      Sample s = load_sample(*train_set[idx]);
      const std::array<bool, 3> flips{rng.uniform() < cfg.flip_prob[0],
                                      rng.uniform() < cfg.flip_prob[1],
                                      rng.uniform() < cfg.flip_prob[2]};
      flip_spatial(s.image, flips);
      flip_spatial(s.labels, flips);
      const double loss = train_step(model, opt, s.image, s.labels, lr, cfg);
      ++state.step;
      log << json{{"epoch", state.epoch}, {"step", state.step}, {"lr", lr}, {"loss", loss}}
          << "\n";
      if (opts.on_step) opts.on_step(state.epoch, state.step, lr, loss);
      if (opts.max_steps >= 0 && state.step >= opts.max_steps) {
        stop = true;
        break;
      }
    }

    if (!val_set.empty()) {
      double dice_sum = 0;
      for (const ManifestEntry* e : val_set) {
        Sample s = load_sample(*e);
        const LabelMask pred = predict_labels(model, s.image);
        dice_sum += dice(class_mask(pred, -1), class_mask(s.gt, -1));
      }
      const double val_dice = dice_sum / static_cast<double>(val_set.size());
      log << json{{"epoch", state.epoch}, {"step", state.step}, {"val_dice", val_dice}} << "\n";
      if (val_dice > state.best_val_dice) {
        state.best_val_dice = val_dice;
        state.best_val_epoch = state.epoch;
        result.best_checkpoint = (fs::path(opts.out_dir) / "best").string();
        save(result.best_checkpoint);
      }
    }

    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03d", state.epoch);
    save((fs::path(opts.out_dir) / name).string());
    log.flush();
  }

  result.final_checkpoint = (fs::path(opts.out_dir) / "final").string();
  save(result.final_checkpoint);
  result.state = state;
  return result;
}

}  // namespace ctn
