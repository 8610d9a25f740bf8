#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "g2cl/checkpoint.hpp"
#include "g2cl/encoder.hpp"

namespace g2cl::optim {

struct AdamWConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: every step first shrinks parameters by
// (1 - lr * wd), then applies the bias-corrected moment update. The decay
// never enters the moment estimates.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  void step(std::span<encoder::ParamRef> params);
  // Raw-array form used by tests and small problems.
  void step(std::span<float> value, std::span<const float> grad, std::size_t slot = 0);

  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  // "adam_m/<name>" and "adam_v/<name>" tensors for checkpointing.
  std::vector<NamedArray> export_state(std::span<const encoder::ParamRef> params) const;
  void import_state(const Checkpoint& ckpt, std::span<const encoder::ParamRef> params,
                    std::int64_t step_count);

 private:
  void ensure_slots(std::size_t count);
  void update(std::span<float> value, std::span<const float> grad, std::size_t slot);

  AdamWConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// Scales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(std::span<encoder::ParamRef> params, double max_norm);

}  // namespace g2cl::optim
