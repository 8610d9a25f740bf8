#include "g2cl/optim.hpp"

#include <cmath>

#include "g2cl/error.hpp"

namespace g2cl::optim {

void AdamW::ensure_slots(std::size_t count) {
  if (m_.size() < count) {
    m_.resize(count);
    v_.resize(count);
  }
}

void AdamW::update(std::span<float> value, std::span<const float> grad, std::size_t slot) {
  auto& m = m_[slot];
  auto& v = v_[slot];
  if (m.size() != value.size()) {
    m.assign(value.size(), 0.0f);
    v.assign(value.size(), 0.0f);
  }
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    value[i] = static_cast<float>(value[i] * decay - lr * mhat / (std::sqrt(vhat) + config_.eps));
  }
}

void AdamW::step(std::span<encoder::ParamRef> params) {
  ++t_;
  ensure_slots(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) update(params[i].value, params[i].grad, i);
}

void AdamW::step(std::span<float> value, std::span<const float> grad, std::size_t slot) {
  if (value.size() != grad.size()) throw ContractError("AdamW::step: value/grad size mismatch");
  ++t_;
  ensure_slots(slot + 1);
  update(value, grad, slot);
}

std::vector<NamedArray> AdamW::export_state(std::span<const encoder::ParamRef> params) const {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    std::vector<float> m(p.value.size(), 0.0f), v(p.value.size(), 0.0f);
    if (i < m_.size() && m_[i].size() == p.value.size()) {
      m = m_[i];
      v = v_[i];
    }
    out.push_back({"adam_m/" + p.name, p.shape, std::move(m)});
    out.push_back({"adam_v/" + p.name, p.shape, std::move(v)});
  }
  return out;
}

void AdamW::import_state(const Checkpoint& ckpt, std::span<const encoder::ParamRef> params,
                         std::int64_t step_count) {
  ensure_slots(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ckpt.find("adam_m/" + params[i].name);
    const auto* v = ckpt.find("adam_v/" + params[i].name);
    if (!m || !v) throw DataError("checkpoint lacks optimizer state for '" + params[i].name + "'");
    if (m->data.size() != params[i].value.size() || v->data.size() != params[i].value.size())
      throw DataError("checkpoint optimizer state for '" + params[i].name + "' has a bad size");
    m_[i] = m->data;
    v_[i] = v->data;
  }
  t_ = step_count;
}

double clip_grad_norm(std::span<encoder::ParamRef> params, double max_norm) {
  double sq = 0;
  for (const auto& p : params)
    for (float g : p.grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto& p : params)
      for (auto& g : p.grad) g *= scale;
  }
  return norm;
}

}  // namespace g2cl::optim
