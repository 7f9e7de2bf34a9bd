#include "scpc/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace scpc {

void SgdConfig::validate() const {
  if (!(lr >= 0.0f)) throw ConfigError("learning rate must be non-negative");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight decay must be non-negative");
  if (!(grad_clip >= 0.0f)) throw ConfigError("grad_clip must be non-negative");
}

float scheduled_lr(const SgdConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (!cfg.cosine_decay || total_steps <= 1) return cfg.lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return static_cast<float>(cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

void SgdMomentum::step(const NamedTensors& params, float lr) {
  if (velocity_.empty()) {
    for (const auto& [name, t] : params) velocity_.emplace_back(t.numel(), 0.0f);
  }
  if (velocity_.size() != params.size()) throw ConfigError("optimizer parameter list changed between steps");
  float factor = 1.0f;
  if (cfg_.grad_clip > 0.0f) {
    const double norm = grad_norm(params);
    if (norm > cfg_.grad_clip) factor = static_cast<float>(cfg_.grad_clip / norm);
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    const auto g = t.grad();
    auto& v = velocity_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + (factor * g[i] + cfg_.weight_decay * w[i]);
      w[i] -= lr * v[i];
    }
  }
}

double grad_norm(const NamedTensors& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (float g : t.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

void zero_grads(const NamedTensors& params) {
  for (const auto& [name, t] : params) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

void merge_grads(const NamedTensors& replica, const NamedTensors& master) {
  if (replica.size() != master.size()) throw ConfigError("replica and master parameter lists differ");
  for (std::size_t p = 0; p < replica.size(); ++p) {
    if (replica[p].second.has_grad()) accumulate_grad(master[p].second, replica[p].second.grad());
  }
}

void check_grads_finite(const NamedTensors& params) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (float g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
}

}  // namespace scpc
