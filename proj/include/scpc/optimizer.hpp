#pragma once

#include <cstddef>
#include <vector>

#include "scpc/models.hpp"

namespace scpc {

struct SgdConfig {
  float lr = 0.05f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  bool cosine_decay = true;
  float grad_clip = 0.0f;  // max global gradient L2 norm per step; 0 disables

  void validate() const;
};

// Learning rate at `step` of `total_steps` under optional cosine decay to zero.
float scheduled_lr(const SgdConfig& cfg, std::size_t step, std::size_t total_steps);

// SGD with heavy-ball momentum and L2 weight decay:
//   v ← μ·v + (g + λ·w);  w ← w − lr·v
// with g first rescaled to norm grad_clip when its global norm exceeds it.
class SgdMomentum {
public:
  explicit SgdMomentum(SgdConfig cfg) : cfg_(cfg) {}

  // Parameters must be passed in the same order on every call.
  void step(const NamedTensors& params, float lr);

private:
  SgdConfig cfg_;
  std::vector<std::vector<float>> velocity_;
};

// Global L2 norm over every gradient, accumulated in double.
double grad_norm(const NamedTensors& params);
void zero_grads(const NamedTensors& params);
// Adds each replica gradient into the matching master gradient.
void merge_grads(const NamedTensors& replica, const NamedTensors& master);
// Throws NumericError naming the first parameter with a NaN/Inf gradient.
void check_grads_finite(const NamedTensors& params);

}  // namespace scpc
