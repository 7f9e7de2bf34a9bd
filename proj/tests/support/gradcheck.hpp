#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "scpc/ops.hpp"
#include "scpc/rng.hpp"
#include "scpc/tensor.hpp"

namespace scpc::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for ops with a kink there.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) {
    const double m = rng.uniform(0.1, 1.0);
    x = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
  }
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

struct GradCheck {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::size_t coordinates = 0;
};

inline double relative(const std::vector<double>& a, const std::vector<double>& n, double floor = 1e-12) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max(std::sqrt(std::max(na, nn)), floor);
  return std::sqrt(diff) / denom;
}

// Checks d/dx of Σ w⊙op(inputs) for a fixed random w. The analytic side runs
// through the tape; the numeric side uses central differences of the same
// projection accumulated in double precision.
inline GradCheck check_op(std::vector<Tensor> inputs, const std::function<Tensor(const std::vector<Tensor>&)>& op,
                          double step = 1e-3, std::uint64_t seed = 17) {
  Tensor probe = op(inputs);
  Rng rng(seed);
  const Tensor w = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
  for (auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    backward(ops::sum(ops::mul(op(inputs), w)));
  }
  auto projected = [&] {
    const Tensor y = op(inputs);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += static_cast<double>(w.at(i)) * y.at(i);
    return acc;
  };
  std::vector<double> analytic, numeric;
  for (auto& t : inputs) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      analytic.push_back(t.has_grad() ? t.grad()[i] : 0.0);
      const float original = t.at(i);
      t.mutable_data()[i] = static_cast<float>(original + step);
      const double up = projected();
      t.mutable_data()[i] = static_cast<float>(original - step);
      const double down = projected();
      t.mutable_data()[i] = original;
      numeric.push_back((up - down) / (2.0 * step));
    }
  }
  return {relative(analytic, numeric), analytic.size()};
}

// Directional finite differences of a scalar loss. Directions follow the
// analytic gradient (largest signal against float rounding in the loss):
// once per tensor, and once jointly over every tensor. Up to `per_tensor`
// single coordinates are checked individually as well.
struct LossCheck {
  double joint = 0.0;
  double worst_directional = 0.0;
  double coordinate_error = 0.0;
  std::size_t tensors = 0;
};

inline LossCheck check_loss(const std::vector<Tensor>& params, const std::function<Tensor()>& loss, double step,
                            std::size_t per_tensor, std::uint64_t seed = 23) {
  for (Tensor p : params) p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    backward(loss());
  }
  auto value = [&] { return static_cast<double>(loss().item()); };
  std::vector<std::vector<float>> originals, grads;
  for (const auto& p : params) {
    originals.emplace_back(p.data().begin(), p.data().end());
    grads.push_back(p.has_grad() ? std::vector<float>(p.grad().begin(), p.grad().end())
                                 : std::vector<float>(p.numel(), 0.0f));
  }
  // Moves the selected tensors by h·g/|g| and returns (L(+h) - L(-h)) / 2h and |g|.
  auto along = [&](const std::vector<std::size_t>& which) {
    double norm = 0.0;
    for (std::size_t t : which)
      for (float g : grads[t]) norm += static_cast<double>(g) * g;
    norm = std::sqrt(norm);
    if (norm == 0.0) return std::pair{0.0, 0.0};
    auto shift = [&](double h) {
      for (std::size_t t : which) {
        Tensor p = params[t];
        for (std::size_t i = 0; i < grads[t].size(); ++i)
          p.mutable_data()[i] = static_cast<float>(originals[t][i] + h * grads[t][i] / norm);
      }
    };
    shift(step);
    const double up = value();
    shift(-step);
    const double down = value();
    shift(0.0);
    return std::pair{(up - down) / (2.0 * step), norm};
  };

  LossCheck out;
  std::vector<std::size_t> all(params.size());
  for (std::size_t t = 0; t < params.size(); ++t) all[t] = t;
  const auto [jfd, jnorm] = along(all);
  out.joint = relative({jnorm}, {jfd}, 1e-4);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto [fd, norm] = along({t});
    out.worst_directional = std::max(out.worst_directional, relative({norm}, {fd}, 1e-4));
    ++out.tensors;
  }

  Rng rng(seed);
  std::vector<double> analytic, numeric;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor p = params[t];
    for (std::size_t c = 0; c < std::min(per_tensor, p.numel()); ++c) {
      const std::size_t i = rng.below(p.numel());
      analytic.push_back(grads[t][i]);
      p.mutable_data()[i] = static_cast<float>(originals[t][i] + step);
      const double u = value();
      p.mutable_data()[i] = static_cast<float>(originals[t][i] - step);
      const double d = value();
      p.mutable_data()[i] = originals[t][i];
      numeric.push_back((u - d) / (2.0 * step));
    }
  }
  out.coordinate_error = analytic.empty() ? 0.0 : relative(analytic, numeric);
  return out;
}

}  // namespace scpc::testing
