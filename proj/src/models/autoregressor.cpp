#include <cmath>

#include "scpc/models.hpp"
#include "scpc/ops.hpp"

namespace scpc {

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_tensor({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace

void AutoregressorConfig::validate() const {
  if (layers == 0) throw ConfigError("autoregressor needs at least one layer");
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("model width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (ff_width == 0) throw ConfigError("feed-forward width must be positive");
  if (grid_side == 0) throw ConfigError("positional table needs grid_side > 0");
}

template <typename Self, typename F>
void Autoregressor::visit(Self& self, F&& f) {
  f("autoregressor.position_table", self.position_table_);
  f("autoregressor.role_table", self.role_table_);
  for (std::size_t i = 0; i < self.layers_.size(); ++i) {
    auto& l = self.layers_[i];
    const std::string p = "autoregressor.layer" + std::to_string(i) + ".";
    f(p + "ln1.gamma", l.ln1_gamma);
    f(p + "ln1.beta", l.ln1_beta);
    f(p + "attn.wq", l.wq);
    f(p + "attn.wk", l.wk);
    f(p + "attn.wv", l.wv);
    f(p + "attn.wo", l.wo);
    f(p + "ln2.gamma", l.ln2_gamma);
    f(p + "ln2.beta", l.ln2_beta);
    f(p + "ff.w1", l.w1);
    f(p + "ff.b1", l.b1);
    f(p + "ff.w2", l.w2);
    f(p + "ff.b2", l.b2);
  }
  f("autoregressor.final.gamma", self.final_gamma_);
  f("autoregressor.final.beta", self.final_beta_);
  f("autoregressor.out.weight", self.out_weight_);
  f("autoregressor.out.bias", self.out_bias_);
}

Autoregressor::Autoregressor(AutoregressorConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t d = cfg_.dim;
  position_table_ = normal_tensor({cfg_.grid_side * cfg_.grid_side, d}, 0.1, rng);
  role_table_ = normal_tensor({2, d}, 0.1, rng);
  for (std::size_t i = 0; i < cfg_.layers; ++i) {
    Layer l;
    l.ln1_gamma = Tensor::full({d}, 1.0f, true);
    l.ln1_beta = Tensor::zeros({d}, true);
    l.wq = xavier(d, d, rng);
    l.wk = xavier(d, d, rng);
    l.wv = xavier(d, d, rng);
    l.wo = xavier(d, d, rng);
    l.ln2_gamma = Tensor::full({d}, 1.0f, true);
    l.ln2_beta = Tensor::zeros({d}, true);
    l.w1 = xavier(d, cfg_.ff_width, rng);
    l.b1 = Tensor::zeros({cfg_.ff_width}, true);
    l.w2 = xavier(cfg_.ff_width, d, rng);
    l.b2 = Tensor::zeros({d}, true);
    layers_.push_back(std::move(l));
  }
  final_gamma_ = Tensor::full({d}, 1.0f, true);
  final_beta_ = Tensor::zeros({d}, true);
  out_weight_ = cfg_.zero_output_projection ? Tensor::zeros({d, d}, true) : xavier(d, d, rng);
  out_bias_ = Tensor::zeros({d}, true);
}

Tensor Autoregressor::self_attention(const Layer& layer, const Tensor& x) const {
  const Tensor q = ops::matmul(x, layer.wq);
  const Tensor k = ops::matmul(x, layer.wk);
  const Tensor v = ops::matmul(x, layer.wv);
  const std::size_t head_dim = cfg_.dim / cfg_.heads;
  std::vector<Tensor> heads;
  heads.reserve(cfg_.heads);
  for (std::size_t h = 0; h < cfg_.heads; ++h) {
    const std::size_t off = h * head_dim;
    heads.push_back(ops::attention(ops::slice_cols(q, off, head_dim), ops::slice_cols(k, off, head_dim),
                                   ops::slice_cols(v, off, head_dim)));
  }
  const Tensor merged = cfg_.heads == 1 ? heads.front() : ops::concat_cols(heads);
  return ops::matmul(merged, layer.wo);
}

Tensor Autoregressor::predict(const Tensor& train_reps, std::span<const GridCoord> train_coords,
                              std::span<const GridCoord> target_coords) const {
  const std::size_t d = cfg_.dim;
  if (train_reps.rank() != 2 || train_reps.dim(1) != d || train_reps.dim(0) != train_coords.size()) {
    throw DimensionError("predict: training representations " + shape_str(train_reps.shape()) + " do not match " +
                         std::to_string(train_coords.size()) + " coordinates of width " + std::to_string(d));
  }
  if (target_coords.empty()) throw DimensionError("predict: no target coordinates");
  const std::size_t s = cfg_.grid_side;
  auto flat = [s](std::span<const GridCoord> coords) {
    std::vector<std::size_t> idx;
    idx.reserve(coords.size());
    for (const auto& c : coords) {
      if (c.row >= s || c.col >= s) {
        throw DimensionError("coordinate (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                             ") outside the positional table of side " + std::to_string(s));
      }
      idx.push_back(c.row * s + c.col);
    }
    return idx;
  };
  const auto train_idx = flat(train_coords);
  const auto target_idx = flat(target_coords);
  const std::vector<std::size_t> train_role(train_idx.size(), 0), query_role(target_idx.size(), 1);

  const Tensor train_tokens = ops::add(ops::add(train_reps, ops::embedding(position_table_, train_idx)),
                                       ops::embedding(role_table_, train_role));
  const Tensor query_tokens =
      ops::add(ops::embedding(position_table_, target_idx), ops::embedding(role_table_, query_role));
  Tensor h = ops::concat_rows({train_tokens, query_tokens});

  for (const auto& layer : layers_) {
    h = ops::add(h, self_attention(layer, ops::layer_norm(h, layer.ln1_gamma, layer.ln1_beta)));
    const Tensor ff_in = ops::layer_norm(h, layer.ln2_gamma, layer.ln2_beta);
    const Tensor hidden = ops::relu(ops::add_row_bias(ops::matmul(ff_in, layer.w1), layer.b1));
    h = ops::add(h, ops::add_row_bias(ops::matmul(hidden, layer.w2), layer.b2));
  }

  std::vector<std::size_t> query_rows(target_idx.size());
  for (std::size_t i = 0; i < query_rows.size(); ++i) query_rows[i] = train_idx.size() + i;
  const Tensor queries = ops::layer_norm(ops::gather_rows(h, query_rows), final_gamma_, final_beta_);
  const Tensor out = ops::add_row_bias(ops::matmul(queries, out_weight_), out_bias_);
  return cfg_.normalize ? ops::l2_normalize_rows(out) : out;
}

NamedTensors Autoregressor::parameters() const {
  NamedTensors out;
  visit(*this, [&](std::string name, const Tensor& t) { out.emplace_back(std::move(name), t); });
  return out;
}

void Autoregressor::load_parameters(const NamedTensors& params) {
  NamedTensors mine = parameters();
  copy_parameters(params, mine, "autoregressor");
}

Autoregressor Autoregressor::replicate() const {
  Autoregressor copy = *this;
  visit(copy, [](const std::string&, Tensor& t) { t = t.alias_with_fresh_grad(); });
  return copy;
}

}  // namespace scpc
