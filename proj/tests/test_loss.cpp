#include <doctest.h>

#include <cmath>

#include "scpc/loss.hpp"
#include "scpc/ops.hpp"
#include "scpc/rng.hpp"
#include "support/gradcheck.hpp"

using namespace scpc;
using scpc::testing::random_tensor;

namespace {

ContrastiveTerm uniform_term(std::size_t k) {
  const std::size_t d = 8;
  const Tensor same = Tensor::full({1, d}, 1.0f / std::sqrt(static_cast<float>(d)));
  std::vector<Tensor> targets(4 * k + 4, same), train(k * k, same);
  return {ops::concat_rows(targets), ops::concat_rows(targets), ops::concat_rows(train), 0};
}

}  // namespace

TEST_CASE("uniform logits give 16 log 10 for k=3, tau=1") {
  ContrastiveOptions opts;
  opts.temperature = 1.0f;
  const float loss = contrastive_loss(uniform_term(3), opts).item();
  CHECK(std::abs(loss - 16.0 * std::log(10.0)) < 1e-4);
}

TEST_CASE("saturated positive logit gives vanishing loss") {
  ContrastiveOptions opts;
  opts.temperature = 1.0f;
  const ContrastiveTerm term{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {50, 0}),
                             Tensor::from({1, 2}, {0, 1}), 0};
  CHECK(contrastive_loss(term, opts).item() < 1e-8);
}

TEST_CASE("single location, single negative closed form") {
  ContrastiveOptions opts;
  opts.temperature = 1.0f;
  const ContrastiveTerm term{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {1, 0}),
                             Tensor::from({1, 2}, {0, 1}), 0};
  CHECK(std::abs(contrastive_loss(term, opts).item() - std::log1p(std::exp(-1.0))) < 1e-6);

  // Temperature divides every logit.
  opts.temperature = 0.5f;
  CHECK(std::abs(contrastive_loss(term, opts).item() - std::log1p(std::exp(-2.0))) < 1e-6);
}

TEST_CASE("negative pairing choice") {
  ContrastiveOptions opts;
  opts.temperature = 1.0f;
  // ȳ·y̆ = 1, ȳ·x̆ = 0, y̆·x̆ = 0.5
  const ContrastiveTerm term{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {1, 0.5f}),
                             Tensor::from({1, 2}, {0, 1}), 0};
  opts.negatives = NegativePairing::PredictionVsTrain;
  CHECK(std::abs(contrastive_loss(term, opts).item() - std::log1p(std::exp(0.0 - 1.0))) < 1e-6);
  opts.negatives = NegativePairing::TargetVsTrain;
  CHECK(std::abs(contrastive_loss(term, opts).item() - std::log1p(std::exp(0.5 - 1.0))) < 1e-6);
}

TEST_CASE("batch loss sums its terms") {
  Rng rng(1);
  ContrastiveOptions opts;
  const ContrastiveTerm a{random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({2, 3}, rng), 0};
  const ContrastiveTerm b{random_tensor({4, 3}, rng), random_tensor({4, 3}, rng), random_tensor({2, 3}, rng), 1};
  const float sum = contrastive_loss(ContrastiveBatch{a, b}, opts).item();
  CHECK(sum == doctest::Approx(contrastive_loss(a, opts).item() + contrastive_loss(b, opts).item()).epsilon(1e-6));
}

TEST_CASE("contrastive loss gradient matches finite differences") {
  Rng rng(2);
  ContrastiveOptions opts;
  for (NegativePairing pairing : {NegativePairing::PredictionVsTrain, NegativePairing::TargetVsTrain}) {
    opts.negatives = pairing;
    const auto r = scpc::testing::check_op(
        {random_tensor({8, 5}, rng), random_tensor({8, 5}, rng), random_tensor({4, 5}, rng)},
        [&](const auto& in) { return contrastive_loss(ContrastiveTerm{in[0], in[1], in[2], 0}, opts); });
    CHECK(r.relative_error < 1e-3);
  }
}

TEST_CASE("combined loss arithmetic and degenerate weights") {
  const std::vector<std::pair<int, Tensor>> parts{{0, Tensor::scalar(2.0f)}, {1, Tensor::scalar(3.0f)}};
  CHECK(combined_loss(parts, LossWeights{0.5f, {0.5f}}).item() == doctest::Approx(2.5));
  CHECK(combined_loss(parts, LossWeights{1.0f, {0.0f}}).item() == 2.0f);
  CHECK_THROWS_AS(combined_loss(parts, LossWeights{1.0f, {}}), ConfigError);
  CHECK_THROWS_AS(LossWeights({1.0f, {-0.5f}}).validate(), ConfigError);
}

TEST_CASE("scaling all weights scales the loss and every gradient exactly") {
  Rng rng(3);
  ContrastiveOptions opts;
  std::vector<Tensor> params;
  for (int i = 0; i < 3; ++i) params.push_back(random_tensor({6, 4}, rng));
  const Tensor train = random_tensor({4, 4}, rng);
  const LossWeights base = LossWeights::uniform(2, 1.0f, 0.5f);
  auto run = [&](const LossWeights& w, std::vector<std::vector<float>>& grads) {
    for (auto& p : params) p.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    std::vector<std::pair<int, Tensor>> parts;
    for (int t = 0; t < 3; ++t) {
      parts.emplace_back(t, contrastive_loss(ContrastiveTerm{params[0], params[static_cast<std::size_t>(t)], train, t},
                                             opts));
    }
    const Tensor loss = combined_loss(parts, w);
    backward(loss);
    grads.clear();
    for (const auto& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
    return static_cast<double>(loss.item());
  };
  std::vector<std::vector<float>> g1, g3, g4;
  const double l1 = run(base, g1);

  // A power-of-two factor is exact in floating point: bitwise linearity.
  const double l4 = run(base.scaled(4.0f), g4);
  CHECK(l4 == 4.0 * l1);
  for (std::size_t i = 0; i < g1.size(); ++i)
    for (std::size_t j = 0; j < g1[i].size(); ++j) CHECK(g4[i][j] == 4.0f * g1[i][j]);

  // Any other factor: relative to 1e-6, per loss and per gradient tensor.
  const double l3 = run(base.scaled(3.0f), g3);
  CHECK(std::abs(l3 - 3.0 * l1) <= 1e-6 * std::abs(3.0 * l1));
  for (std::size_t i = 0; i < g1.size(); ++i) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t j = 0; j < g1[i].size(); ++j) {
      diff += std::pow(g3[i][j] - 3.0 * g1[i][j], 2);
      ref += std::pow(3.0 * g1[i][j], 2);
    }
    CHECK(std::sqrt(diff) <= 1e-6 * std::sqrt(ref));
  }
}

TEST_CASE("logit summary") {
  ContrastiveOptions opts;
  LogitSummary s;
  const ContrastiveTerm term{Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {1, 0}),
                             Tensor::from({2, 2}, {0, 1, 0.5f, 0}), 0};
  summarize_logits(term, opts, s);
  CHECK(s.positive_count == 1);
  CHECK(s.negative_count == 2);
  CHECK(s.positive_sum == doctest::Approx(1.0));
  CHECK(s.negative_sum == doctest::Approx(0.5));
}
