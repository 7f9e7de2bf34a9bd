#include <doctest.h>

#include <cmath>
#include <limits>

#include "scpc/ops.hpp"
#include "scpc/rng.hpp"
#include "support/gradcheck.hpp"

using namespace scpc;
using scpc::testing::check_op;
using scpc::testing::random_away_from_zero;
using scpc::testing::random_tensor;

namespace {

void require_close(std::span<const float> got, const std::vector<float>& want, float tol = 1e-6f) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

constexpr double kOpTolerance = 1e-3;

}  // namespace

TEST_CASE("tensor construction and shape validation") {
  const Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  CHECK(t.at(4) == 5.0f);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);
  CHECK(Tensor::scalar(2.5f).item() == 2.5f);
  CHECK_THROWS_AS(t.item(), DimensionError);
}

TEST_CASE("clone is deep, copies are shallow, aliases keep private grads") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor shallow = a;
  Tensor deep = a.clone();
  a.mutable_data()[0] = 9.0f;
  CHECK(shallow.at(0) == 9.0f);
  CHECK(deep.at(0) == 1.0f);

  Tensor alias = a.alias_with_fresh_grad();
  CHECK(alias.same_storage(a));
  accumulate_grad(alias, std::vector<float>{1.0f, 1.0f});
  CHECK(alias.grad()[0] == 1.0f);
  CHECK(a.grad()[0] == 0.0f);
}

TEST_CASE("matmul oracles") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {3, -1, 2, 5});
  require_close(ops::matmul(eye, m).data(), {3, -1, 2, 5});
  const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  const Tensor ones = Tensor::from({2, 1}, {1, 1});
  const Tensor r = ops::matmul(a, ones);
  CHECK(r.shape() == Shape{2, 1});
  require_close(r.data(), {3, 7});
  CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros({3, 1})), DimensionError);
}

TEST_CASE("conv2d oracles") {
  Rng rng(1);
  const Tensor x = random_tensor({1, 4, 4}, rng, -1, 1, false);
  const Tensor identity = Tensor::from({1, 1, 1, 1}, {1});
  const Tensor y = ops::conv2d(x, identity, 1, 0);
  CHECK(y.shape() == Shape{1, 4, 4});
  require_close(y.data(), std::vector<float>(x.data().begin(), x.data().end()));

  const Tensor ones = Tensor::full({1, 4, 4}, 1.0f);
  const Tensor box = Tensor::full({1, 1, 2, 2}, 1.0f);
  const Tensor s = ops::conv2d(ones, box, 2, 0);
  CHECK(s.shape() == Shape{1, 2, 2});
  require_close(s.data(), {4, 4, 4, 4});

  // Batched input equals per-sample convolution.
  const Tensor batch = random_tensor({2, 2, 5, 5}, rng, -1, 1, false);
  const Tensor k = random_tensor({3, 2, 3, 3}, rng, -1, 1, false);
  const Tensor yb = ops::conv2d(batch, k, 2, 1);
  for (std::size_t n = 0; n < 2; ++n) {
    const Tensor single = Tensor::from({2, 5, 5}, std::vector<float>(batch.data().begin() + n * 50,
                                                                       batch.data().begin() + (n + 1) * 50));
    const Tensor ys = ops::conv2d(single, k, 2, 1);
    for (std::size_t i = 0; i < ys.numel(); ++i) CHECK(yb.at(n * ys.numel() + i) == ys.at(i));
  }
}

TEST_CASE("mean pool oracles") {
  const Tensor c = Tensor::full({3, 5, 2}, 7.0f);
  require_close(ops::mean_pool_global(c).data(), {7, 7, 7});
  const Tensor v = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  require_close(ops::mean_pool_global(v).data(), {2.5f});
}

TEST_CASE("softmax oracles") {
  require_close(ops::softmax(Tensor::from({3}, {0, 0, 0})).data(), {1.0f / 3, 1.0f / 3, 1.0f / 3});
  const Tensor big = ops::softmax(Tensor::from({2}, {1000, 0}));
  CHECK(std::isfinite(big.at(0)));
  CHECK(big.at(0) == doctest::Approx(1.0));
  CHECK(big.at(1) == doctest::Approx(0.0));
}

TEST_CASE("attention oracles") {
  Rng rng(2);
  const Tensor q = random_tensor({2, 4}, rng, -1, 1, false);
  const Tensor k1 = random_tensor({1, 4}, rng, -1, 1, false);
  const Tensor v1 = Tensor::from({1, 4}, {1, 2, 3, 4});
  const Tensor single = ops::attention(q, k1, v1);
  require_close(single.data(), {1, 2, 3, 4, 1, 2, 3, 4});

  const Tensor same_keys = Tensor::from({3, 4}, std::vector<float>(12, 0.3f));
  const Tensor values = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 9});
  require_close(ops::attention(q, same_keys, values).data(), {3, 5, 3, 5}, 1e-5f);
}

TEST_CASE("tape: trivial gradients and misuse") {
  Tensor p = Tensor::from({3}, {1, -2, 3}, true);
  {
    Tape tape;
    TapeScope scope(tape);
    backward(ops::sum(p));
  }
  require_close(p.grad(), {1, 1, 1});
  p.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    backward(ops::scale(ops::sum(ops::mul(p, p)), 0.5f));
  }
  require_close(p.grad(), {1, -2, 3});

  Tape tape;
  TapeScope scope(tape);
  const Tensor loss = ops::sum(ops::mul(p, p));
  tape.backward(loss);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(loss), TapeError);
  CHECK_THROWS_AS(backward(ops::mul(p, p)), TapeError);
}

TEST_CASE("no tape, no recording") {
  Tensor p = Tensor::from({2}, {1, 2}, true);
  const Tensor y = ops::mul(p, p);
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(backward(ops::sum(y)), TapeError);
}

TEST_CASE("non-finite forward values are rejected") {
  Tensor p = Tensor::from({1}, {std::numeric_limits<float>::max()}, true);
  Tape tape;
  TapeScope scope(tape);
  CHECK_THROWS_AS(ops::scale(p, 10.0f), NumericError);
}

TEST_CASE("finite-difference oracle: elementwise and linear ops") {
  Rng rng(3);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::add(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::sub(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::mul(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({5}, rng)}, [](const auto& in) { return ops::scale(in[0], -1.7f); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_away_from_zero({4, 3}, rng)}, [](const auto& in) { return ops::relu(in[0]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                 [](const auto& in) { return ops::add_row_bias(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng)},
                 [](const auto& in) { return ops::add_channel_bias(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                 [](const auto& in) { return ops::matmul(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({5, 4}, rng)},
                 [](const auto& in) { return ops::matmul_nt(in[0], in[1]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng)}, [](const auto& in) { return ops::transpose(in[0]); })
            .relative_error < kOpTolerance);
}

TEST_CASE("finite-difference oracle: convolution and pooling") {
  Rng rng(4);
  const auto conv = check_op({random_tensor({2, 8, 8}, rng), random_tensor({3, 2, 3, 3}, rng)},
                             [](const auto& in) { return ops::conv2d(in[0], in[1], 1, 1); });
  CHECK(conv.relative_error < kOpTolerance);
  const auto strided = check_op({random_tensor({2, 2, 7, 7}, rng), random_tensor({3, 2, 3, 3}, rng)},
                                [](const auto& in) { return ops::conv2d(in[0], in[1], 2, 1); });
  CHECK(strided.relative_error < kOpTolerance);
  const auto pool = check_op({random_tensor({4, 5, 5}, rng)}, [](const auto& in) { return ops::mean_pool_global(in[0]); });
  CHECK(pool.relative_error < 1e-4);

  // The pool gradient is exactly upstream/25 at every position.
  Tensor x = random_tensor({4, 5, 5}, rng);
  {
    Tape tape;
    TapeScope scope(tape);
    backward(ops::sum(ops::mean_pool_global(x)));
  }
  for (float g : x.grad()) CHECK(g == doctest::Approx(1.0 / 25.0).epsilon(1e-6));
}

TEST_CASE("finite-difference oracle: softmax, attention, normalization") {
  Rng rng(5);
  CHECK(check_op({random_tensor({6}, rng, -2, 2)}, [](const auto& in) { return ops::softmax(in[0]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 5}, rng, -2, 2)}, [](const auto& in) { return ops::softmax_rows(in[0]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({2, 4}, rng), random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::attention(in[0], in[1], in[2]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 6}, rng, -2, 2), random_tensor({6}, rng), random_tensor({6}, rng)},
                 [](const auto& in) { return ops::layer_norm(in[0], in[1], in[2]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({4, 5}, rng)}, [](const auto& in) { return ops::l2_normalize_rows(in[0]); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::row_dot(in[0], in[1]); })
            .relative_error < kOpTolerance);
  const std::vector<std::size_t> targets{2, 0, 3};
  CHECK(check_op({random_tensor({3, 4}, rng, -2, 2)},
                 [&](const auto& in) { return ops::cross_entropy_rows(in[0], targets); })
            .relative_error < kOpTolerance);
}

TEST_CASE("finite-difference oracle: indexing and reshaping") {
  Rng rng(6);
  const std::vector<std::size_t> rows{3, 0, 3, 1};
  CHECK(check_op({random_tensor({5, 3}, rng)}, [&](const auto& in) { return ops::gather_rows(in[0], rows); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({5, 3}, rng)}, [&](const auto& in) { return ops::embedding(in[0], rows); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({2, 3}, rng), random_tensor({4, 3}, rng)},
                 [](const auto& in) { return ops::concat_rows({in[0], in[1]}); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)},
                 [](const auto& in) { return ops::concat_cols({in[0], in[1]}); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 6}, rng)}, [](const auto& in) { return ops::slice_cols(in[0], 2, 3); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng)}, [](const auto& in) { return ops::reshape(in[0], {2, 6}); })
            .relative_error < kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng)}, [](const auto& in) { return ops::sum(in[0]); }).relative_error <
        kOpTolerance);
  CHECK(check_op({random_tensor({3, 4}, rng)}, [](const auto& in) { return ops::mean(in[0]); }).relative_error <
        kOpTolerance);
}

TEST_CASE("l2 normalization of a zero row stays zero with zero gradient") {
  Tensor x = Tensor::from({2, 2}, {0, 0, 3, 4}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = ops::l2_normalize_rows(x);
  require_close(y.data(), {0, 0, 0.6f, 0.8f});
  backward(ops::sum(y));
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 0.0f);
}

TEST_CASE("named rng streams are reproducible and independent") {
  Rng a = Rng::stream(42, "init");
  Rng b = Rng::stream(42, "init");
  Rng c = Rng::stream(42, "data_order");
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
