#include <doctest.h>

#include <cmath>

#include "scriptbmi/layers.hpp"
#include "test_support.hpp"

using namespace scriptbmi;
using namespace scriptbmi::nn;

namespace {

ConvParams random_conv(std::size_t cout, std::size_t cin, RngStream& rng) {
  return {testsup::random_tensor({cout, cin, 3, 3}, rng),
          testsup::random_tensor({cout}, rng, -0.5, 0.5)};
}

}  // namespace

TEST_CASE("conv keeps spatial size and matches the known channel growth") {
  RngStream rng(1, "conv");
  const Tensor x = testsup::random_tensor({1, 32, 72, 72}, rng);
  ConvParams p = random_conv(64, 32, rng);
  ConvCache cache;
  const Tensor y = conv2d_forward(x, p, cache);
  CHECK(y.shape() == std::vector<std::size_t>{1, 64, 72, 72});
}

TEST_CASE("conv with zero weights is the bias constant") {
  Tensor x = Tensor::full({2, 3, 5, 4}, 1.7);
  ConvParams p{Tensor({4, 3, 3, 3}), Tensor({4})};
  p.bias[0] = -1.0;
  p.bias[1] = 0.5;
  p.bias[2] = 2.0;
  p.bias[3] = 0.0;
  ConvCache cache;
  const Tensor y = conv2d_forward(x, p, cache);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t i = 0; i < 20; ++i) {
        CHECK(y.data()[(b * 4 + c) * 20 + i] == p.bias[c]);
      }
    }
  }
}

TEST_CASE("conv hand example: all-ones input and kernel with zero padding") {
  const Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  ConvParams p{Tensor::full({1, 1, 3, 3}, 1.0), Tensor({1})};
  ConvCache cache;
  const Tensor y = conv2d_forward(x, p, cache);
  const double expected[3][3] = {{4, 6, 4}, {6, 9, 6}, {4, 6, 4}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(y(std::size_t{0}, std::size_t{0}, i, j) == expected[i][j]);
    }
  }
}

TEST_CASE("conv im2col path equals the direct-loop reference") {
  RngStream rng(2, "convref");
  for (std::size_t h = 1; h <= 8; ++h) {
    for (std::size_t w : {std::size_t{1}, std::size_t{3}, std::size_t{7}}) {
      const Tensor x = testsup::random_tensor({2, 3, h, w}, rng);
      ConvParams p = random_conv(4, 3, rng);
      ConvCache cache;
      const Tensor fast = conv2d_forward(x, p, cache);
      const Tensor slow = conv2d_forward_reference(x, p);
      REQUIRE(fast.shape() == slow.shape());
      for (std::size_t i = 0; i < fast.size(); ++i) {
        CHECK(std::abs(fast[i] - slow[i]) <= 1e-10);
      }
    }
  }
}

TEST_CASE("same padding preserves extents across the small sweep") {
  RngStream rng(3, "sweep");
  ConvParams p = random_conv(2, 1, rng);
  for (std::size_t h = 1; h <= 32; h += 3) {
    for (std::size_t w = 1; w <= 32; w += 5) {
      const Tensor x = testsup::random_tensor({1, 1, h, w}, rng);
      ConvCache cache;
      const Tensor y = conv2d_forward(x, p, cache);
      CHECK(y.extent(2) == h);
      CHECK(y.extent(3) == w);
    }
  }
}

TEST_CASE("conv channel mismatch raises a shape error") {
  RngStream rng(4, "err");
  const Tensor x = testsup::random_tensor({1, 2, 4, 4}, rng);
  ConvParams p = random_conv(3, 5, rng);
  ConvCache cache;
  CHECK_THROWS_AS(conv2d_forward(x, p, cache), ShapeError);
}

TEST_CASE("conv backward zero upstream gives zero grads; bias grad sums upstream") {
  RngStream rng(5, "convback");
  const Tensor x = testsup::random_tensor({2, 2, 4, 5}, rng);
  ConvParams p = random_conv(3, 2, rng);
  ConvCache cache;
  conv2d_forward(x, p, cache);

  const ConvGrads zero = conv2d_backward(Tensor({2, 3, 4, 5}), cache, p);
  for (std::size_t i = 0; i < zero.input.size(); ++i) CHECK(zero.input[i] == 0.0);
  for (std::size_t i = 0; i < zero.weights.size(); ++i) CHECK(zero.weights[i] == 0.0);
  for (std::size_t i = 0; i < zero.bias.size(); ++i) CHECK(zero.bias[i] == 0.0);

  RngStream rng2(6, "convback2");
  const Tensor upstream = testsup::random_tensor({2, 3, 4, 5}, rng2);
  const ConvGrads grads = conv2d_backward(upstream, cache, p);
  for (std::size_t co = 0; co < 3; ++co) {
    double expected = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 20; ++i) expected += upstream.data()[(b * 3 + co) * 20 + i];
    }
    CHECK(grads.bias[co] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(conv2d_backward(Tensor({2, 3, 5, 5}), cache, p), ShapeError);
}

TEST_CASE("maxpool shapes, floor rule and window max") {
  RngStream rng(7, "pool");
  PoolCache cache;
  const Tensor big = testsup::random_tensor({1, 64, 72, 72}, rng);
  CHECK(maxpool_forward(big, cache).shape() == std::vector<std::size_t>{1, 64, 36, 36});

  Tensor window({1, 1, 2, 2});
  window[0] = 1;
  window[1] = 2;
  window[2] = 3;
  window[3] = 4;
  const Tensor pooled = maxpool_forward(window, cache);
  CHECK(pooled.size() == 1);
  CHECK(pooled[0] == 4.0);

  const Tensor odd = testsup::random_tensor({1, 1, 37, 37}, rng);
  CHECK(maxpool_forward(odd, cache).shape() == std::vector<std::size_t>{1, 1, 18, 18});

  CHECK_THROWS_AS(maxpool_forward(Tensor({1, 1, 1, 4}), cache), ShapeError);
}

TEST_CASE("maxpool backward routes to the argmax, first index on ties") {
  Tensor window({1, 1, 2, 2});
  window[0] = 1;
  window[1] = 2;
  window[2] = 3;
  window[3] = 4;
  PoolCache cache;
  maxpool_forward(window, cache);
  Tensor upstream({1, 1, 1, 1});
  upstream[0] = 2.5;
  const Tensor grad = maxpool_backward(upstream, cache);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);
  CHECK(grad[2] == 0.0);
  CHECK(grad[3] == 2.5);

  const Tensor tied = Tensor::full({1, 1, 2, 2}, 5.0);
  maxpool_forward(tied, cache);
  const Tensor tied_grad = maxpool_backward(upstream, cache);
  CHECK(tied_grad[0] == 2.5);
  CHECK(tied_grad[1] == 0.0);
  CHECK(tied_grad[2] == 0.0);
  CHECK(tied_grad[3] == 0.0);
}

TEST_CASE("maxpool conserves gradient mass with unique maxima") {
  RngStream rng(8, "poolmass");
  const Tensor x = testsup::random_tensor({2, 3, 6, 8}, rng);  // ties have measure zero
  PoolCache cache;
  const Tensor y = maxpool_forward(x, cache);
  const Tensor upstream = testsup::random_tensor(y.shape(), rng);
  const Tensor grad = maxpool_backward(upstream, cache);
  double up_sum = 0.0, down_sum = 0.0;
  for (std::size_t i = 0; i < upstream.size(); ++i) up_sum += upstream[i];
  for (std::size_t i = 0; i < grad.size(); ++i) down_sum += grad[i];
  CHECK(up_sum == doctest::Approx(down_sum).epsilon(1e-12));
}

TEST_CASE("relu definition and kink convention") {
  Tensor x({3});
  x[0] = -1.0;
  x[1] = 0.0;
  x[2] = 2.0;
  ReluCache cache;
  const Tensor y = relu(x, &cache);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
  const Tensor grad = relu_backward(Tensor::full({3}, 1.0), cache);
  CHECK(grad[0] == 0.0);
  CHECK(grad[1] == 0.0);  // gradient at exactly 0 is 0
  CHECK(grad[2] == 1.0);
}

TEST_CASE("dropout identities and scaling contract") {
  RngStream rng(9, "drop");
  const Tensor x = testsup::random_tensor({50}, rng);
  DropoutCache cache;

  const Tensor same_rate0 = dropout(x, 0.0, Mode::Train, rng, cache);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same_rate0[i] == x[i]);

  const Tensor same_eval = dropout(x, 0.5, Mode::Eval, rng, cache);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same_eval[i] == x[i]);

  const Tensor trained = dropout(x, 0.25, Mode::Train, rng, cache);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(trained[i] == cache.mask[i] * x[i] / 0.75);
  }

  CHECK_THROWS_AS(dropout(x, 1.0, Mode::Train, rng, cache), RangeError);
  CHECK_THROWS_AS(dropout(x, -0.1, Mode::Train, rng, cache), RangeError);
}

TEST_CASE("inverted dropout preserves the expectation") {
  RngStream rng(10, "dropmean");
  const Tensor ones = Tensor::full({100000}, 1.0);
  DropoutCache cache;
  const Tensor out = dropout(ones, 0.5, Mode::Train, rng, cache);
  double mean = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) mean += out[i];
  mean /= static_cast<double>(out.size());
  CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("dropout backward applies the cached mask") {
  RngStream rng(11, "dropback");
  const Tensor x = testsup::random_tensor({40}, rng);
  DropoutCache cache;
  dropout(x, 0.4, Mode::Train, rng, cache);
  const Tensor upstream = testsup::random_tensor({40}, rng);
  const Tensor grad = dropout_backward(upstream, cache);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    CHECK(grad[i] == upstream[i] * cache.mask[i] / 0.6);
  }
}

TEST_CASE("flatten reshapes row-major and round-trips") {
  RngStream rng(12, "flat");
  const Tensor x = testsup::random_tensor({1, 64, 36, 36}, rng);
  const Tensor flat = flatten(x);
  CHECK(flat.shape() == std::vector<std::size_t>{1, 82944});
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == x[i]);

  CHECK(flatten(Tensor({2, 1, 1, 1})).shape() == std::vector<std::size_t>{2, 1});

  const Tensor back = unflatten(flat, {1, 64, 36, 36});
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back[i] == x[i]);

  CHECK_THROWS_AS(flatten(Tensor({4, 4})), ShapeError);
}

TEST_CASE("dense identity, bias-only and shape errors") {
  DenseParams identity{Tensor({3, 3}), Tensor({3})};
  for (std::size_t i = 0; i < 3; ++i) identity.weights(i, i) = 1.0;
  RngStream rng(13, "dense");
  const Tensor x = testsup::random_tensor({2, 3}, rng);
  DenseCache cache;
  const Tensor y = dense_forward(x, identity, cache);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);

  DenseParams biased{Tensor({4, 3}), testsup::random_tensor({4}, rng)};
  const Tensor zero_in = Tensor({2, 3});
  const Tensor bias_out = dense_forward(zero_in, biased, cache);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < 4; ++j) CHECK(bias_out(b, j) == biased.bias[j]);
  }

  CHECK_THROWS_AS(dense_forward(Tensor({2, 5}), identity, cache), ShapeError);
}

TEST_CASE("softmax symmetry and numerical stability") {
  const Tensor uniform = softmax(Tensor({1, 48}));
  for (std::size_t j = 0; j < 48; ++j) {
    CHECK(uniform(std::size_t{0}, j) == doctest::Approx(1.0 / 48.0).epsilon(1e-12));
  }

  const Tensor pair = softmax(Tensor({1, 2}));
  CHECK(pair[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(pair[1] == doctest::Approx(0.5).epsilon(1e-12));

  Tensor extreme({1, 2});
  extreme[0] = 1000.0;
  extreme[1] = 0.0;
  const Tensor stable = softmax(extreme);
  CHECK(std::isfinite(stable[0]));
  CHECK(stable[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stable[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions") {
  RngStream rng(14, "softmax");
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor logits = testsup::random_tensor({3, 7}, rng, -30.0, 30.0);
    const Tensor probs = softmax(logits);
    for (std::size_t b = 0; b < 3; ++b) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const double p = probs(b, j);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("he_init scale and determinism") {
  RngStream a(15, "he");
  RngStream b(15, "he");
  const Tensor wa = he_init({8, 8}, 2, a);
  const Tensor wb = he_init({8, 8}, 2, b);
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i] == wb[i]);

  RngStream big(16, "he2");
  const Tensor sample = he_init({100000}, 50, big);
  double mean = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) mean += sample[i];
  mean /= static_cast<double>(sample.size());
  double var = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) var += (sample[i] - mean) * (sample[i] - mean);
  var /= static_cast<double>(sample.size() - 1);
  const double target = std::sqrt(2.0 / 50.0);  // 0.2
  CHECK(std::abs(std::sqrt(var) - target) < 0.03 * target);

  CHECK_THROWS_AS(he_init({4}, 0, big), RangeError);
}
