#include <cmath>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stereoloc/checkpoint.hpp"
#include "stereoloc/optim.hpp"
#include "stereoloc/tensor.hpp"

using namespace stereoloc::ad;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("conv2d scalar product") {
    Tensor x({1, 1, 1}, {5.0});
    Tensor k({1, 1, 1, 1}, {2.0});
    Tensor b({1}, {0.0});
    const auto y = conv2d(x, k, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.values()[0] == 10.0);
  }

  TEST_CASE("conv2d with zero kernel and bias is zero") {
    std::mt19937_64 rng(1);
    const auto x = oracle::random_tensor({3, 9, 7}, rng, 1.0, false);
    const auto y = conv2d(x, Tensor::zeros({4, 3, 3, 3}), Tensor::zeros({4}), 2, 1);
    CHECK(y.shape() == Shape{4, 5, 4});
    for (double v : y.values()) CHECK(v == 0.0);
  }

  TEST_CASE("conv2d matches direct summation") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = oracle::random_tensor({2, 8, 8}, rng, 1.0, false);
      const auto k = oracle::random_tensor({3, 2, 3, 3}, rng, 1.0, false);
      const auto b = oracle::random_tensor({3}, rng, 1.0, false);
      const auto y = conv2d(x, k, b, 2, 1);
      std::size_t oh = 0, ow = 0;
      const auto ref = oracle::conv2d(vec(x), 1, 2, 8, 8, vec(k), 3, 3, vec(b), 2, 1, oh, ow);
      REQUIRE(y.shape() == Shape{3, oh, ow});
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.values()[i] - ref[i]) < 1e-12);
    }
  }

  TEST_CASE("conv2d output extents") {
    std::mt19937_64 rng(3);
    for (int h : {5, 6, 7, 8}) {
      for (int stride : {1, 2, 3}) {
        for (int pad : {0, 1, 2}) {
          const auto x = oracle::random_tensor({1, 2, static_cast<std::size_t>(h), static_cast<std::size_t>(h + 1)}, rng,
                                               1.0, false);
          const auto y = conv2d(x, Tensor::zeros({1, 2, 3, 3}), Tensor(), stride, pad);
          CHECK(y.dim(2) == static_cast<std::size_t>((h + 2 * pad - 3) / stride + 1));
          CHECK(y.dim(3) == static_cast<std::size_t>((h + 1 + 2 * pad - 3) / stride + 1));
        }
      }
    }
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({3, 4, 4}), Tensor::zeros({1, 2, 3, 3}), Tensor(), 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 1, 1}), Tensor::zeros({1, 2, 3, 3}), Tensor(), 1, 0), std::invalid_argument);
  }

  TEST_CASE("conv2d_transpose single scatter") {
    Tensor x({1, 1, 1}, {3.0});
    const auto y = conv2d_transpose(x, Tensor::full({1, 1, 2, 2}, 1.0), Tensor(), 2, 0);
    CHECK(y.shape() == Shape{1, 2, 2});
    for (double v : y.values()) CHECK(v == 3.0);
  }

  TEST_CASE("conv2d_transpose of zero input is zero") {
    std::mt19937_64 rng(4);
    const auto k = oracle::random_tensor({2, 3, 3, 3}, rng, 1.0, false);
    const auto y = conv2d_transpose(Tensor::zeros({2, 4, 4}), k, Tensor(), 2, 1);
    CHECK(y.shape() == Shape{3, 7, 7});
    for (double v : y.values()) CHECK(v == 0.0);
  }

  TEST_CASE("conv2d_transpose matches scatter-add") {
    std::mt19937_64 rng(5);
    struct Case {
      std::size_t h, k;
      int stride, pad;
    };
    for (const Case c : {Case{2, 4, 2, 1}, Case{4, 3, 2, 1}, Case{7, 3, 2, 1}, Case{3, 2, 1, 0}}) {
      const auto x = oracle::random_tensor({2, 3, c.h, c.h}, rng, 1.0, false);
      const auto k = oracle::random_tensor({3, 2, c.k, c.k}, rng, 1.0, false);
      const auto b = oracle::random_tensor({2}, rng, 1.0, false);
      const auto y = conv2d_transpose(x, k, b, c.stride, c.pad);
      std::size_t oh = 0, ow = 0;
      const auto ref = oracle::conv2d_transpose(vec(x), 2, 3, c.h, c.h, vec(k), 2, c.k, vec(b), c.stride, c.pad, oh, ow);
      REQUIRE(y.shape() == Shape{2, 2, oh, ow});
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.values()[i] - ref[i]) < 1e-12);
    }
  }

  TEST_CASE("conv2d and conv2d_transpose are adjoint") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = oracle::random_tensor({2, 3, 9, 9}, rng, 1.0, false);
      const auto k = oracle::random_tensor({4, 3, 3, 3}, rng, 1.0, false);
      const auto cx = conv2d(x, k, Tensor(), 2, 1);
      const auto y = oracle::random_tensor(cx.shape(), rng, 1.0, false);
      const auto ty = conv2d_transpose(y, k, Tensor(), 2, 1);
      REQUIRE(ty.shape() == x.shape());
      const double lhs = dot(cx.values(), y.values());
      const double rhs = dot(x.values(), ty.values());
      CHECK(std::abs(lhs - rhs) < 1e-9 * std::max(1.0, std::abs(lhs)));
    }
  }

  TEST_CASE("batch_norm of constant channels gives beta") {
    Tensor x({2, 2, 1, 2}, {3, 3, -1, -1, 3, 3, -1, -1});
    Tensor gamma({2}, {2.0, 0.5});
    Tensor beta({2}, {0.25, -4.0});
    auto st = BatchNormState::fresh(2);
    const auto y = batch_norm(x, gamma, beta, st, BatchNormMode::kTrain);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < 2; ++i) {
        CHECK(y.values()[n * 4 + i] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(y.values()[n * 4 + 2 + i] == doctest::Approx(-4.0).epsilon(1e-12));
      }
  }

  TEST_CASE("batch_norm leaves standardised input nearly unchanged") {
    Tensor x({4, 1}, {-1.0, 1.0, -1.0, 1.0});
    auto st = BatchNormState::fresh(1);
    const auto y = batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, BatchNormMode::kTrain);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y.values()[i] - x.values()[i]) < 1e-5);
  }

  TEST_CASE("batch_norm output statistics") {
    std::mt19937_64 rng(7);
    const auto x = oracle::random_tensor({5, 3, 4, 4}, rng, 3.0, false);
    auto st = BatchNormState::fresh(3);
    const auto y = batch_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), st, BatchNormMode::kTrain);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      const double count = 5 * 16;
      for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t p = 0; p < 16; ++p) m += y.values()[(n * 3 + c) * 16 + p];
      m /= count;
      for (std::size_t n = 0; n < 5; ++n)
        for (std::size_t p = 0; p < 16; ++p) v += std::pow(y.values()[(n * 3 + c) * 16 + p] - m, 2);
      v /= count;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-5);  // epsilon 1e-5 against a variance near 9
    }
  }

  TEST_CASE("batch_norm running statistics and eval mode") {
    Tensor x({2, 1}, {1.0, 3.0});
    auto st = BatchNormState::fresh(1);
    batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, BatchNormMode::kTrain);
    CHECK(st.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
    CHECK(st.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 2.0));  // unbiased batch variance 2
    const auto before = st.running_mean;
    const auto y = batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), st, BatchNormMode::kEval);
    CHECK(st.running_mean == before);
    CHECK(y.values()[0] == doctest::Approx((1.0 - 0.2) / std::sqrt(1.1 + 1e-5)));
  }

  TEST_CASE("elementwise primitives") {
    Tensor x({2}, {-1.0, 2.0});
    CHECK(vec(relu(x)) == std::vector<double>{0.0, 2.0});
    CHECK(sigmoid(Tensor({1}, {0.0})).item() == 0.5);
    CHECK(vec(add(x, x)) == std::vector<double>{-2.0, 4.0});
    CHECK(vec(mul(x, x)) == std::vector<double>{1.0, 4.0});
    CHECK(vec(scale(x, 3.0)) == std::vector<double>{-3.0, 6.0});
    CHECK(sum(x).item() == 1.0);
    CHECK(mean(x).item() == 0.5);
  }

  TEST_CASE("concat of encoder and meta maps") {
    const auto a = Tensor::zeros({1, 1024, 1, 1});
    const auto b = Tensor::zeros({1, 128, 1, 1});
    CHECK(concat_channels(a, b).shape() == Shape{1, 1152, 1, 1});
    CHECK(concat_channels(Tensor::zeros({1024, 1, 1}), Tensor::zeros({128, 1, 1})).shape() == Shape{1152, 1, 1});
    CHECK_THROWS_AS(concat_channels(Tensor::zeros({1, 2, 2, 1}), Tensor::zeros({1, 2, 1, 1})), std::invalid_argument);
  }

  TEST_CASE("linear") {
    Tensor x({1, 2}, {1.0, 2.0});
    Tensor w({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor b({3}, {0.5, 0.0, -1.0});
    CHECK(vec(linear(x, w, b)) == std::vector<double>{1.5, 2.0, 2.0});
    CHECK_THROWS_AS(linear(x, Tensor::zeros({3, 3}), b), std::invalid_argument);
  }

  TEST_CASE("layout primitives") {
    Tensor x({1, 2, 1, 2}, {1, 2, 3, 4});
    CHECK(vec(to_channels_last(x)) == std::vector<double>{1, 3, 2, 4});
    CHECK(vec(global_avg_pool(x)) == std::vector<double>{1.5, 3.5});
    CHECK(reshape(x, {4}).shape() == Shape{4});
    CHECK_THROWS_AS(reshape(x, {3}), std::invalid_argument);
  }

  TEST_CASE("backward of a sum gives ones") {
    Tensor x({3}, {1.0, -2.0, 5.0}, true);
    sum(x).backward();
    CHECK(vec(Tensor({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{1.0, 1.0, 1.0});
  }

  TEST_CASE("backward of a constant leaves zero gradients") {
    Tensor x({2}, {1.0, 2.0}, true);
    x.mutable_grad();
    const auto loss = sum(Tensor({2}, {3.0, 4.0}, true));
    loss.backward();
    for (double g : x.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("backward on a non-scalar is rejected") {
    Tensor x({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(relu(x).backward(), std::invalid_argument);
  }

  TEST_CASE("primitive gradients match finite differences") {
    const auto worst = oracle::primitive_fd(11, 20);
    CHECK(worst.size() == 17);
    for (const auto& [name, err] : worst) {
      INFO(name << " relative error " << err);
      CHECK(err < 1e-3);
    }
  }

  TEST_CASE("composite conv, batch norm, relu, linear gradient") {
    std::mt19937_64 rng(12);
    auto x = oracle::random_tensor({3, 2, 6, 6}, rng), k = oracle::random_tensor({4, 2, 3, 3}, rng),
         g = oracle::random_tensor({4}, rng), b = oracle::random_tensor({4}, rng), w = oracle::random_tensor({2, 36}, rng),
         c = oracle::random_tensor({2}, rng);
    auto st = BatchNormState::fresh(4);
    auto loss = [&] {
      auto h = relu(batch_norm(conv2d(x, k, Tensor(), 2, 1), g, b, st, BatchNormMode::kTrain));
      return sum(mul(linear(reshape(h, {3, 36}), w, c), linear(reshape(h, {3, 36}), w, c)));
    };
    CHECK(oracle::max_fd_error(loss, {x, k, g, b, w, c}, 1e-4) < 1e-3);
  }

  TEST_CASE("forward is deterministic") {
    std::mt19937_64 rng(13);
    auto x = oracle::random_tensor({2, 2, 8, 8}, rng), k = oracle::random_tensor({3, 2, 3, 3}, rng);
    const auto a = conv2d(x, k, Tensor(), 2, 1);
    const auto b = conv2d(x, k, Tensor(), 2, 1);
    CHECK(vec(a) == vec(b));
  }

  TEST_CASE("sgd plain step") {
    Tensor p({2}, {1.0, -1.0}, true);
    p.mutable_grad()[0] = 0.5;
    p.mutable_grad()[1] = -2.0;
    Sgd opt({{"p", p}}, {0.1, 0.0, 0.0});
    opt.step();
    CHECK(p.values()[0] == doctest::Approx(1.0 - 0.1 * 0.5).epsilon(1e-15));
    CHECK(p.values()[1] == doctest::Approx(-1.0 + 0.1 * 2.0).epsilon(1e-15));
  }

  TEST_CASE("sgd with zero gradient and no decay keeps parameters") {
    Tensor p({2}, {1.0, -1.0}, true);
    p.mutable_grad();
    Sgd opt({{"p", p}}, {0.1, 0.9, 0.0});
    opt.step();
    CHECK(vec(p) == std::vector<double>{1.0, -1.0});
  }

  TEST_CASE("sgd momentum recurrence over two steps") {
    const double lr = 0.05, mom = 0.9, wd = 5e-4, g1 = 0.3, g2 = -0.7, p0 = 2.0;
    Tensor p({1}, {p0}, true);
    Sgd opt({{"p", p}}, {lr, mom, wd});
    p.mutable_grad()[0] = g1;
    opt.step();
    p.mutable_grad()[0] = g2;
    opt.step();
    const double v1 = g1 + wd * p0;
    const double p1 = p0 - lr * v1;
    const double v2 = mom * v1 + g2 + wd * p1;
    const double p2 = p1 - lr * v2;
    CHECK(std::abs(p.values()[0] - p2) < 1e-12);
    CHECK(std::abs(opt.velocity()[0][0] - v2) < 1e-12);
  }

  TEST_CASE("sgd rejects a parameter without gradient") {
    Tensor p({1}, {1.0}, true);
    Sgd opt({{"p", p}}, {});
    CHECK_THROWS_AS(opt.step(), std::invalid_argument);
    CHECK_THROWS_AS(Sgd({{"p", p}}, {0.1, 1.0, 0.0}), std::invalid_argument);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    std::mt19937_64 rng(14);
    Checkpoint ck;
    ck.attributes["note"] = "two words";
    const auto t = oracle::random_tensor({2, 3}, rng, 1e-300, false);
    ck.entries.push_back({"a.weight", t.shape(), vec(t)});
    ck.entries.push_back({"b", {1}, {-0.0}});
    std::stringstream ss;
    write_checkpoint(ss, ck);
    const auto back = read_checkpoint(ss);
    CHECK(back.attributes == ck.attributes);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].shape == Shape{2, 3});
    CHECK(std::memcmp(back.entries[0].values.data(), ck.entries[0].values.data(), 6 * sizeof(double)) == 0);
    CHECK(std::signbit(back.entries[1].values[0]));
  }

  TEST_CASE("truncated checkpoint is rejected") {
    Checkpoint ck;
    ck.entries.push_back({"a", {4}, {1, 2, 3, 4}});
    std::stringstream ss;
    write_checkpoint(ss, ck);
    std::string s = ss.str();
    s.resize(s.size() - 3);
    std::stringstream cut(s);
    CHECK_THROWS(read_checkpoint(cut));
  }
}
