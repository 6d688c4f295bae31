#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "stereoloc/model.hpp"

using namespace stereoloc;
using namespace stereoloc::model;

namespace {

InputBatch random_batch(std::size_t n, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  InputBatch b;
  b.spectrogram = oracle::random_tensor({n, channels, dsp::kInputSize, dsp::kInputSize}, rng, 1.0, false);
  std::vector<double> meta(n * 3);
  for (auto& m : meta) m = u(rng);
  b.meta = ad::Tensor({n, 3}, meta, false);
  return b;
}

std::map<std::string, ad::Shape> shapes(const StereoSoundNetParams& p) {
  std::map<std::string, ad::Shape> out;
  for (const auto& t : named_parameters(p)) out[t.name] = t.tensor.shape();
  return out;
}

void zero_all(StereoSoundNetParams& p) {
  for (auto t : named_parameters(p))
    for (auto& v : t.tensor.mutable_values()) v = 0.0;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("layer shapes follow the width multiplier") {
    for (double m : {0.125, 0.25, 1.0}) {
      ModelConfig cfg;
      cfg.width_multiplier = m;
      const auto s = shapes(init_params(cfg, 1));
      auto c = [&](int base) { return static_cast<std::size_t>(std::lround(base * m)); };
      CHECK(s.at("encoder.0.weight") == ad::Shape{c(32), 2, 3, 3});
      CHECK(s.at("encoder.9.weight") == ad::Shape{c(1024), c(512), 3, 3});
      CHECK(s.at("meta.0.weight") == ad::Shape{64, 3});
      CHECK(s.at("meta.1.weight") == ad::Shape{c(128), 64});
      CHECK(s.at("decoder.fc0.weight") == ad::Shape{c(1024), c(1024) + c(128)});
      CHECK(s.at("decoder.fc1.weight") == ad::Shape{c(2048), c(1024)});
      CHECK(s.at("decoder.deconv0.weight") == ad::Shape{c(512), c(256), 4, 4});
      CHECK(s.at("decoder.deconv1.weight") == ad::Shape{c(256), c(128), 3, 3});
      CHECK(s.at("decoder.deconv2.weight") == ad::Shape{c(128), 125, 3, 3});
      CHECK(s.at("align.weight") == ad::Shape{kDefaultTeacherDim, c(128)});
    }
  }

  TEST_CASE("forward output shapes at small widths") {
    for (double m : {0.125, 0.25}) {
      ModelConfig cfg;
      cfg.width_multiplier = m;
      auto p = init_params(cfg, 2);
      const auto out = forward(p, random_batch(2, 2, 3));
      CHECK(out.grid.shape() == ad::Shape{2, 13, 13, 125});
      CHECK(out.align_feature.shape() == ad::Shape{2, kDefaultTeacherDim});
      CHECK(out.penultimate.shape() == ad::Shape{2, cfg.scaled(128), 7, 7});
    }
  }

  TEST_CASE("forward output shape at full width") {
    ModelConfig cfg;
    auto p = init_params(cfg, 2);
    const auto out = forward(p, random_batch(1, 2, 3));
    CHECK(out.grid.shape() == ad::Shape{1, 13, 13, 125});
    CHECK(out.penultimate.shape() == ad::Shape{1, 128, 7, 7});
  }

  TEST_CASE("width one eighth ends the encoder at 128 channels") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    CHECK(cfg.scaled(1024) == 128);
    CHECK(shapes(init_params(cfg, 0)).at("encoder.9.gamma") == ad::Shape{128});
  }

  TEST_CASE("all-zero parameters give an all-zero grid") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 4);
    zero_all(p);
    for (auto mode : {ad::BatchNormMode::kEval, ad::BatchNormMode::kTrain}) {
      const auto out = forward(p, random_batch(2, 2, 5), mode);
      for (double v : out.grid.values()) CHECK(v == 0.0);
    }
  }

  TEST_CASE("initial objectness matches the prior") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 6);
    const auto bias = p.decoder_deconv[2].bias.values();
    for (std::size_t a = 0; a < kNumAnchors; ++a) {
      CHECK(sigmoid(bias[a * 25 + 4]) == doctest::Approx(kObjectnessPrior).epsilon(1e-12));
      for (std::size_t f = 0; f < 25; ++f)
        if (f != 4) CHECK(bias[a * 25 + f] == 0.0);
    }
  }

  TEST_CASE("initialisation is seed deterministic") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    const auto a = named_parameters(init_params(cfg, 7));
    const auto b = named_parameters(init_params(cfg, 7));
    const auto c = named_parameters(init_params(cfg, 8));
    REQUIRE(a.size() == b.size());
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(std::equal(a[i].tensor.values().begin(), a[i].tensor.values().end(), b[i].tensor.values().begin()));
      if (!std::equal(a[i].tensor.values().begin(), a[i].tensor.values().end(), c[i].tensor.values().begin()))
        differs = true;
    }
    CHECK(differs);
  }

  TEST_CASE("forward is deterministic") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 9);
    const auto batch = random_batch(2, 2, 10);
    const auto a = forward(p, batch);
    const auto b = forward(p, batch);
    CHECK(std::equal(a.grid.values().begin(), a.grid.values().end(), b.grid.values().begin()));
  }

  TEST_CASE("meta input changes the output") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 11);
    auto batch = random_batch(1, 2, 12);
    const auto a = forward(p, batch);
    batch.meta = ad::Tensor::zeros({1, 3});
    const auto b = forward(p, batch);
    CHECK_FALSE(std::equal(a.grid.values().begin(), a.grid.values().end(), b.grid.values().begin()));
  }

  TEST_CASE("model without meta ignores meta") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    cfg.use_meta = false;
    auto p = init_params(cfg, 13);
    CHECK(shapes(p).count("meta.0.weight") == 0);
    CHECK(shapes(p).at("decoder.fc0.weight") == ad::Shape{128, 128});
    auto batch = random_batch(1, 2, 14);
    const auto a = forward(p, batch);
    batch.meta = ad::Tensor::zeros({1, 3});
    const auto b = forward(p, batch);
    CHECK(std::equal(a.grid.values().begin(), a.grid.values().end(), b.grid.values().begin()));
  }

  TEST_CASE("mono model takes one channel") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    cfg.input_channels = 1;
    auto p = init_params(cfg, 15);
    CHECK(forward(p, random_batch(1, 1, 16)).grid.shape() == ad::Shape{1, 13, 13, 125});
    CHECK_THROWS_AS(forward(p, random_batch(1, 2, 16)), std::invalid_argument);
  }

  TEST_CASE("forward rejects malformed batches") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 17);
    auto batch = random_batch(2, 2, 18);
    batch.meta = ad::Tensor::zeros({1, 3});
    CHECK_THROWS_AS(forward(p, batch), std::invalid_argument);
    InputBatch small;
    small.spectrogram = ad::Tensor::zeros({1, 2, 128, 128});
    small.meta = ad::Tensor::zeros({1, 3});
    CHECK_THROWS_AS(forward(p, small), std::invalid_argument);
  }

  TEST_CASE("train mode updates running statistics") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 19);
    const auto before = p.encoder[0].stats.running_mean;
    forward(p, random_batch(2, 2, 20), ad::BatchNormMode::kTrain);
    CHECK(before != p.encoder[0].stats.running_mean);
  }

  TEST_CASE("checkpoint round trip keeps the model output") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 21);
    forward(p, random_batch(2, 2, 22), ad::BatchNormMode::kTrain);
    std::stringstream ss;
    ad::write_checkpoint(ss, to_checkpoint(p));
    auto q = from_checkpoint(ad::read_checkpoint(ss));
    CHECK(q.config == p.config);
    CHECK(config_from_checkpoint(to_checkpoint(p)) == p.config);
    const auto batch = random_batch(1, 2, 23);
    const auto a = forward(p, batch);
    const auto b = forward(q, batch);
    CHECK(std::equal(a.grid.values().begin(), a.grid.values().end(), b.grid.values().begin()));
  }

  TEST_CASE("checkpoint with a missing tensor is rejected") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto ckpt = to_checkpoint(init_params(cfg, 24));
    ckpt.entries.pop_back();
    CHECK_THROWS_AS(from_checkpoint(ckpt), std::runtime_error);
  }

  TEST_CASE("clone shares no storage") {
    ModelConfig cfg;
    cfg.width_multiplier = 0.125;
    auto p = init_params(cfg, 25);
    auto q = clone(p);
    q.encoder[0].conv.weight.mutable_values()[0] += 1.0;
    CHECK(q.encoder[0].conv.weight.values()[0] != p.encoder[0].conv.weight.values()[0]);
  }

  TEST_CASE("composed model and loss gradient at width one eighth") {
    const auto r = oracle::composed_model_fd(0.125, 0, 2);
    MESSAGE("checked " << r.entries_checked << " entries, worst relative error " << r.max_relative_error);
    CHECK(r.max_relative_error < 1e-3);
  }
}
