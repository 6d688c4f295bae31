#include "stereoloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "stereoloc/grid.hpp"

namespace stereoloc::model {

namespace {

ad::Tensor uniform(ad::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(ad::numel(shape));
  for (auto& v : values) v = dist(rng);
  return ad::Tensor(std::move(shape), std::move(values), true);
}

ad::Tensor zeros(std::size_t n) { return ad::Tensor::zeros({n}, true); }

double kaiming_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

DenseLayer dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {uniform({out, in}, kaiming_bound(in), rng), zeros(out)};
}

// Visits every trainable tensor with its name.
template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn, bool include_align) {
  for (std::size_t i = 0; i < kEncoderLayers; ++i) {
    auto& l = p.encoder[i];
    const std::string base = "encoder." + std::to_string(i) + ".";
    fn(base + "weight", l.conv.weight);
    fn(base + "bias", l.conv.bias);
    fn(base + "gamma", l.gamma);
    fn(base + "beta", l.beta);
  }
  if (p.config.use_meta)
    for (std::size_t i = 0; i < 2; ++i) {
      fn("meta." + std::to_string(i) + ".weight", p.meta_mlp[i].weight);
      fn("meta." + std::to_string(i) + ".bias", p.meta_mlp[i].bias);
    }
  for (std::size_t i = 0; i < 2; ++i) {
    fn("decoder.fc" + std::to_string(i) + ".weight", p.decoder_fc[i].weight);
    fn("decoder.fc" + std::to_string(i) + ".bias", p.decoder_fc[i].bias);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    fn("decoder.deconv" + std::to_string(i) + ".weight", p.decoder_deconv[i].weight);
    fn("decoder.deconv" + std::to_string(i) + ".bias", p.decoder_deconv[i].bias);
  }
  if (include_align) {
    fn("align.weight", p.align_proj.weight);
    fn("align.bias", p.align_proj.bias);
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::size_t ModelConfig::scaled(int base) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(base * width_multiplier)));
}

StereoSoundNetParams init_params(const ModelConfig& config, std::uint64_t seed) {
  if (!(config.width_multiplier > 0.0)) throw std::invalid_argument("init_params: width multiplier must be positive");
  if (config.input_channels < 1) throw std::invalid_argument("init_params: need at least one input channel");
  if (config.teacher_dim < 1) throw std::invalid_argument("init_params: teacher_dim must be positive");
  std::mt19937_64 rng(seed);
  StereoSoundNetParams p;
  p.config = config;

  std::size_t in = config.input_channels;
  for (std::size_t i = 0; i < kEncoderLayers; ++i) {
    const std::size_t out = config.scaled(kEncoderChannels[i]);
    auto& l = p.encoder[i];
    l.conv.weight = uniform({out, in, 3, 3}, kaiming_bound(in * 9), rng);
    l.conv.bias = zeros(out);
    l.gamma = ad::Tensor::full({out}, 1.0, true);
    l.beta = zeros(out);
    l.stats = ad::BatchNormState::fresh(out);
    in = out;
  }
  const std::size_t enc = in;
  const std::size_t meta_out = config.scaled(kMetaOut);
  p.meta_mlp[0] = dense(3, kMetaHidden, rng);
  p.meta_mlp[1] = dense(kMetaHidden, meta_out, rng);

  const std::size_t joint = enc + (config.use_meta ? meta_out : 0);
  const std::size_t c512 = config.scaled(512), c256 = config.scaled(256), c128 = config.scaled(128);
  p.decoder_fc[0] = dense(joint, config.scaled(1024), rng);
  p.decoder_fc[1] = dense(config.scaled(1024), c512 * 4, rng);
  p.decoder_deconv[0] = {uniform({c512, c256, 4, 4}, kaiming_bound(c512 * 16), rng), zeros(c256)};
  p.decoder_deconv[1] = {uniform({c256, c128, 3, 3}, kaiming_bound(c256 * 9), rng), zeros(c128)};
  p.decoder_deconv[2] = {uniform({c128, kGridChannels, 3, 3}, kaiming_bound(c128 * 9), rng), zeros(kGridChannels)};
  auto grid_bias = p.decoder_deconv[2].bias.mutable_values();
  for (std::size_t a = 0; a < kNumAnchors; ++a)
    grid_bias[a * (kBoxFields + kNumClasses) + 4] = std::log(kObjectnessPrior / (1.0 - kObjectnessPrior));
  p.align_proj = dense(c128, config.teacher_dim, rng);
  return p;
}

std::vector<ad::NamedTensor> named_parameters(const StereoSoundNetParams& params, bool include_align) {
  std::vector<ad::NamedTensor> out;
  visit_tensors(params, [&](const std::string& name, const ad::Tensor& t) { out.push_back({name, t}); }, include_align);
  return out;
}

InputBatch make_batch(std::span<const dsp::NetworkInput* const> inputs) {
  if (inputs.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t c = inputs.front()->channels;
  const std::size_t per = c * dsp::kInputSize * dsp::kInputSize;
  std::vector<double> spec;
  std::vector<double> meta;
  spec.reserve(inputs.size() * per);
  meta.reserve(inputs.size() * 3);
  for (const auto* in : inputs) {
    if (in->channels != c || in->spectrogram.size() != per)
      throw std::invalid_argument("make_batch: inconsistent network inputs");
    spec.insert(spec.end(), in->spectrogram.begin(), in->spectrogram.end());
    meta.insert(meta.end(), in->meta.begin(), in->meta.end());
  }
  const std::size_t n = inputs.size();
  return {ad::Tensor({n, c, dsp::kInputSize, dsp::kInputSize}, std::move(spec)), ad::Tensor({n, 3}, std::move(meta))};
}

InputBatch make_batch(const dsp::NetworkInput& input) {
  const dsp::NetworkInput* one[] = {&input};
  return make_batch(one);
}

StudentOutput forward(StereoSoundNetParams& params, const InputBatch& batch, ad::BatchNormMode mode) {
  const auto& cfg = params.config;
  const auto& spec = batch.spectrogram;
  if (spec.rank() != 4 || spec.dim(1) != cfg.input_channels || spec.dim(2) != dsp::kInputSize ||
      spec.dim(3) != dsp::kInputSize)
    throw std::invalid_argument("forward: spectrogram batch must be [N," + std::to_string(cfg.input_channels) +
                                ",256,256], got " + ad::to_string(spec.shape()));
  const std::size_t n = spec.dim(0);
  if (cfg.use_meta && (batch.meta.rank() != 2 || batch.meta.dim(0) != n || batch.meta.dim(1) != 3))
    throw std::invalid_argument("forward: meta batch must be [N,3], got " + ad::to_string(batch.meta.shape()));

  ad::Tensor x = spec;
  for (std::size_t i = 0; i < kEncoderLayers; ++i) {
    auto& l = params.encoder[i];
    x = ad::conv2d(x, l.conv.weight, l.conv.bias, kEncoderStrides[i], 1);
    x = ad::relu(ad::batch_norm(x, l.gamma, l.beta, l.stats, mode));
  }
  if (x.dim(2) != 1 || x.dim(3) != 1) throw std::logic_error("forward: encoder did not reach 1x1");
  ad::Tensor joint = ad::reshape(x, {n, x.dim(1)});

  if (cfg.use_meta) {
    auto m = ad::relu(ad::linear(batch.meta, params.meta_mlp[0].weight, params.meta_mlp[0].bias));
    m = ad::relu(ad::linear(m, params.meta_mlp[1].weight, params.meta_mlp[1].bias));
    joint = ad::concat_channels(joint, m);
  }

  auto h = ad::relu(ad::linear(joint, params.decoder_fc[0].weight, params.decoder_fc[0].bias));
  h = ad::relu(ad::linear(h, params.decoder_fc[1].weight, params.decoder_fc[1].bias));
  const std::size_t c512 = params.decoder_deconv[0].weight.dim(0);
  h = ad::reshape(h, {n, c512, 2, 2});
  h = ad::relu(ad::conv2d_transpose(h, params.decoder_deconv[0].weight, params.decoder_deconv[0].bias, 2, 1));
  h = ad::relu(ad::conv2d_transpose(h, params.decoder_deconv[1].weight, params.decoder_deconv[1].bias, 2, 1));
  auto penultimate = h;
  auto out = ad::conv2d_transpose(h, params.decoder_deconv[2].weight, params.decoder_deconv[2].bias, 2, 1);

  StudentOutput result;
  result.grid = ad::to_channels_last(out);
  result.align_feature =
      ad::linear(ad::global_avg_pool(penultimate), params.align_proj.weight, params.align_proj.bias);
  result.penultimate = penultimate;
  return result;
}

ad::Checkpoint to_checkpoint(const StereoSoundNetParams& params) {
  ad::Checkpoint ckpt;
  const auto& c = params.config;
  ckpt.attributes["model"] = "stereosoundnet";
  ckpt.attributes["width_multiplier"] = format_double(c.width_multiplier);
  ckpt.attributes["input_channels"] = std::to_string(c.input_channels);
  ckpt.attributes["use_meta"] = c.use_meta ? "1" : "0";
  ckpt.attributes["teacher_dim"] = std::to_string(c.teacher_dim);
  ckpt.attributes["grid_size"] = std::to_string(kGridSize);
  ckpt.attributes["grid_channels"] = std::to_string(kGridChannels);
  for (const auto& [name, t] : named_parameters(params))
    ckpt.entries.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
  for (std::size_t i = 0; i < kEncoderLayers; ++i) {
    const auto& s = params.encoder[i].stats;
    const std::string base = "encoder." + std::to_string(i) + ".";
    ckpt.entries.push_back({base + "running_mean", {s.running_mean.size()}, s.running_mean});
    ckpt.entries.push_back({base + "running_var", {s.running_var.size()}, s.running_var});
  }
  return ckpt;
}

ModelConfig config_from_checkpoint(const ad::Checkpoint& ckpt) {
  auto attr = [&](const std::string& key) {
    auto it = ckpt.attributes.find(key);
    if (it == ckpt.attributes.end()) throw std::runtime_error("checkpoint missing attribute '" + key + "'");
    return it->second;
  };
  if (attr("model") != "stereosoundnet") throw std::runtime_error("checkpoint is not a stereosoundnet model");
  if (attr("grid_size") != std::to_string(kGridSize) || attr("grid_channels") != std::to_string(kGridChannels))
    throw std::runtime_error("checkpoint grid geometry does not match this build");
  ModelConfig c;
  c.width_multiplier = std::stod(attr("width_multiplier"));
  c.input_channels = std::stoul(attr("input_channels"));
  c.use_meta = attr("use_meta") == "1";
  c.teacher_dim = std::stoul(attr("teacher_dim"));
  return c;
}

StereoSoundNetParams from_checkpoint(const ad::Checkpoint& ckpt) {
  auto params = init_params(config_from_checkpoint(ckpt), 0);
  auto load = [&](const std::string& name, std::span<double> dst, const ad::Shape& shape) {
    const auto* e = ckpt.find(name);
    if (!e) throw std::runtime_error("checkpoint missing tensor '" + name + "'");
    if (e->shape != shape)
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + ad::to_string(e->shape) +
                               ", model expects " + ad::to_string(shape));
    std::copy(e->values.begin(), e->values.end(), dst.begin());
  };
  for (auto& [name, t] : named_parameters(params)) load(name, t.mutable_values(), t.shape());
  for (std::size_t i = 0; i < kEncoderLayers; ++i) {
    auto& s = params.encoder[i].stats;
    const std::string base = "encoder." + std::to_string(i) + ".";
    load(base + "running_mean", s.running_mean, {s.running_mean.size()});
    load(base + "running_var", s.running_var, {s.running_var.size()});
  }
  return params;
}

StereoSoundNetParams clone(const StereoSoundNetParams& params) { return from_checkpoint(to_checkpoint(params)); }

}  // namespace stereoloc::model
