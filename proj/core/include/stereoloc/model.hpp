#pragma once

// StereoSoundNet: spectrogram encoder + meta-data MLP + deconvolutional
// decoder onto a 13x13x125 detection grid, plus a projected feature used for
// teacher alignment.
//
// Layer schedule at width multiplier m (channel counts are rounded, min 1):
//   encoder   10 x [conv3x3 pad 1 -> batch norm -> relu]
//             strides 2,2,2,2,2,2,2,2,1,1
//             channels 32,64,64,128,128,256,256,512,512,1024 (x m)
//             256x256 -> 1x1
//   meta      linear 3->64, relu, linear 64->128m, relu
//   decoder   linear (1024m + 128m)->1024m, relu
//             linear 1024m->2048m, relu, reshape 512m x 2 x 2
//             deconv 512m->256m k4 s2 p1, relu     2 -> 4
//             deconv 256m->128m k3 s2 p1, relu     4 -> 7   (alignment tap)
//             deconv 128m->125  k3 s2 p1           7 -> 13
//   align     global average pool of the 7x7 tap, linear 128m -> teacher_dim

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stereoloc/checkpoint.hpp"
#include "stereoloc/dsp.hpp"
#include "stereoloc/optim.hpp"
#include "stereoloc/tensor.hpp"

namespace stereoloc::model {

inline constexpr std::size_t kEncoderLayers = 10;
inline constexpr std::array<int, kEncoderLayers> kEncoderStrides{2, 2, 2, 2, 2, 2, 2, 2, 1, 1};
inline constexpr std::array<int, kEncoderLayers> kEncoderChannels{32, 64, 64, 128, 128, 256, 256, 512, 512, 1024};
inline constexpr int kMetaHidden = 64;
inline constexpr int kMetaOut = 128;
inline constexpr std::size_t kDefaultTeacherDim = 64;
// Initial sigmoid output of every objectness channel.
inline constexpr double kObjectnessPrior = 0.01;

struct ModelConfig {
  double width_multiplier = 1.0;
  std::size_t input_channels = 2;  // 1 for the mono ablation
  bool use_meta = true;
  std::size_t teacher_dim = kDefaultTeacherDim;

  std::size_t scaled(int base) const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ConvLayer {
  ad::Tensor weight;
  ad::Tensor bias;
};

struct NormedConvLayer {
  ConvLayer conv;
  ad::Tensor gamma;
  ad::Tensor beta;
  ad::BatchNormState stats;
};

struct DenseLayer {
  ad::Tensor weight;
  ad::Tensor bias;
};

struct StereoSoundNetParams {
  ModelConfig config;
  std::array<NormedConvLayer, kEncoderLayers> encoder;
  std::array<DenseLayer, 2> meta_mlp;
  std::array<DenseLayer, 2> decoder_fc;
  std::array<ConvLayer, 3> decoder_deconv;
  DenseLayer align_proj;
};

// Kaiming-uniform (fan-in) weights, zero biases, unit gamma, zero beta. The
// objectness biases of the grid layer start at logit(kObjectnessPrior).
StereoSoundNetParams init_params(const ModelConfig& config, std::uint64_t seed);

// Every trainable tensor with a stable name. The meta branch is absent when
// the config disables it; the alignment head when `include_align` is false.
std::vector<ad::NamedTensor> named_parameters(const StereoSoundNetParams& params, bool include_align = true);

struct InputBatch {
  ad::Tensor spectrogram;  // [N, C, 256, 256]
  ad::Tensor meta;         // [N, 3]
};

InputBatch make_batch(std::span<const dsp::NetworkInput* const> inputs);
InputBatch make_batch(const dsp::NetworkInput& input);

struct StudentOutput {
  ad::Tensor grid;           // [N, 13, 13, 125]
  ad::Tensor align_feature;  // [N, teacher_dim]
  ad::Tensor penultimate;    // [N, 128m, 7, 7]
};

// Batch norm runs in train mode (updating running statistics) or eval mode.
StudentOutput forward(StereoSoundNetParams& params, const InputBatch& batch,
                      ad::BatchNormMode mode = ad::BatchNormMode::kEval);

ad::Checkpoint to_checkpoint(const StereoSoundNetParams& params);
// Throws std::runtime_error on missing or mis-shaped entries.
StereoSoundNetParams from_checkpoint(const ad::Checkpoint& ckpt);
ModelConfig config_from_checkpoint(const ad::Checkpoint& ckpt);

// Deep copy; the result shares no storage with `params`.
StereoSoundNetParams clone(const StereoSoundNetParams& params);

}  // namespace stereoloc::model
