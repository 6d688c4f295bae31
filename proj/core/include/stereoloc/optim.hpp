#pragma once

#include <string>
#include <vector>

#include "stereoloc/tensor.hpp"

namespace stereoloc::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct SgdOptions {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// SGD with momentum and L2 weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// The learning-rate schedule lives with the caller.
class Sgd {
 public:
  Sgd(std::vector<NamedTensor> params, SgdOptions options);

  // Throws std::invalid_argument if any registered parameter has no gradient.
  void step();
  void zero_grad();

  void set_learning_rate(double lr);
  const SgdOptions& options() const { return options_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdOptions options_;
};

}  // namespace stereoloc::ad
