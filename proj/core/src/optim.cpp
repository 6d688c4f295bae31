#include "stereoloc/optim.hpp"

#include <stdexcept>

namespace stereoloc::ad {

Sgd::Sgd(std::vector<NamedTensor> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {
  if (!(options_.learning_rate >= 0.0)) throw std::invalid_argument("sgd: learning rate must be >= 0");
  if (!(options_.momentum >= 0.0 && options_.momentum < 1.0))
    throw std::invalid_argument("sgd: momentum must be in [0,1)");
  if (!(options_.weight_decay >= 0.0)) throw std::invalid_argument("sgd: weight decay must be >= 0");
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.size(), 0.0);
}

void Sgd::set_learning_rate(double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("sgd: learning rate must be >= 0");
  options_.learning_rate = lr;
}

void Sgd::step() {
  for (const auto& p : params_)
    if (!p.tensor.has_grad()) throw std::invalid_argument("sgd: parameter '" + p.name + "' has no gradient");
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto values = params_[k].tensor.mutable_values();
    auto grad = params_[k].tensor.grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = options_.momentum * v[i] + grad[i] + options_.weight_decay * values[i];
      values[i] -= options_.learning_rate * v[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace stereoloc::ad
