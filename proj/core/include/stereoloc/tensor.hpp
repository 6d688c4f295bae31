#pragma once

// Reverse-mode differentiation over dense row-major float64 tensors.
//
// A Tensor is a cheap handle onto a shared graph node. Operations record
// their inputs and a backward closure whenever at least one input requires a
// gradient; calling backward() on a scalar walks the recorded graph in
// reverse topological order and accumulates into every reachable leaf.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stereoloc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<const double> values() const;
  // Direct write access for initialisation and optimiser updates. Writes are
  // not recorded in the graph.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // Throws std::invalid_argument unless this tensor holds exactly one element.
  void backward() const;

  // Same values, no history, no gradient requirement.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                            std::function<void(std::span<const double>,
                                               std::span<std::vector<double>*>)>);
};

// Gradient callback for custom operations: receives the gradient of the
// output and one pointer per input; the pointer is null when that input does
// not require a gradient, otherwise it is a zero-initialised (or previously
// accumulated) buffer of the input's size to add into.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<std::vector<double>*> input_grads)>;

// Builds an op result. When no input requires a gradient the closure is
// dropped and the result is a constant.
Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward);

enum class BatchNormMode { kTrain, kEval };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormState fresh(std::size_t channels);
};

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Input [C,H,W] (single sample) or [N,C,H,W]; kernel [C_out,C_in,k,k];
// bias [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);

// Input [C_in,H,W] or [N,C_in,H,W]; kernel [C_in,C_out,k,k] so that the same
// kernel tensor used by conv2d yields its adjoint.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int padding);

// Input [N,C,...]. Train mode normalises with batch statistics (biased
// variance) and updates `state` (unbiased variance); eval mode uses `state`.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  BatchNormMode mode, double epsilon = kBatchNormEpsilon,
                  double momentum = kBatchNormMomentum);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// x [N,D_in], weight [D_out,D_in], bias [D_out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Rank 3 tensors are [C,H,W] and concatenate on axis 0; rank 2 and 4 tensors
// are batched and concatenate on axis 1. All other extents must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
// [N,C,H,W] -> [N,H,W,C]
Tensor to_channels_last(const Tensor& x);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace stereoloc::ad
