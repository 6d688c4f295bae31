#include "stereoloc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace stereoloc::ad {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};

}  // namespace detail

namespace {

using detail::Node;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

std::vector<double>& ensure_grad(Node& node) {
  if (node.grad.size() != node.value.size()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) require(d > 0, "tensor extents must be positive, got " + to_string(shape));
  require(numel(shape) == values.size(),
          "tensor shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
              " values");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require(defined(), "undefined tensor");
  return node_->shape;
}

std::size_t Tensor::size() const { return defined() ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  require(defined(), "undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require(defined(), "undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  require(size() == 1, "item() requires a single-element tensor, got " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }

bool Tensor::has_grad() const { return defined() && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  require(has_grad(), "tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  require(defined(), "undefined tensor");
  return ensure_grad(*node_);
}

void Tensor::zero_grad() {
  require(defined(), "undefined tensor");
  node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

void Tensor::backward() const {
  require(defined() && size() == 1, "backward() requires a scalar loss");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  ensure_grad(*node_)[0] += 1.0;
  std::vector<std::vector<double>*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    slots.clear();
    for (auto& parent : node->parents)
      slots.push_back(parent->requires_grad ? &ensure_grad(*parent) : nullptr);
    node->backward(ensure_grad(*node), slots);
  }
}

Tensor make_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                   BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values), false);
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    for (const auto& t : inputs) {
      require(t.defined(), "undefined op input");
      out.node_->parents.push_back(t.node());
    }
    out.node_->backward = std::move(backward);
  }
  return out;
}

BatchNormState BatchNormState::fresh(std::size_t channels) {
  return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

// ---------------------------------------------------------------------------
// Convolution kernels. A convolution maps X [A,H,W] to Y [B,Ho,Wo] through a
// weight [B,A,k,k]; the transposed convolution is the scatter (adjoint) of
// the same geometry.

namespace {

struct ConvGeometry {
  std::size_t a, h, w;    // X channels / extent
  std::size_t b, ho, wo;  // Y channels / extent
  std::size_t k;
  int stride, pad;

  std::size_t x_size() const { return a * h * w; }
  std::size_t y_size() const { return b * ho * wo; }
};

// Range [lo, hi) of output positions o with 0 <= o*stride + tap - pad < extent.
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t in_extent,
                                                std::size_t tap, int stride, int pad) {
  long t = static_cast<long>(tap) - pad;
  long lo = t >= 0 ? 0 : (-t + stride - 1) / stride;
  long hi_incl = (static_cast<long>(in_extent) - 1 - t);
  long hi = hi_incl < 0 ? 0 : hi_incl / stride + 1;
  hi = std::min<long>(hi, static_cast<long>(out_extent));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Y += conv(X, W)
void conv_gather(const ConvGeometry& g, const double* x, const double* w, double* y) {
  for (std::size_t ob = 0; ob < g.b; ++ob) {
    double* yb = y + ob * g.ho * g.wo;
    for (std::size_t ia = 0; ia < g.a; ++ia) {
      const double* xa = x + ia * g.h * g.w;
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        auto [oh0, oh1] = valid_range(g.ho, g.h, kh, g.stride, g.pad);
        for (std::size_t kw = 0; kw < g.k; ++kw) {
          const double wv = w[((ob * g.a + ia) * g.k + kh) * g.k + kw];
          if (wv == 0.0) continue;
          auto [ow0, ow1] = valid_range(g.wo, g.w, kw, g.stride, g.pad);
          for (std::size_t oh = oh0; oh < oh1; ++oh) {
            const double* xrow = xa + (oh * g.stride + kh - g.pad) * g.w + kw - g.pad;
            double* yrow = yb + oh * g.wo;
            for (std::size_t ow = ow0; ow < ow1; ++ow) yrow[ow] += wv * xrow[ow * g.stride];
          }
        }
      }
    }
  }
}

// X += conv^T(Y, W)
void conv_scatter(const ConvGeometry& g, const double* y, const double* w, double* x) {
  for (std::size_t ob = 0; ob < g.b; ++ob) {
    const double* yb = y + ob * g.ho * g.wo;
    for (std::size_t ia = 0; ia < g.a; ++ia) {
      double* xa = x + ia * g.h * g.w;
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        auto [oh0, oh1] = valid_range(g.ho, g.h, kh, g.stride, g.pad);
        for (std::size_t kw = 0; kw < g.k; ++kw) {
          const double wv = w[((ob * g.a + ia) * g.k + kh) * g.k + kw];
          if (wv == 0.0) continue;
          auto [ow0, ow1] = valid_range(g.wo, g.w, kw, g.stride, g.pad);
          for (std::size_t oh = oh0; oh < oh1; ++oh) {
            double* xrow = xa + (oh * g.stride + kh - g.pad) * g.w + kw - g.pad;
            const double* yrow = yb + oh * g.wo;
            for (std::size_t ow = ow0; ow < ow1; ++ow) xrow[ow * g.stride] += wv * yrow[ow];
          }
        }
      }
    }
  }
}

// dW[b,a,kh,kw] += sum_o Y[b,o] X[a,o*s+k-p]
void conv_weight_grad(const ConvGeometry& g, const double* x, const double* y, double* dw) {
  for (std::size_t ob = 0; ob < g.b; ++ob) {
    const double* yb = y + ob * g.ho * g.wo;
    for (std::size_t ia = 0; ia < g.a; ++ia) {
      const double* xa = x + ia * g.h * g.w;
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        auto [oh0, oh1] = valid_range(g.ho, g.h, kh, g.stride, g.pad);
        for (std::size_t kw = 0; kw < g.k; ++kw) {
          auto [ow0, ow1] = valid_range(g.wo, g.w, kw, g.stride, g.pad);
          double acc = 0.0;
          for (std::size_t oh = oh0; oh < oh1; ++oh) {
            const double* xrow = xa + (oh * g.stride + kh - g.pad) * g.w + kw - g.pad;
            const double* yrow = yb + oh * g.wo;
            for (std::size_t ow = ow0; ow < ow1; ++ow) acc += yrow[ow] * xrow[ow * g.stride];
          }
          dw[((ob * g.a + ia) * g.k + kh) * g.k + kw] += acc;
        }
      }
    }
  }
}

struct BatchView {
  std::size_t n, c, h, w;
  bool batched;
};

BatchView image_view(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw std::invalid_argument(std::string(op) + ": expected [C,H,W] or [N,C,H,W] input, got " +
                              to_string(t.shape()));
}

void check_kernel(const Tensor& kernel, const char* op) {
  require(kernel.rank() == 4 && kernel.dim(2) == kernel.dim(3),
          std::string(op) + ": kernel must be [*,*,k,k], got " + to_string(kernel.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
  auto v = image_view(input, "conv2d");
  check_kernel(kernel, "conv2d");
  require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
  require(kernel.dim(1) == v.c, "conv2d: input has " + std::to_string(v.c) +
                                    " channels but kernel expects " + std::to_string(kernel.dim(1)) +
                                    " (kernel " + to_string(kernel.shape()) + ")");
  const std::size_t k = kernel.dim(2);
  require(v.h + 2 * padding >= k && v.w + 2 * padding >= k,
          "conv2d: kernel larger than padded input " + to_string(input.shape()));
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == kernel.dim(0), "conv2d: bias must be [C_out]");

  ConvGeometry g{v.c, v.h, v.w, kernel.dim(0), (v.h + 2 * padding - k) / stride + 1,
                 (v.w + 2 * padding - k) / stride + 1, k, stride, padding};
  std::vector<double> out(v.n * g.y_size(), 0.0);
  auto x = input.values();
  auto w = kernel.values();
  for (std::size_t n = 0; n < v.n; ++n) {
    double* y = out.data() + n * g.y_size();
    if (bias.defined()) {
      auto bv = bias.values();
      for (std::size_t ob = 0; ob < g.b; ++ob) std::fill_n(y + ob * g.ho * g.wo, g.ho * g.wo, bv[ob]);
    }
    conv_gather(g, x.data() + n * g.x_size(), w.data(), y);
  }
  Shape shape = v.batched ? Shape{v.n, g.b, g.ho, g.wo} : Shape{g.b, g.ho, g.wo};
  std::vector<Tensor> inputs{input, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), inputs,
                     [input, kernel, g, n_batch = v.n](std::span<const double> gy,
                                                       std::span<std::vector<double>*> grads) {
                       auto x = input.values();
                       auto w = kernel.values();
                       for (std::size_t n = 0; n < n_batch; ++n) {
                         const double* gyn = gy.data() + n * g.y_size();
                         if (grads[0]) conv_scatter(g, gyn, w.data(), grads[0]->data() + n * g.x_size());
                         if (grads[1]) conv_weight_grad(g, x.data() + n * g.x_size(), gyn, grads[1]->data());
                         if (grads.size() > 2 && grads[2]) {
                           auto& gb = *grads[2];
                           for (std::size_t ob = 0; ob < g.b; ++ob) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < g.ho * g.wo; ++i) acc += gyn[ob * g.ho * g.wo + i];
                             gb[ob] += acc;
                           }
                         }
                       }
                     });
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int padding) {
  auto v = image_view(input, "conv2d_transpose");
  check_kernel(kernel, "conv2d_transpose");
  require(stride >= 1 && padding >= 0, "conv2d_transpose: stride must be >= 1 and padding >= 0");
  require(kernel.dim(0) == v.c, "conv2d_transpose: input has " + std::to_string(v.c) +
                                    " channels but kernel expects " + std::to_string(kernel.dim(0)) +
                                    " (kernel " + to_string(kernel.shape()) + ")");
  const long k = static_cast<long>(kernel.dim(2));
  const long ho = (static_cast<long>(v.h) - 1) * stride + k - 2 * padding;
  const long wo = (static_cast<long>(v.w) - 1) * stride + k - 2 * padding;
  require(ho >= 1 && wo >= 1, "conv2d_transpose: padding too large for input " + to_string(input.shape()));
  const std::size_t c_out = kernel.dim(1);
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == c_out, "conv2d_transpose: bias must be [C_out]");

  // In conv terms the output is X (channels c_out) and the input is Y.
  ConvGeometry g{c_out, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo), v.c, v.h, v.w,
                 static_cast<std::size_t>(k), stride, padding};
  std::vector<double> out(v.n * g.x_size(), 0.0);
  auto y = input.values();
  auto w = kernel.values();
  for (std::size_t n = 0; n < v.n; ++n) {
    double* x = out.data() + n * g.x_size();
    if (bias.defined()) {
      auto bv = bias.values();
      for (std::size_t c = 0; c < c_out; ++c) std::fill_n(x + c * g.h * g.w, g.h * g.w, bv[c]);
    }
    conv_scatter(g, y.data() + n * g.y_size(), w.data(), x);
  }
  Shape shape = v.batched ? Shape{v.n, c_out, g.h, g.w} : Shape{c_out, g.h, g.w};
  std::vector<Tensor> inputs{input, kernel};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), inputs,
                     [input, kernel, g, n_batch = v.n](std::span<const double> gx,
                                                       std::span<std::vector<double>*> grads) {
                       auto y = input.values();
                       auto w = kernel.values();
                       for (std::size_t n = 0; n < n_batch; ++n) {
                         const double* gxn = gx.data() + n * g.x_size();
                         if (grads[0]) conv_gather(g, gxn, w.data(), grads[0]->data() + n * g.y_size());
                         if (grads[1]) conv_weight_grad(g, gxn, y.data() + n * g.y_size(), grads[1]->data());
                         if (grads.size() > 2 && grads[2]) {
                           auto& gb = *grads[2];
                           for (std::size_t c = 0; c < g.a; ++c) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < g.h * g.w; ++i) acc += gxn[c * g.h * g.w + i];
                             gb[c] += acc;
                           }
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  BatchNormMode mode, double epsilon, double momentum) {
  require(input.rank() >= 2, "batch_norm: input must be [N,C,...], got " + to_string(input.shape()));
  const std::size_t n = input.dim(0);
  const std::size_t c = input.dim(1);
  const std::size_t inner = input.size() / (n * c);
  require(gamma.size() == c && beta.size() == c, "batch_norm: gamma/beta must have C elements");
  require(state.running_mean.size() == c && state.running_var.size() == c,
          "batch_norm: running statistics must have C elements");
  const std::size_t m = n * inner;
  auto x = input.values();
  auto gv = gamma.values();
  auto bv = beta.values();

  std::vector<double> mean(c), inv_std(c);
  if (mode == BatchNormMode::kTrain) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) s += x[(b * c + ch) * inner + i];
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const double d = x[(b * c + ch) * inner + i] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      mean[ch] = mu;
      inv_std[ch] = 1.0 / std::sqrt(var + epsilon);
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      state.running_mean[ch] = (1.0 - momentum) * state.running_mean[ch] + momentum * mu;
      state.running_var[ch] = (1.0 - momentum) * state.running_var[ch] + momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(state.running_var[ch] + epsilon);
    }
  }

  std::vector<double> xhat(x.size());
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t idx = (b * c + ch) * inner + i;
        xhat[idx] = (x[idx] - mean[ch]) * inv_std[ch];
        out[idx] = gv[ch] * xhat[idx] + bv[ch];
      }

  const bool train = mode == BatchNormMode::kTrain;
  return make_result(input.shape(), std::move(out), {input, gamma, beta},
                     [gamma, xhat = std::move(xhat), inv_std, n, c, inner, m, train](
                         std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto gv = gamma.values();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double sum_gy = 0.0, sum_gy_xhat = 0.0;
                         for (std::size_t b = 0; b < n; ++b)
                           for (std::size_t i = 0; i < inner; ++i) {
                             const std::size_t idx = (b * c + ch) * inner + i;
                             sum_gy += gy[idx];
                             sum_gy_xhat += gy[idx] * xhat[idx];
                           }
                         if (grads[1]) (*grads[1])[ch] += sum_gy_xhat;
                         if (grads[2]) (*grads[2])[ch] += sum_gy;
                         if (!grads[0]) continue;
                         auto& gx = *grads[0];
                         const double scale = gv[ch] * inv_std[ch];
                         const double md = static_cast<double>(m);
                         for (std::size_t b = 0; b < n; ++b)
                           for (std::size_t i = 0; i < inner; ++i) {
                             const std::size_t idx = (b * c + ch) * inner + i;
                             if (train)
                               gx[idx] += scale * (gy[idx] - sum_gy / md - xhat[idx] * sum_gy_xhat / md);
                             else
                               gx[idx] += scale * gy[idx];
                           }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(x.shape(), std::move(out), {x},
                     [x](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto xv = x.values();
                       auto& gx = *grads[0];
                       for (std::size_t i = 0; i < xv.size(); ++i)
                         if (xv[i] > 0.0) gx[i] += gy[i];
                     });
}

Tensor sigmoid(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  auto saved = out;
  return make_result(x.shape(), std::move(out), {x},
                     [saved = std::move(saved)](std::span<const double> gy,
                                                std::span<std::vector<double>*> grads) {
                       auto& gx = *grads[0];
                       for (std::size_t i = 0; i < saved.size(); ++i)
                         gx[i] += gy[i] * saved[i] * (1.0 - saved[i]);
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(x.rank() == 2, "linear: input must be [N,D_in], got " + to_string(x.shape()));
  require(weight.rank() == 2 && weight.dim(1) == x.dim(1),
          "linear: weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
  const std::size_t n = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  if (bias.defined()) require(bias.rank() == 1 && bias.dim(0) == dout, "linear: bias must be [D_out]");
  auto xv = x.values();
  auto wv = weight.values();
  std::vector<double> out(n * dout, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < dout; ++o) {
      double acc = bias.defined() ? bias.values()[o] : 0.0;
      for (std::size_t i = 0; i < din; ++i) acc += wv[o * din + i] * xv[b * din + i];
      out[b * dout + o] = acc;
    }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result({n, dout}, std::move(out), inputs,
                     [x, weight, n, din, dout](std::span<const double> gy,
                                               std::span<std::vector<double>*> grads) {
                       auto xv = x.values();
                       auto wv = weight.values();
                       for (std::size_t b = 0; b < n; ++b)
                         for (std::size_t o = 0; o < dout; ++o) {
                           const double g = gy[b * dout + o];
                           if (g == 0.0) continue;
                           if (grads[0])
                             for (std::size_t i = 0; i < din; ++i) (*grads[0])[b * din + i] += g * wv[o * din + i];
                           if (grads[1])
                             for (std::size_t i = 0; i < din; ++i) (*grads[1])[o * din + i] += g * xv[b * din + i];
                           if (grads.size() > 2 && grads[2]) (*grads[2])[o] += g;
                         }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.rank() == b.rank() && a.rank() >= 2 && a.rank() <= 4,
          "concat_channels: ranks must match and be 2..4, got " + to_string(a.shape()) + " and " +
              to_string(b.shape()));
  const std::size_t axis = a.rank() == 3 ? 0 : 1;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis)
      require(a.dim(d) == b.dim(d), "concat_channels: non-channel extents differ: " + to_string(a.shape()) +
                                        " vs " + to_string(b.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t ca = a.dim(axis) * inner, cb = b.dim(axis) * inner;
  Shape shape = a.shape();
  shape[axis] += b.dim(axis);
  std::vector<double> out;
  out.reserve(outer * (ca + cb));
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t o = 0; o < outer; ++o) {
    out.insert(out.end(), av.begin() + o * ca, av.begin() + (o + 1) * ca);
    out.insert(out.end(), bv.begin() + o * cb, bv.begin() + (o + 1) * cb);
  }
  return make_result(std::move(shape), std::move(out), {a, b},
                     [outer, ca, cb](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* row = gy.data() + o * (ca + cb);
                         if (grads[0])
                           for (std::size_t i = 0; i < ca; ++i) (*grads[0])[o * ca + i] += row[i];
                         if (grads[1])
                           for (std::size_t i = 0; i < cb; ++i) (*grads[1])[o * cb + i] += row[ca + i];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(),
          "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x},
                     [](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto& gx = *grads[0];
                       for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
                     });
}

Tensor to_channels_last(const Tensor& x) {
  require(x.rank() == 4, "to_channels_last: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) out[(b * hw + p) * c + ch] = xv[(b * c + ch) * hw + p];
  return make_result({n, x.dim(2), x.dim(3), c}, std::move(out), {x},
                     [n, c, hw](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto& gx = *grads[0];
                       for (std::size_t b = 0; b < n; ++b)
                         for (std::size_t ch = 0; ch < c; ++ch)
                           for (std::size_t p = 0; p < hw; ++p)
                             gx[(b * c + ch) * hw + p] += gy[(b * hw + p) * c + ch];
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 4, "global_avg_pool: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    out[i] = s / static_cast<double>(hw);
  }
  return make_result({n, c}, std::move(out), {x},
                     [hw](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto& gx = *grads[0];
                       const double inv = 1.0 / static_cast<double>(hw);
                       for (std::size_t i = 0; i < gy.size(); ++i)
                         for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += gy[i] * inv;
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       for (auto* g : grads)
                         if (g)
                           for (std::size_t i = 0; i < gy.size(); ++i) (*g)[i] += gy[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> out(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto av = a.values();
                       auto bv = b.values();
                       for (std::size_t i = 0; i < gy.size(); ++i) {
                         if (grads[0]) (*grads[0])[i] += gy[i] * bv[i];
                         if (grads[1]) (*grads[1])[i] += gy[i] * av[i];
                       }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {x},
                     [factor](std::span<const double> gy, std::span<std::vector<double>*> grads) {
                       auto& gx = *grads[0];
                       for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * factor;
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, {x}, [](std::span<const double> gy, std::span<std::vector<double>*> grads) {
    for (auto& g : *grads[0]) g += gy[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

}  // namespace stereoloc::ad
