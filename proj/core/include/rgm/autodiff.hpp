#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rgm/rng.hpp"
#include "rgm/tensor.hpp"

namespace rgm::ad {

// When enabled every op asserts its output is finite and throws otherwise.
// Defaults to on in debug builds.
void set_check_finite(bool enabled);
bool check_finite_enabled();

template <typename S>
struct ParameterT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;
  TensorT<S> m1;  // optimizer first moment
  TensorT<S> m2;  // optimizer second moment
  bool trainable = true;

  static ParameterT make(std::string name, TensorT<S> value, bool trainable = true) {
    ParameterT p;
    p.name = std::move(name);
    p.value = std::move(value);
    p.grad = TensorT<S>::zeros(p.value.shape);
    p.m1 = TensorT<S>::zeros(p.value.shape);
    p.m2 = TensorT<S>::zeros(p.value.shape);
    p.trainable = trainable;
    return p;
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
};

using Parameter = ParameterT<float>;

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only reverse-mode tape. Recording order is the topological order;
// backward() walks it once in reverse and accumulates dLoss/dParam into
// every bound ParameterT::grad.
template <typename S>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  Var leaf(TensorT<S> value, bool needs_grad = false);
  Var param(ParameterT<S>& p);

  // --- convolution / normalization ---
  Var conv2d(Var x, Var w, Var b, int stride, int pad);  // b may be invalid
  Var conv_transpose2d(Var x, Var w, Var b, int stride);
  Var upsample_nearest2(Var x);
  Var batchnorm2d(Var x, Var gamma, Var beta, TensorT<S>* run_mean,
                  TensorT<S>* run_var, bool training, bool update_running,
                  S momentum = S(0.1), S eps = S(1e-5));

  // --- activations ---
  Var relu(Var x);
  Var leaky_relu(Var x, S slope = S(0.2));
  Var sigmoid(Var x);

  // --- attention / shape primitives ---
  Var matmul(Var a, Var b);  // (B,M,K)@(B,K,N) or (M,K)@(K,N)
  Var transpose_last2(Var x);
  Var softmax_lastdim(Var x);
  Var reshape(Var x, std::vector<int> shape);
  Var concat(const std::vector<Var>& xs, int axis);

  // --- elementwise / reductions ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var affine(Var x, S mul, S bias);  // mul * x + bias
  Var scale_by(Var x, Var scalar);   // broadcast a 1-element tensor
  Var clamp_min(Var x, S lo);
  Var log(Var x);
  Var mean_all(Var x);
  Var sum_all(Var x);
  // sum_i coeffs[i] * xs[i], all same shape
  Var lincomb(const std::vector<Var>& xs, const std::vector<S>& coeffs);

  const TensorT<S>& value(Var v) const;
  const TensorT<S>& grad(Var v) const;
  S scalar_value(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and accumulates into bound parameters.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<S> value;
    TensorT<S> grad;
    bool grad_alloc = false;
    bool needs_grad = false;
    ParameterT<S>* bound = nullptr;
    std::vector<int> inputs;
    std::function<void(TapeT&, int)> backward_fn;
  };

  std::vector<Node> nodes_;

  int push(TensorT<S> value, std::vector<int> inputs,
           std::function<void(TapeT&, int)> backward_fn, const char* op_name);
  TensorT<S>& grad_slot(int id);
  void add_grad(int id, const TensorT<S>& g);
  Node& node(Var v);
  const Node& node(Var v) const;

  friend struct TapeAccess;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

struct GradCheckResult {
  double max_rel_error = 0;
  int checked = 0;
};

// Central finite differences (64-bit) against reverse-mode gradients.
// build_loss must rebuild the graph from current parameter values and be
// deterministic. Relative error uses max(|analytic|, |numeric|, 1e-4) as
// the denominator so a *1.01 corruption of an O(1) gradient reads ~1e-2.
GradCheckResult grad_check(
    const std::function<Var(TapeT<double>&)>& build_loss,
    const std::vector<ParameterT<double>*>& params, double eps,
    int max_checks_per_param, Rng& rng);

}  // namespace rgm::ad
