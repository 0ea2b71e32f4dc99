#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace rgm::ad {

// Dense row-major n-d array. Images use (N, C, H, W).
template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  TensorT(std::vector<int> shape_, std::vector<S> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("tensor: data length != product of extents");
  }

  static std::int64_t shape_numel(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e < 0) throw std::invalid_argument("tensor: negative extent");
      n *= e;
    }
    return n;
  }

  static TensorT zeros(std::vector<int> shape_) {
    TensorT t;
    t.shape = std::move(shape_);
    t.data.assign(static_cast<std::size_t>(shape_numel(t.shape)), S(0));
    return t;
  }

  static TensorT full(std::vector<int> shape_, S v) {
    TensorT t = zeros(std::move(shape_));
    for (auto& x : t.data) x = v;
    return t;
  }

  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  S& at4(int n, int c, int y, int x) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) *
                    shape[3] +
                x];
  }
  S at4(int n, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) *
                    shape[3] +
                x];
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename Dst, typename Src>
TensorT<Dst> cast_tensor(const TensorT<Src>& t) {
  TensorT<Dst> out;
  out.shape = t.shape;
  out.data.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i)
    out.data[i] = static_cast<Dst>(t.data[i]);
  return out;
}

template <typename S>
bool same_shape(const TensorT<S>& a, const TensorT<S>& b) {
  return a.shape == b.shape;
}

}  // namespace rgm::ad
