#include "rgm/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace rgm::ad {

namespace {

std::atomic<bool> g_check_finite{
#ifdef NDEBUG
    false
#else
    true
#endif
};

}  // namespace

void set_check_finite(bool enabled) { g_check_finite.store(enabled); }
bool check_finite_enabled() { return g_check_finite.load(); }

template <typename S>
typename TapeT<S>::Node& TapeT<S>::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename S>
const typename TapeT<S>::Node& TapeT<S>::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("tape: invalid var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename S>
int TapeT<S>::push(TensorT<S> value, std::vector<int> inputs,
                   std::function<void(TapeT&, int)> backward_fn,
                   const char* op_name) {
  if (check_finite_enabled()) {
    for (S v : value.data) {
      if (!std::isfinite(static_cast<double>(v)))
        throw std::runtime_error(std::string("non-finite value from op ") + op_name);
    }
  }
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward_fn = std::move(backward_fn);
  for (int i : n.inputs)
    if (nodes_[static_cast<std::size_t>(i)].needs_grad) n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename S>
TensorT<S>& TapeT<S>::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = TensorT<S>::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

template <typename S>
void TapeT<S>::add_grad(int id, const TensorT<S>& g) {
  TensorT<S>& slot = grad_slot(id);
  for (std::size_t i = 0; i < slot.data.size(); ++i) slot.data[i] += g.data[i];
}

template <typename S>
Var TapeT<S>::leaf(TensorT<S> value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
Var TapeT<S>::param(ParameterT<S>& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
const TensorT<S>& TapeT<S>::value(Var v) const {
  return node(v).value;
}

template <typename S>
const TensorT<S>& TapeT<S>::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad_alloc) throw std::logic_error("tape: gradient not computed");
  return n.grad;
}

template <typename S>
S TapeT<S>::scalar_value(Var v) const {
  const TensorT<S>& t = node(v).value;
  if (t.numel() != 1) throw std::invalid_argument("tape: expected scalar");
  return t.data[0];
}

template <typename S>
void TapeT<S>::backward(Var loss) {
  Node& ln = node(loss);
  if (ln.value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  grad_slot(loss.id).data[0] = S(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || !n.grad_alloc || !n.backward_fn) continue;
    n.backward_fn(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.bound != nullptr && n.grad_alloc) {
      for (std::size_t i = 0; i < n.grad.data.size(); ++i)
        n.bound->grad.data[i] += n.grad.data[i];
    }
  }
}

// ---------------------------------------------------------------------------
// convolution

template <typename S>
Var TapeT<S>::conv2d(Var xv, Var wv, Var bv, int stride, int pad) {
  const TensorT<S>& x = value(xv);
  const TensorT<S>& w = value(wv);
  if (x.ndim() != 4 || w.ndim() != 4)
    throw std::invalid_argument("conv2d: x and w must be 4-d");
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Ci) throw std::invalid_argument("conv2d: channel mismatch");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: kernel exceeds input");
  const bool has_bias = bv.valid();
  if (has_bias && value(bv).numel() != Co)
    throw std::invalid_argument("conv2d: bias size mismatch");

  TensorT<S> y = TensorT<S>::zeros({N, Co, Ho, Wo});
  const S* xd = x.data.data();
  const S* wd = w.data.data();
  const S* bd = has_bias ? value(bv).data.data() : nullptr;
  S* yd = y.data.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      for (int oy = 0; oy < Ho; ++oy) {
        S* yrow = yd + ((static_cast<std::size_t>(n) * Co + co) * Ho + oy) * Wo;
        if (has_bias)
          for (int ox = 0; ox < Wo; ++ox) yrow[ox] = bd[co];
        for (int ci = 0; ci < Ci; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            const S* xrow =
                xd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
            const S* wrow =
                wd + ((static_cast<std::size_t>(co) * Ci + ci) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              S wval = wrow[kx];
              int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
              int ox_hi = std::min(Wo - 1, (W - 1 - kx + pad) / stride);
              for (int ox = ox_lo; ox <= ox_hi; ++ox)
                yrow[ox] += wval * xrow[ox * stride - pad + kx];
            }
          }
        }
      }
    }
  }

  std::vector<int> inputs{xv.id, wv.id};
  if (has_bias) inputs.push_back(bv.id);
  int xid = xv.id, wid = wv.id, bid = has_bias ? bv.id : -1;
  auto bw = [xid, wid, bid, stride, pad, N, Ci, H, W, Co, kh, kw, Ho,
             Wo](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    const TensorT<S>& w = t.nodes_[static_cast<std::size_t>(wid)].value;
    const S* dyd = gy.data.data();
    const S* xd = x.data.data();
    const S* wd = w.data.data();

    if (t.nodes_[static_cast<std::size_t>(xid)].needs_grad) {
      TensorT<S>& gx = t.grad_slot(xid);
      S* gxd = gx.data.data();
#pragma omp parallel for collapse(2) schedule(static)
      for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Ci; ++ci) {
          for (int iy = 0; iy < H; ++iy) {
            S* gxrow =
                gxd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
            for (int co = 0; co < Co; ++co) {
              for (int ky = 0; ky < kh; ++ky) {
                int oy_num = iy + pad - ky;
                if (oy_num < 0 || oy_num % stride != 0) continue;
                int oy = oy_num / stride;
                if (oy >= Ho) continue;
                const S* dyrow =
                    dyd +
                    ((static_cast<std::size_t>(n) * Co + co) * Ho + oy) * Wo;
                const S* wrow =
                    wd +
                    ((static_cast<std::size_t>(co) * Ci + ci) * kh + ky) * kw;
                for (int kx = 0; kx < kw; ++kx) {
                  int ox_num_base = pad - kx;
                  // ix = ox*stride - pad + kx  =>  ox = (ix + pad - kx)/stride
                  for (int ix = 0; ix < W; ++ix) {
                    int ox_num = ix + ox_num_base;
                    if (ox_num < 0 || ox_num % stride != 0) continue;
                    int ox = ox_num / stride;
                    if (ox >= Wo) continue;
                    gxrow[ix] += dyrow[ox] * wrow[kx];
                  }
                }
              }
            }
          }
        }
      }
    }
    if (t.nodes_[static_cast<std::size_t>(wid)].needs_grad) {
      TensorT<S>& gw = t.grad_slot(wid);
      S* gwd = gw.data.data();
#pragma omp parallel for collapse(2) schedule(static)
      for (int co = 0; co < Co; ++co) {
        for (int ci = 0; ci < Ci; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              S acc = 0;
              for (int n = 0; n < N; ++n) {
                for (int oy = 0; oy < Ho; ++oy) {
                  int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= H) continue;
                  const S* dyrow =
                      dyd +
                      ((static_cast<std::size_t>(n) * Co + co) * Ho + oy) * Wo;
                  const S* xrow =
                      xd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
                  int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                  int ox_hi = std::min(Wo - 1, (W - 1 - kx + pad) / stride);
                  for (int ox = ox_lo; ox <= ox_hi; ++ox)
                    acc += dyrow[ox] * xrow[ox * stride - pad + kx];
                }
              }
              gwd[((static_cast<std::size_t>(co) * Ci + ci) * kh + ky) * kw + kx] +=
                  acc;
            }
          }
        }
      }
    }
    if (bid >= 0 && t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
      TensorT<S>& gb = t.grad_slot(bid);
      for (int co = 0; co < Co; ++co) {
        S acc = 0;
        for (int n = 0; n < N; ++n) {
          const S* dyrow =
              dyd + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
          for (int i = 0; i < Ho * Wo; ++i) acc += dyrow[i];
        }
        gb.data[static_cast<std::size_t>(co)] += acc;
      }
    }
  };
  return Var{push(std::move(y), std::move(inputs), std::move(bw), "conv2d")};
}

template <typename S>
Var TapeT<S>::conv_transpose2d(Var xv, Var wv, Var bv, int stride) {
  const TensorT<S>& x = value(xv);
  const TensorT<S>& w = value(wv);
  if (x.ndim() != 4 || w.ndim() != 4)
    throw std::invalid_argument("conv_transpose2d: x and w must be 4-d");
  const int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int kh = w.dim(2), kw = w.dim(3), Co = w.dim(1);
  if (w.dim(0) != Ci)
    throw std::invalid_argument("conv_transpose2d: channel mismatch");
  if (stride < 1) throw std::invalid_argument("conv_transpose2d: bad stride");
  const int Ho = (H - 1) * stride + kh;
  const int Wo = (W - 1) * stride + kw;
  const bool has_bias = bv.valid();
  if (has_bias && value(bv).numel() != Co)
    throw std::invalid_argument("conv_transpose2d: bias size mismatch");

  TensorT<S> y = TensorT<S>::zeros({N, Co, Ho, Wo});
  const S* xd = x.data.data();
  const S* wd = w.data.data();
  const S* bd = has_bias ? value(bv).data.data() : nullptr;
  S* yd = y.data.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < N; ++n) {
    for (int co = 0; co < Co; ++co) {
      for (int oy = 0; oy < Ho; ++oy) {
        S* yrow = yd + ((static_cast<std::size_t>(n) * Co + co) * Ho + oy) * Wo;
        if (has_bias)
          for (int ox = 0; ox < Wo; ++ox) yrow[ox] = bd[co];
        for (int ci = 0; ci < Ci; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            int iy_num = oy - ky;
            if (iy_num < 0 || iy_num % stride != 0) continue;
            int iy = iy_num / stride;
            if (iy >= H) continue;
            const S* xrow =
                xd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
            const S* wrow =
                wd + ((static_cast<std::size_t>(ci) * Co + co) * kh + ky) * kw;
            for (int kx = 0; kx < kw; ++kx) {
              int ix_num_base = -kx;
              for (int ox = 0; ox < Wo; ++ox) {
                int ix_num = ox + ix_num_base;
                if (ix_num < 0 || ix_num % stride != 0) continue;
                int ix = ix_num / stride;
                if (ix >= W) continue;
                yrow[ox] += xrow[ix] * wrow[kx];
              }
            }
          }
        }
      }
    }
  }

  std::vector<int> inputs{xv.id, wv.id};
  if (has_bias) inputs.push_back(bv.id);
  int xid = xv.id, wid = wv.id, bid = has_bias ? bv.id : -1;
  auto bw = [xid, wid, bid, stride, N, Ci, H, W, Co, kh, kw, Ho,
             Wo](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    const TensorT<S>& w = t.nodes_[static_cast<std::size_t>(wid)].value;
    const S* dyd = gy.data.data();
    const S* xd = x.data.data();
    const S* wd = w.data.data();

    if (t.nodes_[static_cast<std::size_t>(xid)].needs_grad) {
      TensorT<S>& gx = t.grad_slot(xid);
      S* gxd = gx.data.data();
#pragma omp parallel for collapse(2) schedule(static)
      for (int n = 0; n < N; ++n) {
        for (int ci = 0; ci < Ci; ++ci) {
          for (int iy = 0; iy < H; ++iy) {
            S* gxrow =
                gxd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
            for (int co = 0; co < Co; ++co) {
              for (int ky = 0; ky < kh; ++ky) {
                int oy = iy * stride + ky;
                const S* dyrow =
                    dyd +
                    ((static_cast<std::size_t>(n) * Co + co) * Ho + oy) * Wo;
                const S* wrow =
                    wd +
                    ((static_cast<std::size_t>(ci) * Co + co) * kh + ky) * kw;
                for (int kx = 0; kx < kw; ++kx) {
                  for (int ix = 0; ix < W; ++ix)
                    gxrow[ix] += dyrow[ix * stride + kx] * wrow[kx];
                }
              }
            }
          }
        }
      }
    }
    if (t.nodes_[static_cast<std::size_t>(wid)].needs_grad) {
      TensorT<S>& gw = t.grad_slot(wid);
      S* gwd = gw.data.data();
#pragma omp parallel for collapse(2) schedule(static)
      for (int ci = 0; ci < Ci; ++ci) {
        for (int co = 0; co < Co; ++co) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              S acc = 0;
              for (int n = 0; n < N; ++n) {
                for (int iy = 0; iy < H; ++iy) {
                  const S* xrow =
                      xd + ((static_cast<std::size_t>(n) * Ci + ci) * H + iy) * W;
                  const S* dyrow = dyd + ((static_cast<std::size_t>(n) * Co + co) * Ho +
                                          iy * stride + ky) *
                                             Wo;
                  for (int ix = 0; ix < W; ++ix)
                    acc += xrow[ix] * dyrow[ix * stride + kx];
                }
              }
              gwd[((static_cast<std::size_t>(ci) * Co + co) * kh + ky) * kw + kx] +=
                  acc;
            }
          }
        }
      }
    }
    if (bid >= 0 && t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
      TensorT<S>& gb = t.grad_slot(bid);
      for (int co = 0; co < Co; ++co) {
        S acc = 0;
        for (int n = 0; n < N; ++n) {
          const S* dyrow =
              dyd + (static_cast<std::size_t>(n) * Co + co) * Ho * Wo;
          for (int i = 0; i < Ho * Wo; ++i) acc += dyrow[i];
        }
        gb.data[static_cast<std::size_t>(co)] += acc;
      }
    }
  };
  return Var{push(std::move(y), std::move(inputs), std::move(bw),
                  "conv_transpose2d")};
}

template <typename S>
Var TapeT<S>::upsample_nearest2(Var xv) {
  const TensorT<S>& x = value(xv);
  if (x.ndim() != 4) throw std::invalid_argument("upsample: x must be 4-d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  TensorT<S> y = TensorT<S>::zeros({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const S* xp = x.data.data() + static_cast<std::size_t>(nc) * H * W;
    S* yp = y.data.data() + static_cast<std::size_t>(nc) * 4 * H * W;
    for (int iy = 0; iy < H; ++iy) {
      for (int ix = 0; ix < W; ++ix) {
        S v = xp[iy * W + ix];
        yp[(2 * iy) * 2 * W + 2 * ix] = v;
        yp[(2 * iy) * 2 * W + 2 * ix + 1] = v;
        yp[(2 * iy + 1) * 2 * W + 2 * ix] = v;
        yp[(2 * iy + 1) * 2 * W + 2 * ix + 1] = v;
      }
    }
  }
  int xid = xv.id;
  auto bw = [xid, N, C, H, W](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (int nc = 0; nc < N * C; ++nc) {
      const S* gyp = gy.data.data() + static_cast<std::size_t>(nc) * 4 * H * W;
      S* gxp = gx.data.data() + static_cast<std::size_t>(nc) * H * W;
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix)
          gxp[iy * W + ix] += gyp[(2 * iy) * 2 * W + 2 * ix] +
                              gyp[(2 * iy) * 2 * W + 2 * ix + 1] +
                              gyp[(2 * iy + 1) * 2 * W + 2 * ix] +
                              gyp[(2 * iy + 1) * 2 * W + 2 * ix + 1];
    }
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "upsample_nearest2")};
}

template <typename S>
Var TapeT<S>::batchnorm2d(Var xv, Var gammav, Var betav, TensorT<S>* run_mean,
                          TensorT<S>* run_var, bool training,
                          bool update_running, S momentum, S eps) {
  const TensorT<S>& x = value(xv);
  if (x.ndim() != 4) throw std::invalid_argument("batchnorm2d: x must be 4-d");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (value(gammav).numel() != C || value(betav).numel() != C)
    throw std::invalid_argument("batchnorm2d: affine params must be sized C");
  if (run_mean == nullptr || run_var == nullptr)
    throw std::invalid_argument("batchnorm2d: running stats required");
  const std::int64_t M = static_cast<std::int64_t>(N) * H * W;

  auto xhat = std::make_shared<TensorT<S>>(TensorT<S>::zeros(x.shape));
  auto invstd = std::make_shared<std::vector<S>>(static_cast<std::size_t>(C));

  const S* gd = value(gammav).data.data();
  const S* bd = value(betav).data.data();
  TensorT<S> y = TensorT<S>::zeros(x.shape);

  for (int c = 0; c < C; ++c) {
    S mean, var;
    if (training) {
      double sum = 0;
      for (int n = 0; n < N; ++n) {
        const S* xp =
            x.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        for (int i = 0; i < H * W; ++i) sum += xp[i];
      }
      mean = static_cast<S>(sum / static_cast<double>(M));
      double sq = 0;
      for (int n = 0; n < N; ++n) {
        const S* xp =
            x.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        for (int i = 0; i < H * W; ++i) {
          double d = xp[i] - mean;
          sq += d * d;
        }
      }
      var = static_cast<S>(sq / static_cast<double>(M));
      if (update_running) {
        run_mean->data[static_cast<std::size_t>(c)] =
            (S(1) - momentum) * run_mean->data[static_cast<std::size_t>(c)] +
            momentum * mean;
        run_var->data[static_cast<std::size_t>(c)] =
            (S(1) - momentum) * run_var->data[static_cast<std::size_t>(c)] +
            momentum * var;
      }
    } else {
      mean = run_mean->data[static_cast<std::size_t>(c)];
      var = run_var->data[static_cast<std::size_t>(c)];
    }
    S is = S(1) / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(c)] = is;
    for (int n = 0; n < N; ++n) {
      const S* xp =
          x.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      S* xh = xhat->data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      S* yp = y.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
      for (int i = 0; i < H * W; ++i) {
        xh[i] = (xp[i] - mean) * is;
        yp[i] = gd[c] * xh[i] + bd[c];
      }
    }
  }

  int xid = xv.id, gid = gammav.id, bid = betav.id;
  auto bw = [xid, gid, bid, xhat, invstd, training, N, C, H, W, M](TapeT& t,
                                                                   int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const S* gamma = t.nodes_[static_cast<std::size_t>(gid)].value.data.data();
    const bool need_x = t.nodes_[static_cast<std::size_t>(xid)].needs_grad;
    const bool need_g = t.nodes_[static_cast<std::size_t>(gid)].needs_grad;
    const bool need_b = t.nodes_[static_cast<std::size_t>(bid)].needs_grad;

    for (int c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < N; ++n) {
        const S* dyp =
            gy.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        const S* xh =
            xhat->data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
        for (int i = 0; i < H * W; ++i) {
          sum_dy += dyp[i];
          sum_dy_xhat += static_cast<double>(dyp[i]) * xh[i];
        }
      }
      if (need_g)
        t.grad_slot(gid).data[static_cast<std::size_t>(c)] +=
            static_cast<S>(sum_dy_xhat);
      if (need_b)
        t.grad_slot(bid).data[static_cast<std::size_t>(c)] +=
            static_cast<S>(sum_dy);
      if (need_x) {
        TensorT<S>& gx = t.grad_slot(xid);
        S is = (*invstd)[static_cast<std::size_t>(c)];
        if (training) {
          S mean_dy = static_cast<S>(sum_dy / static_cast<double>(M));
          S mean_dy_xhat = static_cast<S>(sum_dy_xhat / static_cast<double>(M));
          for (int n = 0; n < N; ++n) {
            const S* dyp =
                gy.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            const S* xh = xhat->data.data() +
                          ((static_cast<std::size_t>(n) * C + c) * H) * W;
            S* gxp =
                gx.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            for (int i = 0; i < H * W; ++i)
              gxp[i] += gamma[c] * is * (dyp[i] - mean_dy - xh[i] * mean_dy_xhat);
          }
        } else {
          for (int n = 0; n < N; ++n) {
            const S* dyp =
                gy.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            S* gxp =
                gx.data.data() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            for (int i = 0; i < H * W; ++i) gxp[i] += gamma[c] * is * dyp[i];
          }
        }
      }
    }
  };
  return Var{push(std::move(y), {xv.id, gammav.id, betav.id}, std::move(bw),
                  "batchnorm2d")};
}

// ---------------------------------------------------------------------------
// activations

template <typename S>
Var TapeT<S>::relu(Var xv) {
  const TensorT<S>& x = value(xv);
  TensorT<S> y = x;
  for (auto& v : y.data) v = v > S(0) ? v : S(0);
  int xid = xv.id;
  auto bw = [xid](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      if (x.data[i] > S(0)) gx.data[i] += gy.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "relu")};
}

template <typename S>
Var TapeT<S>::leaky_relu(Var xv, S slope) {
  const TensorT<S>& x = value(xv);
  TensorT<S> y = x;
  for (auto& v : y.data) v = v > S(0) ? v : slope * v;
  int xid = xv.id;
  auto bw = [xid, slope](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += (x.data[i] > S(0) ? S(1) : slope) * gy.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "leaky_relu")};
}

template <typename S>
Var TapeT<S>::sigmoid(Var xv) {
  const TensorT<S>& x = value(xv);
  TensorT<S> y = x;
  for (auto& v : y.data) {
    double xv_ = static_cast<double>(v);
    v = static_cast<S>(xv_ >= 0 ? 1.0 / (1.0 + std::exp(-xv_))
                                : std::exp(xv_) / (1.0 + std::exp(xv_)));
  }
  auto saved = std::make_shared<TensorT<S>>(y);
  int xid = xv.id;
  auto bw = [xid, saved](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
      S s = saved->data[i];
      gx.data[i] += gy.data[i] * s * (S(1) - s);
    }
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "sigmoid")};
}

// ---------------------------------------------------------------------------
// attention primitives

namespace {

template <typename S>
void matmul_dims(const TensorT<S>& a, const TensorT<S>& b, int& B, int& M,
                 int& K, int& N, bool& batched) {
  if (a.ndim() == 3 && b.ndim() == 3) {
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
      throw std::invalid_argument("matmul: shape mismatch");
    B = a.dim(0);
    M = a.dim(1);
    K = a.dim(2);
    N = b.dim(2);
    batched = true;
  } else if (a.ndim() == 2 && b.ndim() == 2) {
    if (a.dim(1) != b.dim(0)) throw std::invalid_argument("matmul: shape mismatch");
    B = 1;
    M = a.dim(0);
    K = a.dim(1);
    N = b.dim(1);
    batched = false;
  } else {
    throw std::invalid_argument("matmul: need matching 2-d or 3-d operands");
  }
}

}  // namespace

template <typename S>
Var TapeT<S>::matmul(Var av, Var bv) {
  const TensorT<S>& a = value(av);
  const TensorT<S>& b = value(bv);
  int B, M, K, N;
  bool batched;
  matmul_dims(a, b, B, M, K, N, batched);
  TensorT<S> y = TensorT<S>::zeros(batched ? std::vector<int>{B, M, N}
                                           : std::vector<int>{M, N});
#pragma omp parallel for collapse(2) schedule(static)
  for (int bb = 0; bb < B; ++bb) {
    for (int m = 0; m < M; ++m) {
      const S* arow =
          a.data.data() + (static_cast<std::size_t>(bb) * M + m) * K;
      S* yrow = y.data.data() + (static_cast<std::size_t>(bb) * M + m) * N;
      for (int k = 0; k < K; ++k) {
        S va = arow[k];
        const S* brow =
            b.data.data() + (static_cast<std::size_t>(bb) * K + k) * N;
        for (int n = 0; n < N; ++n) yrow[n] += va * brow[n];
      }
    }
  }
  int aid = av.id, bid = bv.id;
  auto bw = [aid, bid, B, M, K, N](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& a = t.nodes_[static_cast<std::size_t>(aid)].value;
    const TensorT<S>& b = t.nodes_[static_cast<std::size_t>(bid)].value;
    if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
      TensorT<S>& ga = t.grad_slot(aid);
#pragma omp parallel for collapse(2) schedule(static)
      for (int bb = 0; bb < B; ++bb) {
        for (int m = 0; m < M; ++m) {
          const S* gyrow =
              gy.data.data() + (static_cast<std::size_t>(bb) * M + m) * N;
          S* garow =
              ga.data.data() + (static_cast<std::size_t>(bb) * M + m) * K;
          for (int k = 0; k < K; ++k) {
            const S* brow =
                b.data.data() + (static_cast<std::size_t>(bb) * K + k) * N;
            S acc = 0;
            for (int n = 0; n < N; ++n) acc += gyrow[n] * brow[n];
            garow[k] += acc;
          }
        }
      }
    }
    if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
      TensorT<S>& gb = t.grad_slot(bid);
#pragma omp parallel for collapse(2) schedule(static)
      for (int bb = 0; bb < B; ++bb) {
        for (int k = 0; k < K; ++k) {
          const S* arowT =
              a.data.data() + static_cast<std::size_t>(bb) * M * K + k;
          S* gbrow = gb.data.data() + (static_cast<std::size_t>(bb) * K + k) * N;
          for (int m = 0; m < M; ++m) {
            S va = arowT[static_cast<std::size_t>(m) * K];
            const S* gyrow =
                gy.data.data() + (static_cast<std::size_t>(bb) * M + m) * N;
            for (int n = 0; n < N; ++n) gbrow[n] += va * gyrow[n];
          }
        }
      }
    }
  };
  return Var{push(std::move(y), {av.id, bv.id}, std::move(bw), "matmul")};
}

template <typename S>
Var TapeT<S>::transpose_last2(Var xv) {
  const TensorT<S>& x = value(xv);
  if (x.ndim() < 2) throw std::invalid_argument("transpose: need >= 2 dims");
  std::vector<int> oshape = x.shape;
  int R = oshape[oshape.size() - 2], C = oshape[oshape.size() - 1];
  std::swap(oshape[oshape.size() - 2], oshape[oshape.size() - 1]);
  std::int64_t outer = x.numel() / (static_cast<std::int64_t>(R) * C);
  TensorT<S> y = TensorT<S>::zeros(oshape);
  for (std::int64_t o = 0; o < outer; ++o) {
    const S* xp = x.data.data() + o * R * C;
    S* yp = y.data.data() + o * R * C;
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) yp[static_cast<std::size_t>(c) * R + r] = xp[static_cast<std::size_t>(r) * C + c];
  }
  int xid = xv.id;
  auto bw = [xid, R, C, outer](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::int64_t o = 0; o < outer; ++o) {
      const S* gyp = gy.data.data() + o * R * C;
      S* gxp = gx.data.data() + o * R * C;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
          gxp[static_cast<std::size_t>(r) * C + c] += gyp[static_cast<std::size_t>(c) * R + r];
    }
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "transpose_last2")};
}

template <typename S>
Var TapeT<S>::softmax_lastdim(Var xv) {
  const TensorT<S>& x = value(xv);
  if (x.ndim() < 1) throw std::invalid_argument("softmax: need >= 1 dim");
  int L = x.dim(x.ndim() - 1);
  std::int64_t rows = x.numel() / L;
  TensorT<S> y = TensorT<S>::zeros(x.shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const S* xp = x.data.data() + r * L;
    S* yp = y.data.data() + r * L;
    S mx = xp[0];
    for (int i = 1; i < L; ++i) mx = std::max(mx, xp[i]);
    double sum = 0;
    for (int i = 0; i < L; ++i) {
      double e = std::exp(static_cast<double>(xp[i] - mx));
      yp[i] = static_cast<S>(e);
      sum += e;
    }
    for (int i = 0; i < L; ++i) yp[i] = static_cast<S>(yp[i] / sum);
  }
  auto saved = std::make_shared<TensorT<S>>(y);
  int xid = xv.id;
  auto bw = [xid, saved, L, rows](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::int64_t r = 0; r < rows; ++r) {
      const S* yp = saved->data.data() + r * L;
      const S* gyp = gy.data.data() + r * L;
      S* gxp = gx.data.data() + r * L;
      double dot = 0;
      for (int i = 0; i < L; ++i) dot += static_cast<double>(gyp[i]) * yp[i];
      for (int i = 0; i < L; ++i)
        gxp[i] += yp[i] * (gyp[i] - static_cast<S>(dot));
    }
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "softmax")};
}

template <typename S>
Var TapeT<S>::reshape(Var xv, std::vector<int> shape) {
  const TensorT<S>& x = value(xv);
  if (TensorT<S>::shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  TensorT<S> y;
  y.shape = std::move(shape);
  y.data = x.data;
  int xid = xv.id;
  auto bw = [xid](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "reshape")};
}

template <typename S>
Var TapeT<S>::concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const TensorT<S>& first = value(xs[0]);
  int nd = first.ndim();
  if (axis < 0 || axis >= nd) throw std::invalid_argument("concat: bad axis");
  std::vector<int> oshape = first.shape;
  std::vector<int> extents;
  extents.push_back(first.dim(axis));
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const TensorT<S>& t = value(xs[i]);
    if (t.ndim() != nd) throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < nd; ++d)
      if (d != axis && t.dim(d) != first.dim(d))
        throw std::invalid_argument("concat: extent mismatch");
    oshape[static_cast<std::size_t>(axis)] += t.dim(axis);
    extents.push_back(t.dim(axis));
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first.dim(d);
  for (int d = axis + 1; d < nd; ++d) inner *= first.dim(d);

  TensorT<S> y = TensorT<S>::zeros(oshape);
  std::int64_t total_axis = oshape[static_cast<std::size_t>(axis)];
  std::int64_t off = 0;
  std::vector<int> ids;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const TensorT<S>& t = value(xs[i]);
    std::int64_t e = extents[i];
    for (std::int64_t o = 0; o < outer; ++o) {
      const S* src = t.data.data() + o * e * inner;
      S* dst = y.data.data() + (o * total_axis + off) * inner;
      std::copy_n(src, e * inner, dst);
    }
    off += e;
    ids.push_back(xs[i].id);
  }
  auto bw = [ids, extents, outer, inner, total_axis](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    std::int64_t off2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::int64_t e = extents[i];
      if (t.nodes_[static_cast<std::size_t>(ids[i])].needs_grad) {
        TensorT<S>& gx = t.grad_slot(ids[i]);
        for (std::int64_t o = 0; o < outer; ++o) {
          const S* src = gy.data.data() + (o * total_axis + off2) * inner;
          S* dst = gx.data.data() + o * e * inner;
          for (std::int64_t k = 0; k < e * inner; ++k) dst[k] += src[k];
        }
      }
      off2 += e;
    }
  };
  return Var{push(std::move(y), std::move(ids), std::move(bw), "concat")};
}

// ---------------------------------------------------------------------------
// elementwise / reductions

template <typename S>
Var TapeT<S>::add(Var av, Var bv) {
  const TensorT<S>& a = value(av);
  const TensorT<S>& b = value(bv);
  if (!same_shape(a, b)) throw std::invalid_argument("add: shape mismatch");
  TensorT<S> y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.data[i];
  int aid = av.id, bid = bv.id;
  auto bw = [aid, bid](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) t.add_grad(aid, gy);
    if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) t.add_grad(bid, gy);
  };
  return Var{push(std::move(y), {av.id, bv.id}, std::move(bw), "add")};
}

template <typename S>
Var TapeT<S>::sub(Var av, Var bv) {
  const TensorT<S>& a = value(av);
  const TensorT<S>& b = value(bv);
  if (!same_shape(a, b)) throw std::invalid_argument("sub: shape mismatch");
  TensorT<S> y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] -= b.data[i];
  int aid = av.id, bid = bv.id;
  auto bw = [aid, bid](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) t.add_grad(aid, gy);
    if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
      TensorT<S>& gb = t.grad_slot(bid);
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= gy.data[i];
    }
  };
  return Var{push(std::move(y), {av.id, bv.id}, std::move(bw), "sub")};
}

template <typename S>
Var TapeT<S>::hadamard(Var av, Var bv) {
  const TensorT<S>& a = value(av);
  const TensorT<S>& b = value(bv);
  if (!same_shape(a, b)) throw std::invalid_argument("hadamard: shape mismatch");
  TensorT<S> y = a;
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] *= b.data[i];
  int aid = av.id, bid = bv.id;
  auto bw = [aid, bid](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& a = t.nodes_[static_cast<std::size_t>(aid)].value;
    const TensorT<S>& b = t.nodes_[static_cast<std::size_t>(bid)].value;
    if (t.nodes_[static_cast<std::size_t>(aid)].needs_grad) {
      TensorT<S>& ga = t.grad_slot(aid);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += gy.data[i] * b.data[i];
    }
    if (t.nodes_[static_cast<std::size_t>(bid)].needs_grad) {
      TensorT<S>& gb = t.grad_slot(bid);
      for (std::size_t i = 0; i < gb.data.size(); ++i)
        gb.data[i] += gy.data[i] * a.data[i];
    }
  };
  return Var{push(std::move(y), {av.id, bv.id}, std::move(bw), "hadamard")};
}

template <typename S>
Var TapeT<S>::affine(Var xv, S mul, S bias) {
  TensorT<S> y = value(xv);
  for (auto& v : y.data) v = mul * v + bias;
  int xid = xv.id;
  auto bw = [xid, mul](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += mul * gy.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "affine")};
}

template <typename S>
Var TapeT<S>::scale_by(Var xv, Var sv) {
  const TensorT<S>& x = value(xv);
  if (value(sv).numel() != 1)
    throw std::invalid_argument("scale_by: scale must be a 1-element tensor");
  S s = value(sv).data[0];
  TensorT<S> y = x;
  for (auto& v : y.data) v *= s;
  int xid = xv.id, sid = sv.id;
  auto bw = [xid, sid](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    S s = t.nodes_[static_cast<std::size_t>(sid)].value.data[0];
    if (t.nodes_[static_cast<std::size_t>(xid)].needs_grad) {
      TensorT<S>& gx = t.grad_slot(xid);
      for (std::size_t i = 0; i < gx.data.size(); ++i)
        gx.data[i] += s * gy.data[i];
    }
    if (t.nodes_[static_cast<std::size_t>(sid)].needs_grad) {
      double acc = 0;
      for (std::size_t i = 0; i < x.data.size(); ++i)
        acc += static_cast<double>(gy.data[i]) * x.data[i];
      t.grad_slot(sid).data[0] += static_cast<S>(acc);
    }
  };
  return Var{push(std::move(y), {xv.id, sv.id}, std::move(bw), "scale_by")};
}

template <typename S>
Var TapeT<S>::clamp_min(Var xv, S lo) {
  const TensorT<S>& x = value(xv);
  TensorT<S> y = x;
  for (auto& v : y.data) v = std::max(v, lo);
  int xid = xv.id;
  auto bw = [xid, lo](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      if (x.data[i] > lo) gx.data[i] += gy.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "clamp_min")};
}

template <typename S>
Var TapeT<S>::log(Var xv) {
  const TensorT<S>& x = value(xv);
  TensorT<S> y = x;
  for (auto& v : y.data) v = std::log(v);
  int xid = xv.id;
  auto bw = [xid](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    const TensorT<S>& x = t.nodes_[static_cast<std::size_t>(xid)].value;
    TensorT<S>& gx = t.grad_slot(xid);
    for (std::size_t i = 0; i < gx.data.size(); ++i)
      gx.data[i] += gy.data[i] / x.data[i];
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "log")};
}

template <typename S>
Var TapeT<S>::mean_all(Var xv) {
  const TensorT<S>& x = value(xv);
  double acc = 0;
  for (S v : x.data) acc += v;
  std::int64_t n = x.numel();
  TensorT<S> y = TensorT<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  int xid = xv.id;
  auto bw = [xid, n](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    S g = t.nodes_[static_cast<std::size_t>(self)].grad.data[0] /
          static_cast<S>(n);
    TensorT<S>& gx = t.grad_slot(xid);
    for (auto& v : gx.data) v += g;
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "mean_all")};
}

template <typename S>
Var TapeT<S>::sum_all(Var xv) {
  const TensorT<S>& x = value(xv);
  double acc = 0;
  for (S v : x.data) acc += v;
  TensorT<S> y = TensorT<S>::scalar(static_cast<S>(acc));
  int xid = xv.id;
  auto bw = [xid](TapeT& t, int self) {
    if (!t.nodes_[static_cast<std::size_t>(xid)].needs_grad) return;
    S g = t.nodes_[static_cast<std::size_t>(self)].grad.data[0];
    TensorT<S>& gx = t.grad_slot(xid);
    for (auto& v : gx.data) v += g;
  };
  return Var{push(std::move(y), {xv.id}, std::move(bw), "sum_all")};
}

template <typename S>
Var TapeT<S>::lincomb(const std::vector<Var>& xs, const std::vector<S>& coeffs) {
  if (xs.empty() || xs.size() != coeffs.size())
    throw std::invalid_argument("lincomb: inputs and coefficients must pair up");
  const TensorT<S>& first = value(xs[0]);
  TensorT<S> y = TensorT<S>::zeros(first.shape);
  std::vector<int> ids;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const TensorT<S>& t = value(xs[i]);
    if (!same_shape(t, first)) throw std::invalid_argument("lincomb: shape mismatch");
    for (std::size_t k = 0; k < y.data.size(); ++k)
      y.data[k] += coeffs[i] * t.data[k];
    ids.push_back(xs[i].id);
  }
  auto bw = [ids, coeffs](TapeT& t, int self) {
    const TensorT<S>& gy = t.nodes_[static_cast<std::size_t>(self)].grad;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.nodes_[static_cast<std::size_t>(ids[i])].needs_grad) continue;
      TensorT<S>& gx = t.grad_slot(ids[i]);
      for (std::size_t k = 0; k < gx.data.size(); ++k)
        gx.data[k] += coeffs[i] * gy.data[k];
    }
  };
  return Var{push(std::move(y), std::move(ids), std::move(bw), "lincomb")};
}

template class TapeT<float>;
template class TapeT<double>;

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Var(TapeT<double>&)>& build_loss,
                           const std::vector<ParameterT<double>*>& params,
                           double eps, int max_checks_per_param, Rng& rng) {
  for (auto* p : params) p->zero_grad();
  {
    TapeT<double> tape;
    Var loss = build_loss(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    TapeT<double> tape;
    Var loss = build_loss(tape);
    return tape.scalar_value(loss);
  };

  GradCheckResult result;
  for (auto* p : params) {
    std::int64_t n = p->value.numel();
    std::vector<std::int64_t> picks;
    if (n <= max_checks_per_param) {
      for (std::int64_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
      for (int i = 0; i < max_checks_per_param; ++i)
        picks.push_back(static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(n))));
    }
    for (std::int64_t idx : picks) {
      double saved = p->value.data[static_cast<std::size_t>(idx)];
      p->value.data[static_cast<std::size_t>(idx)] = saved + eps;
      double fp = eval();
      p->value.data[static_cast<std::size_t>(idx)] = saved - eps;
      double fm = eval();
      p->value.data[static_cast<std::size_t>(idx)] = saved;
      double numeric = (fp - fm) / (2 * eps);
      double analytic = p->grad.data[static_cast<std::size_t>(idx)];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      double rel = std::abs(analytic - numeric) / denom;
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace rgm::ad
