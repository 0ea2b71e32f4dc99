#include "rgm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace rgm {

using ad::ParameterT;
using ad::TapeT;
using ad::TensorT;
using ad::Var;

void RGMConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0)
    throw std::invalid_argument("rgm config: image_size must be a positive multiple of 16");
  if (base_channels < 4 || base_channels % 4 != 0)
    throw std::invalid_argument("rgm config: base_channels must be a multiple of 4");
  if (T < 1) throw std::invalid_argument("rgm config: T >= 1");
  if (n_residual_blocks < 1) throw std::invalid_argument("rgm config: need residual blocks");
  if (z_channels < 1) throw std::invalid_argument("rgm config: z_channels >= 1");
}

template <typename S>
ParameterT<S>& RGMParamsT<S>::at(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params[static_cast<std::size_t>(it->second)];
}

template <typename S>
const ParameterT<S>& RGMParamsT<S>::at(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw std::invalid_argument("unknown parameter: " + name);
  return params[static_cast<std::size_t>(it->second)];
}

template <typename S>
std::vector<ParameterT<S>*> RGMParamsT<S>::group(const std::string& prefix,
                                                 bool trainable_only) {
  std::vector<ParameterT<S>*> out;
  for (auto& p : params) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    if (trainable_only && !p.trainable) continue;
    out.push_back(&p);
  }
  return out;
}

template <typename S>
void RGMParamsT<S>::zero_grad(const std::string& prefix) {
  for (auto& p : params)
    if (p.name.rfind(prefix, 0) == 0) p.zero_grad();
}

template struct RGMParamsT<float>;
template struct RGMParamsT<double>;

namespace {

struct ParamInit {
  RGMParams* P;
  Rng* rng;

  void conv_he(const std::string& name, int co, int ci, int kh, int kw) {
    float std = std::sqrt(2.0f / static_cast<float>(ci * kh * kw));
    add_gaussian(name, {co, ci, kh, kw}, std);
  }
  void conv_xavier(const std::string& name, int co, int ci, int kh, int kw) {
    float std = std::sqrt(2.0f / static_cast<float>(ci * kh * kw + co * kh * kw));
    add_gaussian(name, {co, ci, kh, kw}, std);
  }
  // transposed conv weight layout is (Ci, Co, kh, kw)
  void tconv_he(const std::string& name, int ci, int co, int kh, int kw) {
    float std = std::sqrt(2.0f / static_cast<float>(ci * kh * kw));
    add_gaussian(name, {ci, co, kh, kw}, std);
  }
  void bias(const std::string& name, int n) {
    P->params.push_back(ad::Parameter::make(name, ad::Tensor::zeros({n})));
    reindex();
  }
  void scalar_zero(const std::string& name) {
    P->params.push_back(ad::Parameter::make(name, ad::Tensor::zeros({1})));
    reindex();
  }
  void bn(const std::string& prefix, int c) {
    P->params.push_back(ad::Parameter::make(prefix + ".gamma", ad::Tensor::full({c}, 1.0f)));
    P->params.push_back(ad::Parameter::make(prefix + ".beta", ad::Tensor::zeros({c})));
    P->params.push_back(ad::Parameter::make(prefix + ".rm", ad::Tensor::zeros({c}), false));
    P->params.push_back(ad::Parameter::make(prefix + ".rv", ad::Tensor::full({c}, 1.0f), false));
    reindex();
  }
  void add_gaussian(const std::string& name, std::vector<int> shape, float std) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng->normal()) * std;
    P->params.push_back(ad::Parameter::make(name, std::move(t)));
    reindex();
  }
  void reindex() {
    P->index[P->params.back().name] = static_cast<int>(P->params.size()) - 1;
  }

  void attention(const std::string& prefix, int c) {
    int cq = std::max(1, c / 8);
    conv_xavier(prefix + ".q.w", cq, c, 1, 1);
    conv_xavier(prefix + ".k.w", cq, c, 1, 1);
    conv_xavier(prefix + ".v.w", c, c, 1, 1);
    scalar_zero(prefix + ".gamma");
  }

  void discriminator(const std::string& d, const RGMConfig& cfg) {
    int q4 = cfg.base_channels / 4;
    int b = cfg.base_channels;
    int bs = cfg.bottleneck_spatial();
    conv_he(d + ".h.conv.w", q4, 3, 3, 3);
    bn(d + ".h.bn", q4);
    attention(d + ".h.sa", q4);
    conv_he(d + ".c.conv.w", q4, 3, 3, 3);
    bn(d + ".c.bn", q4);
    attention(d + ".c.sa", q4);
    conv_he(d + ".s2.conv.w", b, 2 * q4, 3, 3);
    bn(d + ".s2.bn", b);
    conv_he(d + ".s3.conv.w", 2 * b, b, 3, 3);
    bn(d + ".s3.bn", 2 * b);
    attention(d + ".sa3", 2 * b);
    conv_he(d + ".s4.conv.w", 2 * b, 2 * b, 3, 3);
    bn(d + ".s4.bn", 2 * b);
    conv_xavier(d + ".head.w", 1, 2 * b, bs, bs);
    bias(d + ".head.b", 1);
  }
};

}  // namespace

RGMParams init_rgm_params(const RGMConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RGMParams P;
  P.config = cfg;
  Rng rng(derive_seed(seed, 0x1a17));
  ParamInit ini{&P, &rng};

  int b = cfg.base_channels;
  int q4 = b / 4;

  ini.conv_xavier("g.zproj.w", cfg.z_channels, 3, 1, 1);
  ini.bias("g.zproj.b", cfg.z_channels);
  ini.conv_he("g.enc_m.conv.w", q4, 3, 3, 3);
  ini.bn("g.enc_m.bn", q4);
  ini.conv_he("g.enc_q.conv.w", q4, 3, 3, 3);
  ini.bn("g.enc_q.bn", q4);
  ini.conv_he("g.enc_z.conv.w", q4, cfg.z_channels, 3, 3);
  ini.bn("g.enc_z.bn", q4);
  ini.conv_he("g.enc1.conv.w", b / 2, 3 * q4, 3, 3);
  ini.bn("g.enc1.bn", b / 2);
  ini.conv_he("g.enc2.conv.w", b, b / 2, 3, 3);
  ini.bn("g.enc2.bn", b);
  ini.conv_he("g.enc3.conv.w", b, b, 3, 3);
  ini.bn("g.enc3.bn", b);

  for (const char* gru : {"g.gru1", "g.gru2"}) {
    std::string g(gru);
    ini.conv_xavier(g + ".u.w", b, 2 * b, 3, 3);
    ini.bias(g + ".u.b", b);
    ini.conv_xavier(g + ".r.w", b, 2 * b, 3, 3);
    ini.bias(g + ".r.b", b);
    ini.conv_he(g + ".cand.w", b, 2 * b, 3, 3);
    ini.bn(g + ".cand.bn", b);
    if (g == "g.gru1") {
      for (int i = 0; i < cfg.n_residual_blocks; ++i) {
        std::string r = "g.res" + std::to_string(i);
        ini.conv_he(r + ".c1.w", b, b, 3, 3);
        ini.bn(r + ".c1.bn", b);
        ini.conv_he(r + ".c2.w", b, b, 3, 3);
        ini.bn(r + ".c2.bn", b);
      }
    }
  }

  if (cfg.nearest_upsample) {
    ini.conv_he("g.dec1.conv.w", b / 2, b, 3, 3);
    ini.bn("g.dec1.bn", b / 2);
    ini.conv_he("g.dec2.conv.w", q4, b / 2, 3, 3);
    ini.bn("g.dec2.bn", q4);
  } else {
    ini.tconv_he("g.dec1.tconv.w", b, b / 2, 2, 2);
    ini.bn("g.dec1.bn", b / 2);
    ini.tconv_he("g.dec2.tconv.w", b / 2, q4, 2, 2);
    ini.bn("g.dec2.bn", q4);
  }
  ini.conv_xavier("g.out.w", 3, q4, 3, 3);
  ini.bias("g.out.b", 3);

  ini.discriminator("d1", cfg);
  ini.discriminator("d2", cfg);
  return P;
}

RGMParamsT<double> to_double(const RGMParams& p) {
  RGMParamsT<double> out;
  out.config = p.config;
  out.index = p.index;
  out.params.reserve(p.params.size());
  for (const auto& q : p.params) {
    ParameterT<double> d;
    d.name = q.name;
    d.value = ad::cast_tensor<double>(q.value);
    d.grad = ad::cast_tensor<double>(q.grad);
    d.m1 = ad::cast_tensor<double>(q.m1);
    d.m2 = ad::cast_tensor<double>(q.m2);
    d.trainable = q.trainable;
    out.params.push_back(std::move(d));
  }
  return out;
}

namespace {

// Caches one tape leaf per parameter so the T recurrent passes share
// weights (and their gradients accumulate on a single node).
template <typename S>
struct Binder {
  TapeT<S>* tape;
  RGMParamsT<S>* P;
  std::unordered_map<std::string, Var> cache;

  Var operator()(const std::string& name) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    Var v = tape->param(P->at(name));
    cache.emplace(name, v);
    return v;
  }
};

template <typename S>
Var cbr(Binder<S>& bind, const std::string& prefix, Var x, int stride,
        int pad, RunMode mode, const char* conv_key = ".conv.w") {
  TapeT<S>& t = *bind.tape;
  Var y = t.conv2d(x, bind(prefix + conv_key), Var{}, stride, pad);
  auto& rm = bind.P->at(prefix + ".bn.rm").value;
  auto& rv = bind.P->at(prefix + ".bn.rv").value;
  y = t.batchnorm2d(y, bind(prefix + ".bn.gamma"), bind(prefix + ".bn.beta"),
                    &rm, &rv, mode.training, mode.update_running);
  return t.relu(y);
}

template <typename S>
Var cblr(Binder<S>& bind, const std::string& prefix, Var x, int stride,
         int pad, RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var y = t.conv2d(x, bind(prefix + ".conv.w"), Var{}, stride, pad);
  auto& rm = bind.P->at(prefix + ".bn.rm").value;
  auto& rv = bind.P->at(prefix + ".bn.rv").value;
  y = t.batchnorm2d(y, bind(prefix + ".bn.gamma"), bind(prefix + ".bn.beta"),
                    &rm, &rv, mode.training, mode.update_running);
  return t.leaky_relu(y, S(0.2));
}

template <typename S>
Var attention_block(Binder<S>& bind, const std::string& prefix, Var x) {
  TapeT<S>& t = *bind.tape;
  const auto& xs = t.value(x).shape;
  int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
  int hw = H * W;
  Var q = t.reshape(t.conv2d(x, bind(prefix + ".q.w"), Var{}, 1, 0),
                    {N, std::max(1, C / 8), hw});
  Var k = t.reshape(t.conv2d(x, bind(prefix + ".k.w"), Var{}, 1, 0), {N, std::max(1, C / 8), hw});
  Var v = t.reshape(t.conv2d(x, bind(prefix + ".v.w"), Var{}, 1, 0), {N, C, hw});
  Var scores = t.matmul(t.transpose_last2(q), k);     // (N, hw, hw)
  Var attn = t.softmax_lastdim(scores);               // rows sum to 1
  Var out = t.matmul(v, t.transpose_last2(attn));     // (N, C, hw)
  out = t.reshape(out, {N, C, H, W});
  return t.add(x, t.scale_by(out, bind(prefix + ".gamma")));
}

template <typename S>
Var encoder_impl(Binder<S>& bind, Var m, Var q, Var z, RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var em = cbr(bind, "g.enc_m", m, 1, 1, mode);
  Var eq = cbr(bind, "g.enc_q", q, 1, 1, mode);
  Var ez = cbr(bind, "g.enc_z", z, 1, 1, mode);
  Var cat = t.concat({em, eq, ez}, 1);
  Var e1 = cbr(bind, "g.enc1", cat, 2, 1, mode);
  Var e2 = cbr(bind, "g.enc2", e1, 2, 1, mode);
  return cbr(bind, "g.enc3", e2, 1, 1, mode);
}

template <typename S>
Var gru_impl(Binder<S>& bind, const std::string& g, Var h_prev, Var x,
             RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var hx = t.concat({h_prev, x}, 1);
  Var u = t.sigmoid(t.conv2d(hx, bind(g + ".u.w"), bind(g + ".u.b"), 1, 1));
  Var r = t.sigmoid(t.conv2d(hx, bind(g + ".r.w"), bind(g + ".r.b"), 1, 1));
  Var rx = t.concat({t.hadamard(r, h_prev), x}, 1);
  Var cand = t.conv2d(rx, bind(g + ".cand.w"), Var{}, 1, 1);
  auto& rm = bind.P->at(g + ".cand.bn.rm").value;
  auto& rv = bind.P->at(g + ".cand.bn.rv").value;
  cand = t.batchnorm2d(cand, bind(g + ".cand.bn.gamma"), bind(g + ".cand.bn.beta"),
                       &rm, &rv, mode.training, mode.update_running);
  cand = t.relu(cand);
  Var keep = t.hadamard(t.affine(u, S(-1), S(1)), h_prev);
  return t.add(keep, t.hadamard(u, cand));
}

template <typename S>
Var residual_impl(Binder<S>& bind, Var x, RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var cur = x;
  for (int i = 0; i < bind.P->config.n_residual_blocks; ++i) {
    std::string r = "g.res" + std::to_string(i);
    Var h = cbr(bind, r + ".c1", cur, 1, 1, mode, ".w");
    h = cbr(bind, r + ".c2", h, 1, 1, mode, ".w");
    cur = t.add(cur, h);
  }
  return cur;
}

template <typename S>
Var decoder_impl(Binder<S>& bind, Var x, RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var d = x;
  if (bind.P->config.nearest_upsample) {
    d = cbr(bind, "g.dec1", t.upsample_nearest2(d), 1, 1, mode);
    d = cbr(bind, "g.dec2", t.upsample_nearest2(d), 1, 1, mode);
  } else {
    for (const char* stage : {"g.dec1", "g.dec2"}) {
      std::string sname(stage);
      d = t.conv_transpose2d(d, bind(sname + ".tconv.w"), Var{}, 2);
      auto& rm = bind.P->at(sname + ".bn.rm").value;
      auto& rv = bind.P->at(sname + ".bn.rv").value;
      d = t.batchnorm2d(d, bind(sname + ".bn.gamma"), bind(sname + ".bn.beta"),
                        &rm, &rv, mode.training, mode.update_running);
      d = t.relu(d);
    }
  }
  return t.sigmoid(t.conv2d(d, bind("g.out.w"), bind("g.out.b"), 1, 1));
}

template <typename S>
Var horizontal_impl(Binder<S>& bind, Var m, Var q, Var z, GenState& state,
                    RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var enc = encoder_impl(bind, m, q, z, mode);
  if (!state.gru1_hidden.valid()) {
    auto zshape = t.value(enc).shape;
    state.gru1_hidden = t.leaf(TensorT<S>::zeros(zshape));
    state.gru2_hidden = t.leaf(TensorT<S>::zeros(zshape));
  }
  Var g1 = gru_impl(bind, "g.gru1", state.gru1_hidden, enc, mode);
  Var res = residual_impl(bind, g1, mode);
  Var g2 = gru_impl(bind, "g.gru2", state.gru2_hidden, res, mode);
  Var h = decoder_impl(bind, g2, mode);
  state.gru1_hidden = g1;
  state.gru2_hidden = g2;
  state.last_output = h;
  return h;
}

}  // namespace

template <typename S>
Var encoder_forward(TapeT<S>& tape, RGMParamsT<S>& P, Var m, Var q, Var z,
                    RunMode mode) {
  Binder<S> bind{&tape, &P};
  return encoder_impl(bind, m, q, z, mode);
}

template <typename S>
Var conv_gru_step(TapeT<S>& tape, RGMParamsT<S>& P, const std::string& prefix,
                  Var h_prev, Var x, RunMode mode) {
  Binder<S> bind{&tape, &P};
  return gru_impl(bind, prefix, h_prev, x, mode);
}

template <typename S>
Var residual_stack(TapeT<S>& tape, RGMParamsT<S>& P, Var x, RunMode mode) {
  Binder<S> bind{&tape, &P};
  return residual_impl(bind, x, mode);
}

template <typename S>
Var self_attention(TapeT<S>& tape, RGMParamsT<S>& P, const std::string& prefix,
                   Var x) {
  Binder<S> bind{&tape, &P};
  return attention_block(bind, prefix, x);
}

template <typename S>
Var generator_horizontal(TapeT<S>& tape, RGMParamsT<S>& P, Var m, Var q, Var z,
                         GenState& state, RunMode mode) {
  Binder<S> bind{&tape, &P};
  return horizontal_impl(bind, m, q, z, state, mode);
}

template <typename S>
std::vector<Var> generator_forward(TapeT<S>& tape, RGMParamsT<S>& P, Var m,
                                   Var q, Var z0, int T, RunMode mode,
                                   GenCaptureT<S>* capture) {
  if (T < 1) throw std::invalid_argument("generator_forward: T >= 1");
  Binder<S> bind{&tape, &P};
  GenState state;
  std::vector<Var> outputs;
  Var prev;
  for (int i = 1; i <= T; ++i) {
    Var z_raw = (i == 1) ? z0 : prev;
    if (capture) capture->z_inputs.push_back(tape.value(z_raw));
    Var z = (i == 1)
                ? z0
                : tape.conv2d(prev, bind("g.zproj.w"), bind("g.zproj.b"), 1, 0);
    Var h = horizontal_impl(bind, m, q, z, state, mode);
    if (capture) capture->outputs.push_back(tape.value(h));
    outputs.push_back(h);
    prev = h;
  }
  return outputs;
}

namespace {

template <typename S>
Var discriminator_impl(Binder<S>& bind, const std::string& d, Var x, Var cond,
                       RunMode mode) {
  TapeT<S>& t = *bind.tape;
  Var bh = cblr(bind, d + ".h", x, 2, 1, mode);
  bh = attention_block(bind, d + ".h.sa", bh);
  Var bc = cblr(bind, d + ".c", cond, 2, 1, mode);
  bc = attention_block(bind, d + ".c.sa", bc);
  Var cat = t.concat({bh, bc}, 1);
  Var s2 = cblr(bind, d + ".s2", cat, 2, 1, mode);
  Var s3 = cblr(bind, d + ".s3", s2, 2, 1, mode);
  s3 = attention_block(bind, d + ".sa3", s3);
  Var s4 = cblr(bind, d + ".s4", s3, 2, 1, mode);
  Var score = t.conv2d(s4, bind(d + ".head.w"), bind(d + ".head.b"), 1, 0);
  return t.sigmoid(score);
}

}  // namespace

template <typename S>
Var d1_forward(TapeT<S>& tape, RGMParamsT<S>& P, Var h, Var m, RunMode mode) {
  Binder<S> bind{&tape, &P};
  return discriminator_impl(bind, "d1", h, m, mode);
}

template <typename S>
Var d2_forward(TapeT<S>& tape, RGMParamsT<S>& P, Var h, Var q, RunMode mode) {
  Binder<S> bind{&tape, &P};
  return discriminator_impl(bind, "d2", h, q, mode);
}

#define RGM_INSTANTIATE(S)                                                     \
  template Var encoder_forward<S>(TapeT<S>&, RGMParamsT<S>&, Var, Var, Var,    \
                                  RunMode);                                    \
  template Var conv_gru_step<S>(TapeT<S>&, RGMParamsT<S>&, const std::string&, \
                                Var, Var, RunMode);                            \
  template Var residual_stack<S>(TapeT<S>&, RGMParamsT<S>&, Var, RunMode);     \
  template Var self_attention<S>(TapeT<S>&, RGMParamsT<S>&,                    \
                                 const std::string&, Var);                     \
  template Var generator_horizontal<S>(TapeT<S>&, RGMParamsT<S>&, Var, Var,    \
                                       Var, GenState&, RunMode);               \
  template std::vector<Var> generator_forward<S>(TapeT<S>&, RGMParamsT<S>&,    \
                                                 Var, Var, Var, int, RunMode,  \
                                                 GenCaptureT<S>*);             \
  template Var d1_forward<S>(TapeT<S>&, RGMParamsT<S>&, Var, Var, RunMode);    \
  template Var d2_forward<S>(TapeT<S>&, RGMParamsT<S>&, Var, Var, RunMode);

RGM_INSTANTIATE(float)
RGM_INSTANTIATE(double)
#undef RGM_INSTANTIATE

}  // namespace rgm
