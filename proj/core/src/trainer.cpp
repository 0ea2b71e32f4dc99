#include "rgm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace rgm {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {
constexpr float kLogFloor = 1e-8f;
}

ad::Tensor image_to_tensor(const Image& img) {
  Tensor t = Tensor::zeros({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.data[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] =
            static_cast<float>(img.at(x, y, c)) / 255.0f;
  return t;
}

Image tensor_to_image(const ad::Tensor& t) {
  if (t.ndim() != 3) throw std::invalid_argument("tensor_to_image: need (C,H,W)");
  int C = t.dim(0), H = t.dim(1), W = t.dim(2);
  Image img(W, H, C);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        float v = t.data[(static_cast<std::size_t>(c) * H + y) * W + x];
        img.at(x, y, c) = static_cast<std::uint8_t>(
            std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
  return img;
}

std::vector<TrainSample> load_training_set(const DatasetManifest& manifest,
                                           int image_size) {
  std::vector<TrainSample> out;
  out.reserve(manifest.records.size());
  auto prep = [&](const std::string& path) {
    Image img = load_image(path);
    if (img.channels == 1) {
      Image rgb(img.width, img.height, 3);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
          rgb.set_rgb(x, y, img.at(x, y, 0), img.at(x, y, 0), img.at(x, y, 0));
      img = std::move(rgb);
    }
    if (img.width != image_size || img.height != image_size)
      img = resize_bilinear(img, image_size, image_size);
    return image_to_tensor(img);
  };
  for (const auto& r : manifest.records)
    out.push_back({prep(r.map_path), prep(r.state_path), prep(r.gt_path)});
  return out;
}

namespace {

// mean over the tensor of -[t*log(s) + (1-t)*log(1-s)], logs floored
Var bce(Tape& tape, Var scores, float target) {
  Var log_s = tape.log(tape.clamp_min(scores, kLogFloor));
  Var log_1s = tape.log(tape.clamp_min(tape.affine(scores, -1.0f, 1.0f), kLogFloor));
  return tape.lincomb({tape.mean_all(log_s), tape.mean_all(log_1s)},
                      {-target, -(1.0f - target)});
}

}  // namespace

Var loss_generator(Tape& tape, const std::vector<Var>& d1_scores,
                   const std::vector<Var>& d2_scores, int T) {
  if (static_cast<int>(d1_scores.size()) != T ||
      static_cast<int>(d2_scores.size()) != T)
    throw std::invalid_argument("loss_generator: need T score pairs");
  std::vector<Var> terms;
  std::vector<float> coeffs;
  for (int i = 1; i <= T; ++i) {
    float w = static_cast<float>(i - 1) * static_cast<float>(i - 1) /
              (static_cast<float>(T) * static_cast<float>(T));
    for (Var s : {d1_scores[static_cast<std::size_t>(i - 1)],
                  d2_scores[static_cast<std::size_t>(i - 1)]}) {
      Var log_1s = tape.log(tape.clamp_min(tape.affine(s, -1.0f, 1.0f), kLogFloor));
      terms.push_back(tape.mean_all(log_1s));
      coeffs.push_back(w);
    }
  }
  return tape.lincomb(terms, coeffs);
}

Var loss_discriminator(Tape& tape, Var real_scores,
                       const std::vector<Var>& fake_scores, int T,
                       float label_real) {
  if (static_cast<int>(fake_scores.size()) != T)
    throw std::invalid_argument("loss_discriminator: need T fake scores");
  std::vector<Var> terms{bce(tape, real_scores, label_real)};
  std::vector<float> coeffs{1.0f};
  for (Var s : fake_scores) {
    terms.push_back(bce(tape, s, 0.0f));
    coeffs.push_back(1.0f / static_cast<float>(T));
  }
  return tape.lincomb(terms, coeffs);
}

void adam_step(RGMParams& P, const std::string& prefix, const TrainConfig& cfg,
               long t) {
  if (t < 1) throw std::invalid_argument("adam_step: t >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto* p : P.group(prefix, true)) {
    for (std::size_t i = 0; i < p->value.data.size(); ++i) {
      double g = p->grad.data[i];
      double m = cfg.beta1 * p->m1.data[i] + (1.0 - cfg.beta1) * g;
      double v = cfg.beta2 * p->m2.data[i] + (1.0 - cfg.beta2) * g * g;
      p->m1.data[i] = static_cast<float>(m);
      p->m2.data[i] = static_cast<float>(v);
      double update = cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
      p->value.data[i] = static_cast<float>(p->value.data[i] - update);
    }
  }
}

void clip_weights(RGMParams& P, float bound) {
  if (bound <= 0) throw std::invalid_argument("clip_weights: bound > 0");
  for (const char* d : {"d1.", "d2."}) {
    for (auto* p : P.group(d, true)) {
      for (auto& v : p->value.data) v = std::clamp(v, -bound, bound);
    }
  }
}

float max_abs_weight(RGMParams& P, const std::string& prefix) {
  float mx = 0;
  for (auto* p : P.group(prefix, true))
    for (float v : p->value.data) mx = std::max(mx, std::abs(v));
  return mx;
}

namespace {

Tensor stack_batch(const std::vector<TrainSample>& data,
                   const std::vector<int>& idx, std::size_t lo, std::size_t hi,
                   const Tensor TrainSample::*field) {
  const Tensor& first = data[static_cast<std::size_t>(idx[lo])].*field;
  int C = first.dim(0), H = first.dim(1), W = first.dim(2);
  int N = static_cast<int>(hi - lo);
  Tensor out = Tensor::zeros({N, C, H, W});
  std::size_t per = static_cast<std::size_t>(C) * H * W;
  for (std::size_t k = lo; k < hi; ++k) {
    const Tensor& t = data[static_cast<std::size_t>(idx[k])].*field;
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + (k - lo) * per);
  }
  return out;
}

double tensor_mean(const Tensor& t) {
  double acc = 0;
  for (float v : t.data) acc += v;
  return acc / static_cast<double>(t.numel());
}

}  // namespace

int train_epoch(RGMParams& P, const std::vector<TrainSample>& data,
                const TrainConfig& cfg, int epoch, AdamState& opt,
                int step_base, const ReportSink& sink) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  const int T = P.config.T;
  const int zc = P.config.z_channels;
  const int s = P.config.image_size;
  Rng rng(derive_seed(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));

  std::vector<int> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.uniform_index(i)]);

  int steps = 0;
  for (std::size_t lo = 0; lo < idx.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
    std::size_t hi = std::min(idx.size(), lo + static_cast<std::size_t>(cfg.batch_size));
    int N = static_cast<int>(hi - lo);

    Tensor mb = stack_batch(data, idx, lo, hi, &TrainSample::m);
    Tensor qb = stack_batch(data, idx, lo, hi, &TrainSample::q);
    Tensor gtb = stack_batch(data, idx, lo, hi, &TrainSample::gt);
    Tensor zb = Tensor::zeros({N, zc, s, s});
    for (auto& v : zb.data) v = static_cast<float>(rng.normal());

    // generator forward once; fakes reused (detached) by both critic steps
    Tape tape_g;
    Var m_g = tape_g.leaf(mb);
    Var q_g = tape_g.leaf(qb);
    Var z0 = tape_g.leaf(zb);
    std::vector<Var> hs = generator_forward(tape_g, P, m_g, q_g, z0, T, kTrainMode);
    std::vector<Tensor> h_vals;
    h_vals.reserve(hs.size());
    for (Var h : hs) h_vals.push_back(tape_g.value(h));

    LossReport report;
    report.step = step_base + steps;
    double real_acc = 0, fake_acc = 0;

    for (int which = 0; which < 2; ++which) {
      const bool is_d1 = (which == 0);
      const Tensor& cond = is_d1 ? mb : qb;
      Tape td;
      Var cond_v = td.leaf(cond);
      Var real = is_d1 ? d1_forward(td, P, td.leaf(gtb), cond_v, kTrainMode)
                       : d2_forward(td, P, td.leaf(gtb), cond_v, kTrainMode);
      std::vector<Var> fakes;
      for (const Tensor& hv : h_vals) {
        Var h_leaf = td.leaf(hv);
        fakes.push_back(is_d1
                            ? d1_forward(td, P, h_leaf, cond_v, kFrozenStatsMode)
                            : d2_forward(td, P, h_leaf, cond_v, kFrozenStatsMode));
      }
      Var loss = loss_discriminator(td, real, fakes, T, cfg.label_real);
      const std::string prefix = is_d1 ? "d1." : "d2.";
      P.zero_grad(prefix);
      td.backward(loss);
      long t = is_d1 ? ++opt.t_d1 : ++opt.t_d2;
      adam_step(P, prefix, cfg, t);
      clip_weights(P, cfg.clip_bound);

      (is_d1 ? report.l_d1 : report.l_d2) = td.scalar_value(loss);
      real_acc += tensor_mean(td.value(real));
      for (const Var f : fakes) fake_acc += tensor_mean(td.value(f));
    }
    report.mean_real_score = real_acc / 2.0;
    report.mean_fake_score = fake_acc / (2.0 * T);

    // generator step against the just-updated critics
    std::vector<Var> s1, s2;
    for (Var h : hs) s1.push_back(d1_forward(tape_g, P, h, m_g, kFrozenStatsMode));
    for (Var h : hs) s2.push_back(d2_forward(tape_g, P, h, q_g, kFrozenStatsMode));
    Var lg = loss_generator(tape_g, s1, s2, T);
    P.zero_grad("g.");
    P.zero_grad("d1.");
    P.zero_grad("d2.");
    tape_g.backward(lg);
    adam_step(P, "g.", cfg, ++opt.t_g);
    report.l_g = tape_g.scalar_value(lg);
    for (int i = 0; i < T; ++i)
      report.per_pass_scores.emplace_back(
          tensor_mean(tape_g.value(s1[static_cast<std::size_t>(i)])),
          tensor_mean(tape_g.value(s2[static_cast<std::size_t>(i)])));

    if (sink) sink(report);
    ++steps;
  }
  return steps;
}

void train(RGMParams& P, const std::vector<TrainSample>& data,
           const TrainConfig& cfg, int start_epoch, AdamState& opt,
           const ReportSink& sink) {
  int steps_per_epoch =
      static_cast<int>((data.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                       static_cast<std::size_t>(cfg.batch_size));
  for (int e = start_epoch; e < cfg.epochs; ++e)
    train_epoch(P, data, cfg, e, opt, e * steps_per_epoch, sink);
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw std::runtime_error("checkpoint: truncated");
  std::uint32_t v = static_cast<std::uint32_t>(in[pos]) |
                    (static_cast<std::uint32_t>(in[pos + 1]) << 8) |
                    (static_cast<std::uint32_t>(in[pos + 2]) << 16) |
                    (static_cast<std::uint32_t>(in[pos + 3]) << 24);
  pos += 4;
  return v;
}

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name,
                const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
  std::size_t base = out.size();
  out.resize(base + t.data.size() * 4);
  std::memcpy(out.data() + base, t.data.data(), t.data.size() * 4);
}

json config_json(const RGMConfig& c) {
  return json{{"image_size", c.image_size},
              {"base_channels", c.base_channels},
              {"T", c.T},
              {"n_residual_blocks", c.n_residual_blocks},
              {"z_channels", c.z_channels},
              {"nearest_upsample", c.nearest_upsample}};
}

RGMConfig config_from_json(const json& j) {
  RGMConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.T = j.at("T").get<int>();
  c.n_residual_blocks = j.at("n_residual_blocks").get<int>();
  c.z_channels = j.at("z_channels").get<int>();
  c.nearest_upsample = j.at("nearest_upsample").get<bool>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const RGMParams& P,
                     const AdamState& opt, int epoch, std::uint64_t rng_state,
                     const TrainConfig& cfg) {
  json header{{"config", config_json(P.config)},
              {"epoch", epoch},
              {"adam", {{"t_g", opt.t_g}, {"t_d1", opt.t_d1}, {"t_d2", opt.t_d2}}},
              {"rng_state", std::to_string(rng_state)},
              {"train",
               {{"lr", cfg.lr},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"adam_eps", cfg.adam_eps},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},
                {"label_real", cfg.label_real},
                {"label_fake", cfg.label_fake},
                {"clip_bound", cfg.clip_bound},
                {"T", cfg.T},
                {"seed", std::to_string(cfg.seed)}}}};
  std::string hdr = header.dump();

  std::vector<std::uint8_t> out;
  const char magic[4] = {'R', 'G', 'M', '1'};
  out.insert(out.end(), magic, magic + 4);
  put_u32(out, static_cast<std::uint32_t>(hdr.size()));
  out.insert(out.end(), hdr.begin(), hdr.end());

  std::uint32_t count = 0;
  for (const auto& p : P.params) count += p.trainable ? 3 : 1;
  put_u32(out, count);
  for (const auto& p : P.params) {
    put_tensor(out, p.name, p.value);
    if (p.trainable) {
      put_tensor(out, "opt.m1." + p.name, p.m1);
      put_tensor(out, "opt.m2." + p.name, p.m2);
    }
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::vector<std::uint8_t> in = read_file(path);
  if (in.size() < 8 || in[0] != 'R' || in[1] != 'G' || in[2] != 'M' || in[3] != '1')
    throw std::runtime_error("checkpoint: bad magic");
  std::size_t pos = 4;
  std::uint32_t hdr_len = get_u32(in, pos);
  if (pos + hdr_len > in.size()) throw std::runtime_error("checkpoint: truncated");
  json header = json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                            in.begin() + static_cast<std::ptrdiff_t>(pos + hdr_len));
  pos += hdr_len;

  Checkpoint ck;
  RGMConfig cfg = config_from_json(header.at("config"));
  ck.params = init_rgm_params(cfg, 0);
  ck.epoch = header.at("epoch").get<int>();
  ck.opt.t_g = header.at("adam").at("t_g").get<long>();
  ck.opt.t_d1 = header.at("adam").at("t_d1").get<long>();
  ck.opt.t_d2 = header.at("adam").at("t_d2").get<long>();
  ck.rng_state = std::stoull(header.at("rng_state").get<std::string>());
  const json& tr = header.at("train");
  ck.train_config.lr = tr.at("lr").get<double>();
  ck.train_config.beta1 = tr.at("beta1").get<double>();
  ck.train_config.beta2 = tr.at("beta2").get<double>();
  ck.train_config.adam_eps = tr.at("adam_eps").get<double>();
  ck.train_config.batch_size = tr.at("batch_size").get<int>();
  ck.train_config.epochs = tr.at("epochs").get<int>();
  ck.train_config.label_real = tr.at("label_real").get<float>();
  ck.train_config.label_fake = tr.at("label_fake").get<float>();
  ck.train_config.clip_bound = tr.at("clip_bound").get<float>();
  ck.train_config.T = tr.at("T").get<int>();
  ck.train_config.seed = std::stoull(tr.at("seed").get<std::string>());

  std::uint32_t count = get_u32(in, pos);
  std::uint32_t filled = 0;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t name_len = get_u32(in, pos);
    if (pos + name_len > in.size()) throw std::runtime_error("checkpoint: truncated");
    std::string name(in.begin() + static_cast<std::ptrdiff_t>(pos),
                     in.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
    pos += name_len;
    std::uint32_t ndim = get_u32(in, pos);
    std::vector<int> shape;
    for (std::uint32_t d = 0; d < ndim; ++d)
      shape.push_back(static_cast<int>(get_u32(in, pos)));

    Tensor* dst = nullptr;
    std::string base = name;
    if (base.rfind("opt.m1.", 0) == 0) {
      base = base.substr(7);
      if (!ck.params.has(base)) throw std::runtime_error("checkpoint: unknown tensor " + name);
      dst = &ck.params.at(base).m1;
    } else if (base.rfind("opt.m2.", 0) == 0) {
      base = base.substr(7);
      if (!ck.params.has(base)) throw std::runtime_error("checkpoint: unknown tensor " + name);
      dst = &ck.params.at(base).m2;
    } else {
      if (!ck.params.has(base)) throw std::runtime_error("checkpoint: unknown tensor " + name);
      dst = &ck.params.at(base).value;
    }
    if (dst->shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    std::size_t bytes = dst->data.size() * 4;
    if (pos + bytes > in.size()) throw std::runtime_error("checkpoint: truncated");
    std::memcpy(dst->data.data(), in.data() + pos, bytes);
    pos += bytes;
    ++filled;
  }
  std::uint32_t expected = 0;
  for (const auto& p : ck.params.params) expected += p.trainable ? 3 : 1;
  if (filled != expected)
    throw std::runtime_error("checkpoint: tensor table incomplete");
  return ck;
}

}  // namespace rgm
