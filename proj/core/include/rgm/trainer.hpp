#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rgm/dataset.hpp"
#include "rgm/model.hpp"

namespace rgm {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int epochs = 10;
  float label_real = 0.9f;  // one-sided smoothing, D losses only
  float label_fake = 0.0f;
  float clip_bound = 0.05f;
  int T = 4;  // echo of the model recurrence length
  std::uint64_t seed = 1;
};

struct LossReport {
  int step = 0;
  double l_g = 0;
  double l_d1 = 0;
  double l_d2 = 0;
  double mean_real_score = 0;
  double mean_fake_score = 0;
  // batch-mean (D1(h_i), D2(h_i)) for i = 1..T, on the post-update critics
  std::vector<std::pair<double, double>> per_pass_scores;
};

struct TrainSample {
  ad::Tensor m;
  ad::Tensor q;
  ad::Tensor gt;
};

// (C,H,W) floats in [0,1] from an interleaved byte image, and back.
ad::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const ad::Tensor& t);

// Loads train-size triplets; images are resized if they do not already
// match image_size.
std::vector<TrainSample> load_training_set(const DatasetManifest& manifest,
                                           int image_size);

// Weighted per-pass objective: pass i carries (i-1)^2/T^2, so pass 1
// contributes nothing and later refinements dominate. Minimized by G.
ad::Var loss_generator(ad::Tape& tape, const std::vector<ad::Var>& d1_scores,
                       const std::vector<ad::Var>& d2_scores, int T);

// Negated critic objective in BCE form: the real term targets label_real,
// the T fake terms target 0 and are weighted uniformly 1/T.
ad::Var loss_discriminator(ad::Tape& tape, ad::Var real_scores,
                           const std::vector<ad::Var>& fake_scores, int T,
                           float label_real);

struct AdamState {
  long t_g = 0;
  long t_d1 = 0;
  long t_d2 = 0;
};

// Bias-corrected adaptive-moment update over one parameter group.
void adam_step(RGMParams& P, const std::string& prefix, const TrainConfig& cfg,
               long t);

// Clamp every trainable discriminator weight into [-bound, bound].
void clip_weights(RGMParams& P, float bound);
float max_abs_weight(RGMParams& P, const std::string& prefix);

using ReportSink = std::function<void(const LossReport&)>;

// One pass over the data. All in-epoch randomness (shuffle, noise) derives
// from (seed, epoch), which is what makes checkpoint resume bit-exact.
int train_epoch(RGMParams& P, const std::vector<TrainSample>& data,
                const TrainConfig& cfg, int epoch, AdamState& opt,
                int step_base, const ReportSink& sink);

void train(RGMParams& P, const std::vector<TrainSample>& data,
           const TrainConfig& cfg, int start_epoch, AdamState& opt,
           const ReportSink& sink);

struct Checkpoint {
  RGMParams params;
  AdamState opt;
  int epoch = 0;  // epochs completed
  std::uint64_t rng_state = 0;
  TrainConfig train_config;
};

void save_checkpoint(const std::string& path, const RGMParams& P,
                     const AdamState& opt, int epoch, std::uint64_t rng_state,
                     const TrainConfig& cfg);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace rgm
