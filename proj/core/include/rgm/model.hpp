#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "rgm/autodiff.hpp"

namespace rgm {

// Geometry: the encoder halves the image twice (output spatial size /4);
// the discriminators halve four times down to their bottleneck, so
// image_size must be divisible by 16. base_channels is the encoder output
// width (256 at full scale, 64 at desk scale).
struct RGMConfig {
  int image_size = 32;
  int base_channels = 64;
  int T = 4;
  int n_residual_blocks = 4;
  int z_channels = 1;
  bool nearest_upsample = false;  // decoder alternative to transposed conv

  void validate() const;
  int enc_spatial() const { return image_size / 4; }
  int bottleneck_spatial() const { return image_size / 16; }
  int bottleneck_channels() const { return 2 * base_channels; }
};

// Named weights for G, D1 and D2 in fixed registration order (the
// checkpoint layout). BatchNorm running stats ride along as non-trainable
// entries.
template <typename S>
struct RGMParamsT {
  RGMConfig config;
  std::vector<ad::ParameterT<S>> params;
  std::unordered_map<std::string, int> index;

  ad::ParameterT<S>& at(const std::string& name);
  const ad::ParameterT<S>& at(const std::string& name) const;
  bool has(const std::string& name) const { return index.count(name) > 0; }
  // e.g. group("d1.") -> all trainable D1 weights
  std::vector<ad::ParameterT<S>*> group(const std::string& prefix,
                                        bool trainable_only = true);
  void zero_grad(const std::string& prefix);
};

using RGMParams = RGMParamsT<float>;

RGMParams init_rgm_params(const RGMConfig& cfg, std::uint64_t seed);
RGMParamsT<double> to_double(const RGMParams& p);

// BatchNorm behavior per call site: gradient checks freeze running stats,
// inference uses them.
struct RunMode {
  bool training = true;
  bool update_running = true;
};
inline constexpr RunMode kTrainMode{true, true};
inline constexpr RunMode kFrozenStatsMode{true, false};
inline constexpr RunMode kEvalMode{false, false};

// Recurrent state carried across the T horizontal passes.
struct GenState {
  ad::Var gru1_hidden;
  ad::Var gru2_hidden;
  ad::Var last_output;
};

// Wiring instrumentation: raw z-pathway input and output of each pass.
template <typename S>
struct GenCaptureT {
  std::vector<ad::TensorT<S>> z_inputs;
  std::vector<ad::TensorT<S>> outputs;
};

template <typename S>
ad::Var encoder_forward(ad::TapeT<S>& tape, RGMParamsT<S>& P, ad::Var m,
                        ad::Var q, ad::Var z, RunMode mode);

template <typename S>
ad::Var conv_gru_step(ad::TapeT<S>& tape, RGMParamsT<S>& P,
                      const std::string& prefix, ad::Var h_prev, ad::Var x,
                      RunMode mode);

template <typename S>
ad::Var residual_stack(ad::TapeT<S>& tape, RGMParamsT<S>& P, ad::Var x,
                       RunMode mode);

template <typename S>
ad::Var self_attention(ad::TapeT<S>& tape, RGMParamsT<S>& P,
                       const std::string& prefix, ad::Var x);

// One horizontal pass: encoder -> GRU1 -> residual stack -> GRU2 -> decoder.
// z must have z_channels channels (callers route h_{i-1} through the 1x1
// projection first; generator_forward does this internally).
template <typename S>
ad::Var generator_horizontal(ad::TapeT<S>& tape, RGMParamsT<S>& P, ad::Var m,
                             ad::Var q, ad::Var z, GenState& state, RunMode mode);

// Full recurrence: pass 1 consumes z0, pass i >= 2 consumes h_{i-1}
// (projected 3 -> z_channels by a 1x1 conv). Returns h_1..h_T.
template <typename S>
std::vector<ad::Var> generator_forward(ad::TapeT<S>& tape, RGMParamsT<S>& P,
                                       ad::Var m, ad::Var q, ad::Var z0, int T,
                                       RunMode mode,
                                       GenCaptureT<S>* capture = nullptr);

// Safety critic: scores (N,1,1,1) in (0,1), conditioned on the map image.
template <typename S>
ad::Var d1_forward(ad::TapeT<S>& tape, RGMParamsT<S>& P, ad::Var h, ad::Var m,
                   RunMode mode);

// Connectivity critic: conditioned on the state image.
template <typename S>
ad::Var d2_forward(ad::TapeT<S>& tape, RGMParamsT<S>& P, ad::Var h, ad::Var q,
                   RunMode mode);

}  // namespace rgm
