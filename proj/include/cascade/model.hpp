#pragma once

#include <cstdint>
#include <random>

#include "cascade/autodiff.hpp"
#include "cascade/checkpoint.hpp"
#include "cascade/optim.hpp"

namespace cascade {

struct ModelGeometry {
  int channels = 8;   // C (even; hemisphere kernel spans C/2 rows)
  int samples = 128;  // T
  int filters = 16;   // F, filter count of every stream-encoder convolution
  double lrelu_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  void validate() const;
  int stream_width() const { return samples / 4; }  // after the (1,4)/(1,4) average pool
  int stream_feature_dim() const { return filters * stream_width(); }
};

// Time-to-frequency reconstruction head: a shape-preserving depthwise 1-D
// convolution encoder and a linear decoder shared across channels. The
// magnitude DFT is not a linear map of the input, so the decoder can only
// approximate the spectrum target; the reconstruction pressure on the
// encoder is the point, not an exact transform.
class TfrModule {
 public:
  TfrModule() = default;
  TfrModule(int channels, int samples, int kernel = 25);

  void init(std::mt19937_64& rng);
  VarPtr encode(const VarPtr& x) const;  // [N,C,T] -> [N,C,T]
  VarPtr decode(const VarPtr& r) const;  // [N,C,T] -> [N,C,T]

  void register_encoder(ParameterGroup& g, const std::string& prefix) const;
  void register_decoder(ParameterGroup& g, const std::string& prefix) const;

  VarPtr dw_weight, dw_bias;    // [C,K], [C]
  VarPtr dec_weight, dec_bias;  // [T,T], [T]
  int kernel() const { return kernel_; }

 private:
  int channels_ = 0, samples_ = 0, kernel_ = 25;
};

// Separable 2-D convolution stack over the [1,C,T] view of a sample:
// temporal/frequency conv, global + hemisphere spatial convs, fusion conv,
// LeakyReLU, average pooling. Output per sample is [F,1,T/4].
class StreamEncoder {
 public:
  StreamEncoder() = default;
  explicit StreamEncoder(const ModelGeometry& geometry, int k2 = 49, int k3 = 3, int k4 = 4);

  void init(std::mt19937_64& rng);
  VarPtr forward(const VarPtr& x) const;  // [N,C,T] -> [N,F,1,T/4]
  void register_params(ParameterGroup& g, const std::string& prefix) const;

  VarPtr tf_w, tf_b;      // [F,1,1,K2]
  VarPtr glb_w, glb_b;    // [F,F,C,1]
  VarPtr hem_w, hem_b;    // [F,F,C/2,1], stride (C/2,1)
  VarPtr fuse_w, fuse_b;  // [F,F,K3,1]

 private:
  ModelGeometry geo_;
  int k2_ = 49, k3_ = 3, k4_ = 4;
};

// Two fully-connected layers (D -> 256 -> 128) with batch norm and ReLU
// between them; maps encoder outputs into the contrastive latent space.
class Projector {
 public:
  static constexpr int kHidden = 256;
  static constexpr int kOut = 128;

  Projector() = default;
  Projector(int input_dim, double bn_momentum, double bn_eps);

  void init(std::mt19937_64& rng);
  VarPtr forward(const VarPtr& h, bool train);  // [N,D] -> [N,128]
  void register_params(ParameterGroup& g, const std::string& prefix) const;

  VarPtr fc1_w, fc1_b, gamma, beta, fc2_w, fc2_b;
  Tensor running_mean, running_var;

 private:
  int input_dim_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
};

// Three-layer MLP with two 30-unit hidden layers and 2 output logits.
class Classifier {
 public:
  static constexpr int kHidden = 30;
  static constexpr int kClasses = 2;

  Classifier() = default;
  explicit Classifier(int input_dim);

  void init(std::mt19937_64& rng);
  VarPtr forward(const VarPtr& h) const;  // [N,D] -> [N,2]
  void register_params(ParameterGroup& g, const std::string& prefix) const;
  int input_dim() const { return input_dim_; }

  VarPtr fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b;

 private:
  int input_dim_ = 0;
};

// Every learnable part of the architecture. The classifier input width is an
// explicit argument because ablation variants feed it different features.
struct ModelBundle {
  ModelGeometry geometry;
  TfrModule tfr;
  StreamEncoder enc_time, enc_freq;
  Projector proj_time, proj_freq;
  Classifier classifier;

  ModelBundle() = default;
  ModelBundle(const ModelGeometry& geometry, int classifier_input_dim);

  void init(std::uint64_t seed);

  // Self-supervised parameters: TFR encoder+decoder, both stream encoders,
  // both projectors. Fresh moment buffers on every call.
  ParameterGroup ssl_parameters() const;
  ParameterGroup classifier_parameters() const;
  ParameterGroup all_parameters() const;

  Checkpoint to_checkpoint() const;
  static ModelBundle from_checkpoint(const Checkpoint& ckpt);
};

// Full prediction path: spectrum, both encoder streams, concatenated
// representation, classifier logits. Augmentations, the decoder, and the
// projectors take no part. `fft_counter` is forwarded to compute_spectrum.
Tensor forward_prediction(const ModelBundle& model, const Tensor& x, std::int64_t* fft_counter = nullptr);

// Kaiming-style fan-in uniform init used by every layer.
void init_uniform_fan_in(Tensor& w, int fan_in, std::mt19937_64& rng);

}  // namespace cascade
