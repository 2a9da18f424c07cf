#include "cascade/model.hpp"

#include <cmath>

#include "cascade/error.hpp"
#include "cascade/spectrum.hpp"

namespace cascade {

void ModelGeometry::validate() const {
  if (channels < 2 || channels % 2 != 0) {
    throw ConfigError("model geometry: channel count must be even and >= 2, got " + std::to_string(channels));
  }
  if (samples < 4) throw ConfigError("model geometry: T must be >= 4 for the (1,4) average pool");
  if (filters < 1) throw ConfigError("model geometry: filter count must be positive");
  if (!(lrelu_slope >= 0.0 && lrelu_slope < 1.0)) throw ConfigError("model geometry: LeakyReLU slope out of range");
}

void init_uniform_fan_in(Tensor& w, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
}

// --- TfrModule ---------------------------------------------------------------

TfrModule::TfrModule(int channels, int samples, int kernel) : channels_(channels), samples_(samples), kernel_(kernel) {
  dw_weight = make_param(Tensor({channels_, kernel_}));
  dw_bias = make_param(Tensor({channels_}));
  dec_weight = make_param(Tensor({samples_, samples_}));
  dec_bias = make_param(Tensor({samples_}));
}

void TfrModule::init(std::mt19937_64& rng) {
  init_uniform_fan_in(dw_weight->value, kernel_, rng);
  dw_bias->value.fill(0.0);
  init_uniform_fan_in(dec_weight->value, samples_, rng);
  dec_bias->value.fill(0.0);
}

VarPtr TfrModule::encode(const VarPtr& x) const {
  return conv1d_depthwise(x, dw_weight, dw_bias, 1, (kernel_ - 1) / 2);
}

VarPtr TfrModule::decode(const VarPtr& r) const { return linear(r, dec_weight, dec_bias); }

void TfrModule::register_encoder(ParameterGroup& g, const std::string& prefix) const {
  g.add(prefix + ".dw_weight", dw_weight);
  g.add(prefix + ".dw_bias", dw_bias);
}

void TfrModule::register_decoder(ParameterGroup& g, const std::string& prefix) const {
  g.add(prefix + ".dec_weight", dec_weight);
  g.add(prefix + ".dec_bias", dec_bias);
}

// --- StreamEncoder -------------------------------------------------------------

StreamEncoder::StreamEncoder(const ModelGeometry& geometry, int k2, int k3, int k4)
    : geo_(geometry), k2_(k2), k3_(k3), k4_(k4) {
  const int f = geo_.filters, c = geo_.channels;
  tf_w = make_param(Tensor({f, 1, 1, k2_}));
  tf_b = make_param(Tensor({f}));
  glb_w = make_param(Tensor({f, f, c, 1}));
  glb_b = make_param(Tensor({f}));
  hem_w = make_param(Tensor({f, f, c / 2, 1}));
  hem_b = make_param(Tensor({f}));
  fuse_w = make_param(Tensor({f, f, k3_, 1}));
  fuse_b = make_param(Tensor({f}));
}

void StreamEncoder::init(std::mt19937_64& rng) {
  const int f = geo_.filters, c = geo_.channels;
  init_uniform_fan_in(tf_w->value, k2_, rng);
  tf_b->value.fill(0.0);
  init_uniform_fan_in(glb_w->value, f * c, rng);
  glb_b->value.fill(0.0);
  init_uniform_fan_in(hem_w->value, f * (c / 2), rng);
  hem_b->value.fill(0.0);
  init_uniform_fan_in(fuse_w->value, f * k3_, rng);
  fuse_b->value.fill(0.0);
}

VarPtr StreamEncoder::forward(const VarPtr& x) const {
  if (x->value.rank() != 3) throw DimensionError("stream encoder: expects [N,C,T], got " + x->value.shape_str());
  if (x->value.dim(1) != geo_.channels) {
    throw DimensionError("stream encoder: configured for C=" + std::to_string(geo_.channels) + ", got " +
                         std::to_string(x->value.dim(1)));
  }
  const int n = x->value.dim(0), c = geo_.channels, t = x->value.dim(2);
  auto img = reshape(x, {n, 1, c, t});
  auto h1 = conv2d(img, tf_w, tf_b, {1, 1}, {0, (k2_ - 1) / 2});         // [N,F,C,T]
  auto h_glb = conv2d(h1, glb_w, glb_b, {1, 1}, {0, 0});                 // [N,F,1,T]
  auto h_hem = conv2d(h1, hem_w, hem_b, {c / 2, 1}, {0, 0});             // [N,F,2,T]
  auto h2 = concat({h_glb, h_hem}, 2);                                   // [N,F,3,T]
  auto h_fu = conv2d(h2, fuse_w, fuse_b, {1, 1}, {0, 0});                // [N,F,1,T]
  return avg_pool2d(leaky_relu(h_fu, geo_.lrelu_slope), {1, k4_}, {1, k4_});
}

void StreamEncoder::register_params(ParameterGroup& g, const std::string& prefix) const {
  g.add(prefix + ".tf_w", tf_w);
  g.add(prefix + ".tf_b", tf_b);
  g.add(prefix + ".glb_w", glb_w);
  g.add(prefix + ".glb_b", glb_b);
  g.add(prefix + ".hem_w", hem_w);
  g.add(prefix + ".hem_b", hem_b);
  g.add(prefix + ".fuse_w", fuse_w);
  g.add(prefix + ".fuse_b", fuse_b);
}

// --- Projector -----------------------------------------------------------------

Projector::Projector(int input_dim, double bn_momentum, double bn_eps)
    : input_dim_(input_dim), momentum_(bn_momentum), eps_(bn_eps) {
  fc1_w = make_param(Tensor({input_dim_, kHidden}));
  fc1_b = make_param(Tensor({kHidden}));
  gamma = make_param(Tensor({kHidden}));
  beta = make_param(Tensor({kHidden}));
  fc2_w = make_param(Tensor({kHidden, kOut}));
  fc2_b = make_param(Tensor({kOut}));
  running_mean = Tensor({kHidden});
  running_var = Tensor::full({kHidden}, 1.0);
}

void Projector::init(std::mt19937_64& rng) {
  init_uniform_fan_in(fc1_w->value, input_dim_, rng);
  fc1_b->value.fill(0.0);
  gamma->value.fill(1.0);
  beta->value.fill(0.0);
  init_uniform_fan_in(fc2_w->value, kHidden, rng);
  fc2_b->value.fill(0.0);
  running_mean.fill(0.0);
  running_var.fill(1.0);
}

VarPtr Projector::forward(const VarPtr& h, bool train) {
  if (h->value.rank() != 2 || h->value.dim(1) != input_dim_) {
    throw DimensionError("projector: expects [N," + std::to_string(input_dim_) + "], got " + h->value.shape_str());
  }
  auto z = linear(h, fc1_w, fc1_b);
  z = train ? batch_norm_train(z, gamma, beta, running_mean, running_var, momentum_, eps_)
            : batch_norm_eval(z, gamma, beta, running_mean, running_var, eps_);
  return linear(relu(z), fc2_w, fc2_b);
}

void Projector::register_params(ParameterGroup& g, const std::string& prefix) const {
  g.add(prefix + ".fc1_w", fc1_w);
  g.add(prefix + ".fc1_b", fc1_b);
  g.add(prefix + ".bn_gamma", gamma);
  g.add(prefix + ".bn_beta", beta);
  g.add(prefix + ".fc2_w", fc2_w);
  g.add(prefix + ".fc2_b", fc2_b);
}

// --- Classifier ------------------------------------------------------------------

Classifier::Classifier(int input_dim) : input_dim_(input_dim) {
  fc1_w = make_param(Tensor({input_dim_, kHidden}));
  fc1_b = make_param(Tensor({kHidden}));
  fc2_w = make_param(Tensor({kHidden, kHidden}));
  fc2_b = make_param(Tensor({kHidden}));
  fc3_w = make_param(Tensor({kHidden, kClasses}));
  fc3_b = make_param(Tensor({kClasses}));
}

void Classifier::init(std::mt19937_64& rng) {
  init_uniform_fan_in(fc1_w->value, input_dim_, rng);
  fc1_b->value.fill(0.0);
  init_uniform_fan_in(fc2_w->value, kHidden, rng);
  fc2_b->value.fill(0.0);
  init_uniform_fan_in(fc3_w->value, kHidden, rng);
  fc3_b->value.fill(0.0);
}

VarPtr Classifier::forward(const VarPtr& h) const {
  if (h->value.rank() != 2 || h->value.dim(1) != input_dim_) {
    throw DimensionError("classifier: expects [N," + std::to_string(input_dim_) + "], got " + h->value.shape_str());
  }
  auto z = relu(linear(h, fc1_w, fc1_b));
  z = relu(linear(z, fc2_w, fc2_b));
  return linear(z, fc3_w, fc3_b);
}

void Classifier::register_params(ParameterGroup& g, const std::string& prefix) const {
  g.add(prefix + ".fc1_w", fc1_w);
  g.add(prefix + ".fc1_b", fc1_b);
  g.add(prefix + ".fc2_w", fc2_w);
  g.add(prefix + ".fc2_b", fc2_b);
  g.add(prefix + ".fc3_w", fc3_w);
  g.add(prefix + ".fc3_b", fc3_b);
}

// --- ModelBundle -----------------------------------------------------------------

ModelBundle::ModelBundle(const ModelGeometry& g, int classifier_input_dim) : geometry(g) {
  geometry.validate();
  tfr = TfrModule(geometry.channels, geometry.samples);
  enc_time = StreamEncoder(geometry);
  enc_freq = StreamEncoder(geometry);
  proj_time = Projector(geometry.stream_feature_dim(), geometry.bn_momentum, geometry.bn_eps);
  proj_freq = Projector(geometry.stream_feature_dim(), geometry.bn_momentum, geometry.bn_eps);
  classifier = Classifier(classifier_input_dim);
}

void ModelBundle::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  tfr.init(rng);
  enc_time.init(rng);
  enc_freq.init(rng);
  proj_time.init(rng);
  proj_freq.init(rng);
  classifier.init(rng);
}

ParameterGroup ModelBundle::ssl_parameters() const {
  ParameterGroup g;
  tfr.register_encoder(g, "tfr");
  tfr.register_decoder(g, "tfr");
  enc_time.register_params(g, "enc_t");
  enc_freq.register_params(g, "enc_f");
  proj_time.register_params(g, "proj_t");
  proj_freq.register_params(g, "proj_f");
  return g;
}

ParameterGroup ModelBundle::classifier_parameters() const {
  ParameterGroup g;
  classifier.register_params(g, "clf");
  return g;
}

ParameterGroup ModelBundle::all_parameters() const {
  ParameterGroup g = ssl_parameters();
  classifier.register_params(g, "clf");
  return g;
}

Checkpoint ModelBundle::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.channels = static_cast<std::uint32_t>(geometry.channels);
  ckpt.samples = static_cast<std::uint32_t>(geometry.samples);
  ckpt.filters = static_cast<std::uint32_t>(geometry.filters);
  const ParameterGroup params = all_parameters();
  for (const auto& slot : params.slots()) ckpt.put(slot.name, slot.var->value);
  ckpt.put("proj_t.bn_running_mean", proj_time.running_mean);
  ckpt.put("proj_t.bn_running_var", proj_time.running_var);
  ckpt.put("proj_f.bn_running_mean", proj_freq.running_mean);
  ckpt.put("proj_f.bn_running_var", proj_freq.running_var);
  return ckpt;
}

ModelBundle ModelBundle::from_checkpoint(const Checkpoint& ckpt) {
  ModelGeometry g;
  g.channels = static_cast<int>(ckpt.channels);
  g.samples = static_cast<int>(ckpt.samples);
  g.filters = static_cast<int>(ckpt.filters);
  const Tensor& clf1 = ckpt.get("clf.fc1_w");
  ModelBundle m(g, clf1.dim(0));
  ParameterGroup params = m.all_parameters();
  for (auto& slot : params.slots()) {
    const Tensor& stored = ckpt.get(slot.name);
    if (!stored.same_shape(slot.var->value)) {
      throw DataError("checkpoint entry " + slot.name + " has shape " + stored.shape_str() + ", expected " +
                      slot.var->value.shape_str());
    }
    slot.var->value = stored;
  }
  m.proj_time.running_mean = ckpt.get("proj_t.bn_running_mean");
  m.proj_time.running_var = ckpt.get("proj_t.bn_running_var");
  m.proj_freq.running_mean = ckpt.get("proj_f.bn_running_mean");
  m.proj_freq.running_var = ckpt.get("proj_f.bn_running_var");
  return m;
}

Tensor forward_prediction(const ModelBundle& model, const Tensor& x, std::int64_t* fft_counter) {
  if (x.rank() != 3) throw DimensionError("forward_prediction: expects [N,C,T], got " + x.shape_str());
  auto xt = make_const(x);
  auto xf = make_const(compute_spectrum(x, fft_counter));
  auto h_t = flatten_rows(model.enc_time.forward(model.tfr.encode(xt)));
  auto h_f = flatten_rows(model.enc_freq.forward(xf));
  auto h_cat = concat({h_t, h_f}, 1);
  return model.classifier.forward(h_cat)->value;
}

}  // namespace cascade
