#include "cascade/validate.hpp"

#include <random>

#include "cascade/augment.hpp"
#include "cascade/gradcheck.hpp"
#include "cascade/objectives.hpp"
#include "cascade/spectrum.hpp"

namespace cascade {

ModelGradCheckReport run_model_gradcheck(const ModelGeometry& geometry, int batch, double h, int samples_per_tensor,
                                         std::uint64_t seed, double lambda, double tau) {
  const int c = geometry.channels, t = geometry.samples;
  ModelBundle model(geometry, 2 * geometry.stream_feature_dim());
  model.init(seed);

  std::mt19937_64 rng(derive_seed(seed, 0, 0, 0xDA7Au));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor x({batch, c, t});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = gauss(rng);
  Tensor x_f = compute_spectrum(x);

  // fixed augmented views
  AugmentPolicy policy;
  Tensor x_aug({batch, c, t}), xf_aug({batch, c, t});
  const std::int64_t plane = static_cast<std::int64_t>(c) * t;
  for (int i = 0; i < batch; ++i) {
    Tensor sample({c, t}), fsample({c, t});
    std::copy(x.data() + i * plane, x.data() + (i + 1) * plane, sample.data());
    std::copy(x_f.data() + i * plane, x_f.data() + (i + 1) * plane, fsample.data());
    std::mt19937_64 rt(derive_seed(seed, 1, static_cast<std::uint64_t>(i), 1));
    std::mt19937_64 rf(derive_seed(seed, 1, static_cast<std::uint64_t>(i), 2));
    auto at = augment_time(sample, policy, rt);
    auto af = augment_freq(fsample, policy, rf);
    std::copy(at.values.data(), at.values.data() + plane, x_aug.data() + i * plane);
    std::copy(af.values.data(), af.values.data() + plane, xf_aug.data() + i * plane);
  }
  std::vector<int> labels(static_cast<std::size_t>(batch));
  std::uniform_int_distribution<int> lab(0, 1);
  for (auto& l : labels) l = lab(rng);

  auto joint_fn = [&]() {
    auto xt_node = make_const(x);
    auto xf_node = make_const(x_f);
    auto r = model.tfr.encode(xt_node);
    auto r_aug = model.tfr.encode(make_const(x_aug));
    auto z_t = model.proj_time.forward(flatten_rows(model.enc_time.forward(r)), true);
    auto z_t_aug = model.proj_time.forward(flatten_rows(model.enc_time.forward(r_aug)), true);
    auto z_f = model.proj_freq.forward(flatten_rows(model.enc_freq.forward(xf_node)), true);
    auto z_f_aug = model.proj_freq.forward(flatten_rows(model.enc_freq.forward(make_const(xf_aug))), true);
    auto l_recon = recon_loss(model.tfr.decode(r), xf_node);
    auto l_t = ntxent_loss(z_t, z_t_aug, tau);
    auto l_f = ntxent_loss(z_f, z_f_aug, tau);
    return joint_loss(l_t, l_f, l_recon, lambda);
  };

  auto ce_fn = [&]() {
    auto xt_node = make_const(x);
    auto h_t = flatten_rows(model.enc_time.forward(model.tfr.encode(xt_node)));
    auto h_f = flatten_rows(model.enc_freq.forward(make_const(x_f)));
    auto logits = model.classifier.forward(concat({h_t, h_f}, 1));
    return cross_entropy(logits, labels);
  };

  struct NamedGroup {
    std::string name;
    ParameterGroup group;
  };
  auto ssl_groups = [&]() {
    std::vector<NamedGroup> gs;
    {
      NamedGroup g{"tfr_encoder", {}};
      model.tfr.register_encoder(g.group, "tfr");
      gs.push_back(std::move(g));
    }
    {
      NamedGroup g{"tfr_decoder", {}};
      model.tfr.register_decoder(g.group, "tfr");
      gs.push_back(std::move(g));
    }
    {
      NamedGroup g{"enc_time", {}};
      model.enc_time.register_params(g.group, "enc_t");
      gs.push_back(std::move(g));
    }
    {
      NamedGroup g{"enc_freq", {}};
      model.enc_freq.register_params(g.group, "enc_f");
      gs.push_back(std::move(g));
    }
    {
      NamedGroup g{"proj_time", {}};
      model.proj_time.register_params(g.group, "proj_t");
      gs.push_back(std::move(g));
    }
    {
      NamedGroup g{"proj_freq", {}};
      model.proj_freq.register_params(g.group, "proj_f");
      gs.push_back(std::move(g));
    }
    return gs;
  };

  ModelGradCheckReport report;
  GradCheckOptions opts;
  opts.h = h;
  opts.samples_per_tensor = samples_per_tensor;
  opts.rng_seed = seed;

  for (auto& ng : ssl_groups()) {
    auto res = grad_check(joint_fn, ng.group, opts);
    report.checks.push_back({"joint", ng.name, res.max_rel_error, res.entries_checked});
    report.worst = std::max(report.worst, res.max_rel_error);
  }

  std::vector<NamedGroup> ce_groups;
  {
    NamedGroup g{"tfr_encoder", {}};
    model.tfr.register_encoder(g.group, "tfr");
    ce_groups.push_back(std::move(g));
  }
  {
    NamedGroup g{"enc_time", {}};
    model.enc_time.register_params(g.group, "enc_t");
    ce_groups.push_back(std::move(g));
  }
  {
    NamedGroup g{"enc_freq", {}};
    model.enc_freq.register_params(g.group, "enc_f");
    ce_groups.push_back(std::move(g));
  }
  {
    NamedGroup g{"classifier", {}};
    model.classifier.register_params(g.group, "clf");
    ce_groups.push_back(std::move(g));
  }
  for (auto& ng : ce_groups) {
    auto res = grad_check(ce_fn, ng.group, opts);
    report.checks.push_back({"cross_entropy", ng.name, res.max_rel_error, res.entries_checked});
    report.worst = std::max(report.worst, res.max_rel_error);
  }
  return report;
}

}  // namespace cascade
