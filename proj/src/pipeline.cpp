#include "cascade/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "cascade/error.hpp"
#include "cascade/spectrum.hpp"

namespace cascade {

namespace {

constexpr std::uint64_t kShuffleTag = 0x5u;
constexpr std::uint64_t kTimeViewTag = 0x1u;
constexpr std::uint64_t kFreqViewTag = 0x2u;
constexpr std::uint64_t kFoldTag = 0xF01Du;
constexpr std::uint64_t kClassifierTag = 0xC1Fu;

bool uses_freq_stream(VariantId v) {
  return v == VariantId::full || v == VariantId::tt_recon || v == VariantId::no_recon;
}

bool uses_spectra(VariantId v) { return uses_freq_stream(v) || v == VariantId::tfr_only; }

bool has_decoder(VariantId v) {
  return v == VariantId::full || v == VariantId::tt_recon || v == VariantId::tfr_only;
}

bool has_contrastive(VariantId v) { return uses_freq_stream(v) || v == VariantId::single_time_stream; }

ParameterGroup ssl_group_for(const ModelBundle& m, VariantId v) {
  ParameterGroup g;
  switch (v) {
    case VariantId::full:
    case VariantId::tt_recon:
      return m.ssl_parameters();
    case VariantId::no_recon:
      m.tfr.register_encoder(g, "tfr");
      m.enc_time.register_params(g, "enc_t");
      m.enc_freq.register_params(g, "enc_f");
      m.proj_time.register_params(g, "proj_t");
      m.proj_freq.register_params(g, "proj_f");
      return g;
    case VariantId::single_time_stream:
      m.tfr.register_encoder(g, "tfr");
      m.enc_time.register_params(g, "enc_t");
      m.proj_time.register_params(g, "proj_t");
      return g;
    case VariantId::tfr_only:
      m.tfr.register_encoder(g, "tfr");
      m.tfr.register_decoder(g, "tfr");
      return g;
    case VariantId::base_model:
      return g;  // no self-supervised stage
  }
  return g;
}

double accuracy_pct(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<std::int64_t>(i) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return 100.0 * correct / std::max(1, n);
}

std::string batch_snapshot(const GuardedSegments& view, const std::vector<int>& positions) {
  std::ostringstream os;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (i) os << ", ";
    os << view.subject(positions[i]) << "#" << view.global_index(positions[i]);
    if (i >= 7 && positions.size() > 8) {
      os << ", ... (" << positions.size() << " segments)";
      break;
    }
  }
  return os.str();
}

}  // namespace

std::int64_t RunCounters::reads_of(const std::string& subject) const {
  auto it = subject_reads.find(subject);
  return it == subject_reads.end() ? 0 : it->second;
}

void RunCounters::merge(const RunCounters& other) {
  fft_calls += other.fft_calls;
  augment_draws += other.augment_draws;
  for (const auto& [k, v] : other.subject_reads) subject_reads[k] += v;
}

GuardedSegments::GuardedSegments(const SegmentBatch* data, std::vector<int> indices, RunCounters* counters)
    : data_(data), indices_(std::move(indices)), counters_(counters) {
  for (int idx : indices_) {
    if (idx < 0 || idx >= static_cast<int>(data_->count())) {
      throw DataError("GuardedSegments: index " + std::to_string(idx) + " out of range");
    }
  }
}

Tensor GuardedSegments::gather(const std::vector<int>& positions) const {
  const int c = data_->channels(), t = data_->segment_len();
  Tensor out({static_cast<int>(positions.size()), c, t});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int g = global_index(positions[i]);
    data_->copy_segment(g, out.data() + static_cast<std::int64_t>(i) * c * t);
    if (counters_) ++counters_->subject_reads[data_->subject_ids[static_cast<std::size_t>(g)]];
  }
  return out;
}

int GuardedSegments::label(int position) const {
  return data_->labels[static_cast<std::size_t>(global_index(position))];
}

const std::string& GuardedSegments::subject(int position) const {
  return data_->subject_ids[static_cast<std::size_t>(global_index(position))];
}

int GuardedSegments::global_index(int position) const {
  if (position < 0 || position >= static_cast<int>(indices_.size())) {
    throw DataError("GuardedSegments: position out of range");
  }
  return indices_[static_cast<std::size_t>(position)];
}

ModelGeometry geometry_for(const SegmentBatch& data, const RunConfig& cfg) {
  ModelGeometry g;
  g.channels = data.channels();
  g.samples = data.segment_len();
  g.filters = cfg.filters;
  g.lrelu_slope = cfg.lrelu_slope;
  g.bn_momentum = cfg.bn_momentum;
  return g;
}

int representation_dim(const ModelGeometry& g, VariantId v) {
  switch (v) {
    case VariantId::full:
    case VariantId::tt_recon:
    case VariantId::no_recon:
      return 2 * g.stream_feature_dim();
    case VariantId::single_time_stream:
    case VariantId::base_model:
      return g.stream_feature_dim();
    case VariantId::tfr_only:
      return g.channels * g.samples;
  }
  return 0;
}

ModelBundle build_model(const SegmentBatch& data, const RunConfig& cfg) {
  const ModelGeometry g = geometry_for(data, cfg);
  return ModelBundle(g, representation_dim(g, cfg.variant));
}

Tensor extract_representation(const ModelBundle& model, const Tensor& x, VariantId v, std::int64_t* fft_counter) {
  auto xt = make_const(x);
  switch (v) {
    case VariantId::full:
    case VariantId::tt_recon:
    case VariantId::no_recon: {
      auto xf = make_const(compute_spectrum(x, fft_counter));
      auto h_t = flatten_rows(model.enc_time.forward(model.tfr.encode(xt)));
      auto h_f = flatten_rows(model.enc_freq.forward(xf));
      return concat({h_t, h_f}, 1)->value;
    }
    case VariantId::single_time_stream:
      return flatten_rows(model.enc_time.forward(model.tfr.encode(xt)))->value;
    case VariantId::base_model:
      return flatten_rows(model.enc_time.forward(xt))->value;
    case VariantId::tfr_only:
      return flatten_rows(model.tfr.encode(xt))->value;
  }
  throw ConfigError("extract_representation: unknown variant");
}

PretrainOutput pretrain(ModelBundle& model, const GuardedSegments& train, const RunConfig& cfg, std::uint64_t seed,
                        RunCounters& counters) {
  PretrainOutput out;
  const VariantId v = cfg.variant;
  if (v == VariantId::base_model || cfg.pretrain_epochs == 0) return out;

  const int total = static_cast<int>(train.count());
  const int batch = cfg.batch_size;
  if (total < batch && total < 2) throw DataError("pretrain: not enough segments for one batch");
  const int c = train.data().channels();
  const int t = train.data().segment_len();
  const std::int64_t plane = static_cast<std::int64_t>(c) * t;

  // The spectrum of each training segment is fixed across epochs; compute once.
  SpectrumBatch spectra;
  if (uses_spectra(v)) {
    std::vector<int> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), 0);
    spectra.values = compute_spectrum(train.gather(all), &counters.fft_calls);
    for (int i = 0; i < total; ++i) {
      const int g = train.global_index(i);
      spectra.subject_ids.push_back(train.data().subject_ids[static_cast<std::size_t>(g)]);
      spectra.trial_ids.push_back(train.data().trial_ids[static_cast<std::size_t>(g)]);
      spectra.labels.push_back(train.data().labels[static_cast<std::size_t>(g)]);
    }
  }

  ParameterGroup params = ssl_group_for(model, v);
  AdamHyper hyper;
  hyper.lr = cfg.effective_pretrain_lr();

  std::mt19937_64 shuffle_rng(derive_seed(seed, 0, 0, kShuffleTag));
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const int steps = total / batch;  // final partial batch dropped
    for (int step = 0; step < steps; ++step) {
      std::vector<int> positions(order.begin() + static_cast<std::ptrdiff_t>(step) * batch,
                                 order.begin() + static_cast<std::ptrdiff_t>(step + 1) * batch);
      Tensor x_t = train.gather(positions);

      Tensor x_f({batch, c, t});
      if (uses_spectra(v)) {
        for (int i = 0; i < batch; ++i) {
          const double* src = spectra.values.data() +
                              static_cast<std::int64_t>(positions[static_cast<std::size_t>(i)]) * plane;
          std::copy(src, src + plane, x_f.data() + static_cast<std::int64_t>(i) * plane);
        }
      }

      Tensor x_t_aug({batch, c, t}), x_f_aug({batch, c, t});
      if (has_contrastive(v)) {
        for (int i = 0; i < batch; ++i) {
          Tensor sample({c, t});
          std::copy(x_t.data() + static_cast<std::int64_t>(i) * plane,
                    x_t.data() + static_cast<std::int64_t>(i + 1) * plane, sample.data());
          const auto gidx = static_cast<std::uint64_t>(train.global_index(positions[static_cast<std::size_t>(i)]));
          std::mt19937_64 rng_t(derive_seed(seed, static_cast<std::uint64_t>(epoch), gidx, kTimeViewTag));
          auto aug_t = augment_time(sample, cfg.augment, rng_t);
          ++counters.augment_draws;
          std::copy(aug_t.values.data(), aug_t.values.data() + plane,
                    x_t_aug.data() + static_cast<std::int64_t>(i) * plane);
          if (uses_freq_stream(v)) {
            Tensor fsample({c, t});
            std::copy(x_f.data() + static_cast<std::int64_t>(i) * plane,
                      x_f.data() + static_cast<std::int64_t>(i + 1) * plane, fsample.data());
            std::mt19937_64 rng_f(derive_seed(seed, static_cast<std::uint64_t>(epoch), gidx, kFreqViewTag));
            auto aug_f = augment_freq(fsample, cfg.augment, rng_f);
            ++counters.augment_draws;
            std::copy(aug_f.values.data(), aug_f.values.data() + plane,
                      x_f_aug.data() + static_cast<std::int64_t>(i) * plane);
          }
        }
      }

      auto xt_node = make_const(x_t);
      LossReport report;
      report.lambda = cfg.lambda;
      report.tau = cfg.tau;
      report.batch_size = batch;

      VarPtr loss;
      VarPtr l_recon, l_con_t, l_con_f;
      if (v == VariantId::tfr_only) {
        auto r = model.tfr.encode(xt_node);
        l_recon = recon_loss(model.tfr.decode(r), make_const(x_f));
        loss = l_recon;
      } else {
        auto r = model.tfr.encode(xt_node);
        auto r_aug = model.tfr.encode(make_const(x_t_aug));
        auto z_t = model.proj_time.forward(flatten_rows(model.enc_time.forward(r)), true);
        auto z_t_aug = model.proj_time.forward(flatten_rows(model.enc_time.forward(r_aug)), true);
        l_con_t = ntxent_loss(z_t, z_t_aug, cfg.tau, cfg.ntxent_mean);
        if (uses_freq_stream(v)) {
          auto xf_node = make_const(x_f);
          auto z_f = model.proj_freq.forward(flatten_rows(model.enc_freq.forward(xf_node)), true);
          auto z_f_aug =
              model.proj_freq.forward(flatten_rows(model.enc_freq.forward(make_const(x_f_aug))), true);
          l_con_f = ntxent_loss(z_f, z_f_aug, cfg.tau, cfg.ntxent_mean);
          if (v == VariantId::full) {
            l_recon = recon_loss(model.tfr.decode(r), xf_node);
          } else if (v == VariantId::tt_recon) {
            l_recon = recon_loss(model.tfr.decode(r), xt_node);
          }
          if (l_recon) {
            loss = joint_loss(l_con_t, l_con_f, l_recon, cfg.lambda);
          } else {
            loss = scale(add(l_con_t, l_con_f), cfg.lambda);
          }
        } else {
          loss = scale(l_con_t, cfg.lambda);
        }
      }

      report.l_recon = l_recon ? l_recon->value.item() : 0.0;
      report.l_con_t = l_con_t ? l_con_t->value.item() : 0.0;
      report.l_con_f = l_con_f ? l_con_f->value.item() : 0.0;
      const double anchors = 2.0 * batch;
      report.l_con_t_mean = cfg.ntxent_mean ? report.l_con_t : report.l_con_t / anchors;
      report.l_con_f_mean = cfg.ntxent_mean ? report.l_con_f : report.l_con_f / anchors;
      report.joint = loss->value.item();

      if (!std::isfinite(report.joint)) {
        throw NumericError("pretrain: non-finite joint loss at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(step) + " (l_recon=" + std::to_string(report.l_recon) +
                           ", l_con_t=" + std::to_string(report.l_con_t) + ", l_con_f=" +
                           std::to_string(report.l_con_f) + "); batch: " + batch_snapshot(train, positions));
      }

      backward(loss);
      adam_step(params, hyper);
      params.zero_grads();

      LossRecord rec;
      rec.phase = "pretrain";
      rec.epoch = epoch;
      rec.step = step;
      rec.losses = report;
      out.log.push_back(std::move(rec));
      ++out.optimizer_steps;
    }
  }
  return out;
}

namespace {

// Caches frozen-encoder features for the classifier stage.
Tensor cached_features(const ModelBundle& model, const GuardedSegments& segs, VariantId v, RunCounters& counters) {
  const int total = static_cast<int>(segs.count());
  const int dim = representation_dim(model.geometry, v);
  Tensor features({total, dim});
  const int chunk = 64;
  for (int start = 0; start < total; start += chunk) {
    const int stop = std::min(total, start + chunk);
    std::vector<int> positions;
    for (int i = start; i < stop; ++i) positions.push_back(i);
    Tensor x = segs.gather(positions);
    Tensor rep = extract_representation(model, x, v, &counters.fft_calls);
    std::copy(rep.data(), rep.data() + rep.size(), features.data() + static_cast<std::int64_t>(start) * dim);
  }
  return features;
}

}  // namespace

FinetuneOutput finetune(ModelBundle& model, const GuardedSegments& labeled, const RunConfig& cfg, std::uint64_t seed,
                        RunCounters& counters) {
  FinetuneOutput out;
  const VariantId v = cfg.variant;
  const int total = static_cast<int>(labeled.count());
  if (total == 0) throw DataError("finetune: empty labeled training set");

  std::vector<int> labels(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) labels[static_cast<std::size_t>(i)] = labeled.label(i);

  const bool end_to_end = (v == VariantId::base_model) || cfg.finetune_encoders;

  ParameterGroup params = model.classifier_parameters();
  AdamHyper hyper;
  hyper.lr = cfg.effective_classifier_lr();
  if (end_to_end) {
    if (v == VariantId::base_model) {
      model.enc_time.register_params(params, "enc_t");
      hyper.lr = cfg.effective_pretrain_lr();
    } else {
      ParameterGroup enc = ssl_group_for(model, v);
      params.merge(enc);
    }
  }

  Tensor features;  // only for the frozen path
  if (!end_to_end) features = cached_features(model, labeled, v, counters);

  std::mt19937_64 shuffle_rng(derive_seed(seed, 0, 1, kShuffleTag));
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  const int dim = representation_dim(model.geometry, v);

  for (int epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int start = 0; start < total; start += cfg.batch_size) {
      const int stop = std::min(total, start + cfg.batch_size);
      const int b = stop - start;
      std::vector<int> positions(order.begin() + start, order.begin() + stop);
      std::vector<int> batch_labels(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i) batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(positions[static_cast<std::size_t>(i)])];

      VarPtr logits;
      if (end_to_end) {
        Tensor x = labeled.gather(positions);
        auto xt = make_const(x);
        VarPtr rep;
        if (v == VariantId::base_model) {
          rep = flatten_rows(model.enc_time.forward(xt));
        } else if (v == VariantId::single_time_stream) {
          rep = flatten_rows(model.enc_time.forward(model.tfr.encode(xt)));
        } else if (v == VariantId::tfr_only) {
          rep = flatten_rows(model.tfr.encode(xt));
        } else {
          auto xf = make_const(compute_spectrum(x, &counters.fft_calls));
          auto h_t = flatten_rows(model.enc_time.forward(model.tfr.encode(xt)));
          auto h_f = flatten_rows(model.enc_freq.forward(xf));
          rep = concat({h_t, h_f}, 1);
        }
        logits = model.classifier.forward(rep);
      } else {
        Tensor fb({b, dim});
        for (int i = 0; i < b; ++i) {
          const std::int64_t src = static_cast<std::int64_t>(positions[static_cast<std::size_t>(i)]) * dim;
          std::copy(features.data() + src, features.data() + src + dim, fb.data() + static_cast<std::int64_t>(i) * dim);
        }
        logits = model.classifier.forward(make_const(fb));
      }

      auto loss = cross_entropy(logits, batch_labels);
      const double value = loss->value.item();
      if (!std::isfinite(value)) {
        throw NumericError("finetune: non-finite cross-entropy at epoch " + std::to_string(epoch) + " step " +
                           std::to_string(start / cfg.batch_size) + "; batch: " + batch_snapshot(labeled, positions));
      }
      backward(loss);
      adam_step(params, hyper);
      params.zero_grads();

      LossRecord rec;
      rec.phase = "finetune";
      rec.epoch = epoch;
      rec.step = start / cfg.batch_size;
      rec.losses.batch_size = b;
      rec.losses.lambda = cfg.lambda;
      rec.losses.tau = cfg.tau;
      rec.cross_entropy = value;
      out.log.push_back(std::move(rec));
      ++out.optimizer_steps;
    }
  }

  // training accuracy on the labeled set
  Tensor all_features = end_to_end ? cached_features(model, labeled, v, counters) : features;
  auto logits = model.classifier.forward(make_const(all_features));
  out.train_accuracy_pct = accuracy_pct(logits->value, labels);
  return out;
}

double evaluate_accuracy(const ModelBundle& model, const GuardedSegments& segments, VariantId v,
                         RunCounters& counters) {
  const int total = static_cast<int>(segments.count());
  if (total == 0) throw DataError("evaluate_accuracy: empty evaluation set");
  Tensor features = cached_features(model, segments, v, counters);
  auto logits = model.classifier.forward(make_const(features));
  std::vector<int> labels(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) labels[static_cast<std::size_t>(i)] = segments.label(i);
  return accuracy_pct(logits->value, labels);
}

void LosoReport::recompute_stats() {
  if (per_subject.empty()) {
    mean_pct = std_pct = 0.0;
    return;
  }
  double sum = 0.0;
  for (const auto& s : per_subject) sum += s.accuracy_pct;
  mean_pct = sum / static_cast<double>(per_subject.size());
  double var = 0.0;
  for (const auto& s : per_subject) {
    const double d = s.accuracy_pct - mean_pct;
    var += d * d;
  }
  std_pct = std::sqrt(var / static_cast<double>(per_subject.size()));
}

namespace {

FoldArtifacts run_fold(const SegmentBatch& data, const RunConfig& cfg, const LosoSplit& split,
                       const std::vector<double>* fractions, std::vector<LimitedLabelPoint>* points,
                       std::size_t fold_index) {
  FoldArtifacts fold;
  fold.held_out = split.held_out_subject;
  const std::uint64_t fold_seed = derive_seed(cfg.seed, fnv1a64(split.held_out_subject), kFoldTag, 0);

  ModelBundle model = build_model(data, cfg);
  model.init(fold_seed);

  GuardedSegments train_view(&data, split.train_indices, &fold.train_counters);
  PretrainOutput pre = pretrain(model, train_view, cfg, fold_seed, fold.train_counters);
  fold.log = std::move(pre.log);

  GuardedSegments test_view(&data, split.test_indices, &fold.eval_counters);

  if (!fractions) {
    FinetuneOutput fin = finetune(model, train_view, cfg, fold_seed, fold.train_counters);
    for (auto& r : fin.log) fold.log.push_back(std::move(r));
    fold.accuracy_pct = evaluate_accuracy(model, test_view, cfg.variant, fold.eval_counters);
    fold.checkpoint = model.to_checkpoint();
  } else {
    // limited-label path: reuse the pretrained encoders for every fraction
    for (std::size_t fi = 0; fi < fractions->size(); ++fi) {
      const double fraction = (*fractions)[fi];
      std::vector<int> labeled = limited_label_subsample(data, split.train_indices, fraction,
                                                         derive_seed(cfg.seed, fnv1a64(split.held_out_subject),
                                                                     static_cast<std::uint64_t>(fi), kClassifierTag));
      std::mt19937_64 clf_rng(derive_seed(fold_seed, static_cast<std::uint64_t>(fi), 0, kClassifierTag));
      model.classifier.init(clf_rng);
      GuardedSegments labeled_view(&data, labeled, &fold.train_counters);
      FinetuneOutput fin =
          finetune(model, labeled_view, cfg, derive_seed(fold_seed, static_cast<std::uint64_t>(fi), 1, kClassifierTag),
                   fold.train_counters);
      const double acc = evaluate_accuracy(model, test_view, cfg.variant, fold.eval_counters);
      SubjectResult res{split.held_out_subject, acc};
      (*points)[fi].report.per_subject[fold_index] = res;
    }
    fold.checkpoint = model.to_checkpoint();
  }
  return fold;
}

void run_folds(const SegmentBatch& data, const RunConfig& cfg, const std::vector<LosoSplit>& splits,
               std::vector<FoldArtifacts>& folds, const std::vector<double>* fractions,
               std::vector<LimitedLabelPoint>* points) {
  folds.resize(splits.size());
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(splits.size())));
  if (jobs == 1) {
    for (std::size_t i = 0; i < splits.size(); ++i) {
      folds[i] = run_fold(data, cfg, splits[i], fractions, points, i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= splits.size()) break;
          folds[i] = run_fold(data, cfg, splits[i], fractions, points, i);
        }
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& th : workers) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

LosoReport report_shell(const RunConfig& cfg) {
  LosoReport report;
  report.scheme = to_string(cfg.scheme);
  report.dimension = to_string(cfg.dimension);
  report.variant = to_string(cfg.variant);
  report.config_hash = cfg.config_hash();
  report.seed = cfg.seed;
  return report;
}

}  // namespace

LosoOutput evaluate_loso(const SegmentBatch& data, const RunConfig& cfg) {
  cfg.validate();
  const auto splits = make_loso_splits(data);
  LosoOutput out;
  run_folds(data, cfg, splits, out.folds, nullptr, nullptr);
  out.report = report_shell(cfg);
  for (const auto& fold : out.folds) {
    out.report.per_subject.push_back({fold.held_out, fold.accuracy_pct});
  }
  out.report.recompute_stats();
  return out;
}

std::vector<LimitedLabelPoint> run_limited_label(const SegmentBatch& data, const RunConfig& cfg,
                                                 const std::vector<double>& fractions) {
  cfg.validate();
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("limited-label fraction must be in (0,1]");
  }
  const auto splits = make_loso_splits(data);
  std::vector<LimitedLabelPoint> points(fractions.size());
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    points[fi].fraction = fractions[fi];
    points[fi].report = report_shell(cfg);
    points[fi].report.fraction = fractions[fi];
    points[fi].report.per_subject.resize(splits.size());
  }
  std::vector<FoldArtifacts> folds;
  run_folds(data, cfg, splits, folds, &fractions, &points);
  for (auto& p : points) p.report.recompute_stats();
  return points;
}

namespace {

// Logistic-regression probe trained with Adam on standardized features.
double train_linear_probe(const Tensor& features, const std::vector<int>& labels, const std::vector<int>& train_idx,
                          const std::vector<int>& test_idx, std::uint64_t seed) {
  const int d = features.dim(1);
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0), inv_std(static_cast<std::size_t>(d), 0.0);
  for (int i : train_idx) {
    const double* row = features.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += row[j];
  }
  for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] /= static_cast<double>(train_idx.size());
  for (int i : train_idx) {
    const double* row = features.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean[static_cast<std::size_t>(j)];
      inv_std[static_cast<std::size_t>(j)] += c * c;
    }
  }
  for (int j = 0; j < d; ++j) {
    const double sd = std::sqrt(inv_std[static_cast<std::size_t>(j)] / static_cast<double>(train_idx.size()));
    inv_std[static_cast<std::size_t>(j)] = sd < 1e-12 ? 0.0 : 1.0 / sd;
  }
  auto standardized = [&](const std::vector<int>& idx) {
    Tensor x({static_cast<int>(idx.size()), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* src = features.data() + static_cast<std::int64_t>(idx[i]) * d;
      double* dst = x.data() + static_cast<std::int64_t>(i) * d;
      for (int j = 0; j < d; ++j) dst[j] = (src[j] - mean[static_cast<std::size_t>(j)]) * inv_std[static_cast<std::size_t>(j)];
    }
    return x;
  };

  auto w = make_param(Tensor({d, 2}));
  auto b = make_param(Tensor({2}));
  std::mt19937_64 rng(seed);
  init_uniform_fan_in(w->value, d, rng);
  ParameterGroup params;
  params.add("probe.w", w);
  params.add("probe.b", b);
  AdamHyper hyper;
  hyper.lr = 1e-2;

  Tensor xtrain = standardized(train_idx);
  std::vector<int> ytrain;
  ytrain.reserve(train_idx.size());
  for (int i : train_idx) ytrain.push_back(labels[static_cast<std::size_t>(i)]);
  auto xtrain_node = make_const(xtrain);
  for (int iter = 0; iter < 150; ++iter) {
    auto loss = cross_entropy_with_labels(linear(xtrain_node, w, b), ytrain);
    backward(loss);
    adam_step(params, hyper);
    params.zero_grads();
  }

  Tensor xtest = standardized(test_idx);
  auto logits = linear(make_const(xtest), w, b);
  std::vector<int> ytest;
  ytest.reserve(test_idx.size());
  for (int i : test_idx) ytest.push_back(labels[static_cast<std::size_t>(i)]);
  return accuracy_pct(logits->value, ytest);
}

}  // namespace

SeparabilityReport separability_metrics(const Tensor& features, const std::vector<int>& labels,
                                        const std::vector<std::string>& subject_ids) {
  if (features.rank() != 2) throw DimensionError("separability_metrics: features must be [N,D]");
  const int n = features.dim(0), d = features.dim(1);
  if (n != static_cast<int>(labels.size()) || n != static_cast<int>(subject_ids.size())) {
    throw DimensionError("separability_metrics: metadata length mismatch");
  }
  bool has0 = false, has1 = false;
  for (int lab : labels) {
    if (lab == 0) has0 = true;
    if (lab == 1) has1 = true;
  }
  if (!has0 || !has1) throw DataError("separability_metrics: both classes must be present");

  SeparabilityReport report;

  // subject-held-out linear probe
  std::vector<std::string> subjects;
  for (const auto& s : subject_ids) {
    if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
  }
  std::sort(subjects.begin(), subjects.end());
  double probe_sum = 0.0;
  for (const auto& held : subjects) {
    std::vector<int> train_idx, test_idx;
    for (int i = 0; i < n; ++i) {
      (subject_ids[static_cast<std::size_t>(i)] == held ? test_idx : train_idx).push_back(i);
    }
    probe_sum += train_linear_probe(features, labels, train_idx, test_idx, fnv1a64(held));
  }
  report.probe_accuracy_pct = probe_sum / static_cast<double>(subjects.size());

  // silhouette over class labels (Euclidean)
  std::vector<double> dist(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double* a = features.data() + static_cast<std::int64_t>(i) * d;
      const double* b = features.data() + static_cast<std::int64_t>(j) * d;
      double sq = 0.0;
      for (int k = 0; k < d; ++k) {
        const double c = a[k] - b[k];
        sq += c * c;
      }
      const double v = std::sqrt(sq);
      dist[static_cast<std::size_t>(i) * n + j] = v;
      dist[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  double sil_sum = 0.0;
  int sil_count = 0;
  for (int i = 0; i < n; ++i) {
    double same_sum = 0.0, other_sum = 0.0;
    int same_n = 0, other_n = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        same_sum += dist[static_cast<std::size_t>(i) * n + j];
        ++same_n;
      } else {
        other_sum += dist[static_cast<std::size_t>(i) * n + j];
        ++other_n;
      }
    }
    if (same_n == 0 || other_n == 0) continue;
    const double a = same_sum / same_n;
    const double b = other_sum / other_n;
    sil_sum += (b - a) / std::max(a, b);
    ++sil_count;
  }
  report.silhouette = sil_count ? sil_sum / sil_count : 0.0;

  // per-subject centroid dispersion, normalized by overall spread
  std::vector<double> global(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = features.data() + static_cast<std::int64_t>(i) * d;
    for (int j = 0; j < d; ++j) global[static_cast<std::size_t>(j)] += row[j];
  }
  for (int j = 0; j < d; ++j) global[static_cast<std::size_t>(j)] /= n;
  double spread = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = features.data() + static_cast<std::int64_t>(i) * d;
    double sq = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - global[static_cast<std::size_t>(j)];
      sq += c * c;
    }
    spread += std::sqrt(sq);
  }
  spread /= n;

  std::vector<std::vector<double>> centroids;
  for (const auto& s : subjects) {
    std::vector<double> c(static_cast<std::size_t>(d), 0.0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (subject_ids[static_cast<std::size_t>(i)] != s) continue;
      const double* row = features.data() + static_cast<std::int64_t>(i) * d;
      for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(j)] += row[j];
      ++count;
    }
    for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(j)] /= std::max(1, count);
    centroids.push_back(std::move(c));
  }
  double pair_sum = 0.0;
  int pair_count = 0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    for (std::size_t j = i + 1; j < centroids.size(); ++j) {
      double sq = 0.0;
      for (int k = 0; k < d; ++k) {
        const double c = centroids[i][static_cast<std::size_t>(k)] - centroids[j][static_cast<std::size_t>(k)];
        sq += c * c;
      }
      pair_sum += std::sqrt(sq);
      ++pair_count;
    }
  }
  const double centroid_mean = pair_count ? pair_sum / pair_count : 0.0;
  report.subject_dispersion = spread < 1e-12 ? 0.0 : centroid_mean / spread;
  return report;
}

}  // namespace cascade
