#include "cascade/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

VariantId variant_from_string(const std::string& s) {
  if (s == "full") return VariantId::full;
  if (s == "tt_recon") return VariantId::tt_recon;
  if (s == "no_recon") return VariantId::no_recon;
  if (s == "single_time_stream") return VariantId::single_time_stream;
  if (s == "base_model") return VariantId::base_model;
  if (s == "tfr_only") return VariantId::tfr_only;
  throw ConfigError("unknown variant: " + s);
}

const char* to_string(VariantId v) {
  switch (v) {
    case VariantId::full: return "full";
    case VariantId::tt_recon: return "tt_recon";
    case VariantId::no_recon: return "no_recon";
    case VariantId::single_time_stream: return "single_time_stream";
    case VariantId::base_model: return "base_model";
    case VariantId::tfr_only: return "tfr_only";
  }
  return "?";
}

double RunConfig::effective_pretrain_lr() const {
  if (pretrain_lr > 0.0) return pretrain_lr;
  switch (scheme) {
    case Scheme::deap: return 1e-4;
    case Scheme::dreamer: return 8e-5;
    case Scheme::synthetic: return 1e-3;
  }
  return 1e-4;
}

double RunConfig::effective_classifier_lr() const {
  if (classifier_lr > 0.0) return classifier_lr;
  return scheme == Scheme::synthetic ? 1e-3 : 1e-5;
}

double RunConfig::effective_window_s() const {
  if (window_s > 0.0) return window_s;
  switch (scheme) {
    case Scheme::deap: return 4.0;
    case Scheme::dreamer: return 9.0;
    case Scheme::synthetic: return static_cast<double>(synth.segment_len) / kRequiredRate;
  }
  return 4.0;
}

double RunConfig::effective_stride_s() const {
  if (stride_s > 0.0) return stride_s;
  switch (scheme) {
    case Scheme::deap: return 4.0;
    case Scheme::dreamer: return 1.0;
    case Scheme::synthetic: return static_cast<double>(synth.segment_len) / kRequiredRate;
  }
  return 4.0;
}

void RunConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0,1]");
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (effective_pretrain_lr() <= 0.0 || effective_classifier_lr() <= 0.0) {
    throw ConfigError("learning rates must be positive");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (contrastive loss requirement)");
  if (pretrain_epochs < 0 || classifier_epochs < 0) throw ConfigError("epoch counts must be non-negative");
  if (filters < 1) throw ConfigError("filters must be positive");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  augment.validate();
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string RunConfig::canonical_string() const {
  std::map<std::string, std::string> kv;
  kv["scheme"] = to_string(scheme);
  kv["dimension"] = to_string(dimension);
  kv["dataset"] = dataset;
  kv["lambda"] = fmt(lambda);
  kv["tau"] = fmt(tau);
  kv["pretrain_lr"] = fmt(effective_pretrain_lr());
  kv["classifier_lr"] = fmt(effective_classifier_lr());
  kv["batch_size"] = std::to_string(batch_size);
  kv["pretrain_epochs"] = std::to_string(pretrain_epochs);
  kv["classifier_epochs"] = std::to_string(classifier_epochs);
  kv["seed"] = std::to_string(seed);
  kv["filters"] = std::to_string(filters);
  kv["lrelu_slope"] = fmt(lrelu_slope);
  kv["bn_momentum"] = fmt(bn_momentum);
  kv["variant"] = to_string(variant);
  kv["ntxent_mean"] = ntxent_mean ? "true" : "false";
  kv["finetune_encoders"] = finetune_encoders ? "true" : "false";
  kv["save_checkpoints"] = save_checkpoints ? "true" : "false";
  kv["window_s"] = fmt(effective_window_s());
  kv["stride_s"] = fmt(effective_stride_s());
  kv["aug_jitter_sigma"] = fmt(augment.time.jitter_sigma_ratio);
  kv["aug_scale_sigma"] = fmt(augment.time.scale_sigma);
  kv["aug_shift_max_ratio"] = fmt(augment.time.shift_max_ratio);
  kv["aug_keep_ratio"] = fmt(augment.time.keep_ratio);
  kv["aug_remove_prob"] = fmt(augment.freq.remove_prob);
  kv["aug_add_prob"] = fmt(augment.freq.add_prob);
  kv["aug_add_amp"] = fmt(augment.freq.add_amp_ratio);
  kv["synth_subjects"] = std::to_string(synth.n_subjects);
  kv["synth_trials"] = std::to_string(synth.trials_per_subject);
  kv["synth_channels"] = std::to_string(synth.channels);
  kv["synth_samples"] = std::to_string(synth.segment_len);
  kv["synth_segments_per_trial"] = std::to_string(synth.segments_per_trial);
  kv["synth_seed"] = std::to_string(synth.seed);
  kv["synth_cue_amp"] = fmt(synth.cue_amp);
  kv["synth_noise_amp"] = fmt(synth.noise_amp);
  kv["synth_mix"] = fmt(synth.mix);
  // jobs intentionally excluded: parallelism must not change results
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string RunConfig::config_hash() const {
  const std::uint64_t h = fnv1a64(canonical_string());
  std::ostringstream os;
  os << std::hex;
  for (int i = 15; i >= 0; --i) os << ((h >> (4 * i)) & 0xf);
  return os.str();
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto where = [&] { return path + ":" + std::to_string(lineno); };
    auto as_double = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
      } catch (const std::exception&) {
        throw ConfigError(where() + ": '" + key + "' expects a number, got '" + v + "'");
      }
    };
    auto as_int = [&](const std::string& v) {
      try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
      } catch (const std::exception&) {
        throw ConfigError(where() + ": '" + key + "' expects an integer, got '" + v + "'");
      }
    };
    auto as_bool = [&](const std::string& v) {
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError(where() + ": '" + key + "' expects true/false, got '" + v + "'");
    };

    if (key == "scheme") cfg.scheme = scheme_from_string(value);
    else if (key == "dimension") cfg.dimension = dimension_from_string(value);
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "lambda") cfg.lambda = as_double(value);
    else if (key == "tau") cfg.tau = as_double(value);
    else if (key == "pretrain_lr") cfg.pretrain_lr = as_double(value);
    else if (key == "classifier_lr") cfg.classifier_lr = as_double(value);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(as_int(value));
    else if (key == "pretrain_epochs") cfg.pretrain_epochs = static_cast<int>(as_int(value));
    else if (key == "classifier_epochs") cfg.classifier_epochs = static_cast<int>(as_int(value));
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_int(value));
    else if (key == "filters") cfg.filters = static_cast<int>(as_int(value));
    else if (key == "lrelu_slope") cfg.lrelu_slope = as_double(value);
    else if (key == "bn_momentum") cfg.bn_momentum = as_double(value);
    else if (key == "variant") cfg.variant = variant_from_string(value);
    else if (key == "ntxent_mean") cfg.ntxent_mean = as_bool(value);
    else if (key == "finetune_encoders") cfg.finetune_encoders = as_bool(value);
    else if (key == "jobs") cfg.jobs = static_cast<int>(as_int(value));
    else if (key == "save_checkpoints") cfg.save_checkpoints = as_bool(value);
    else if (key == "window_s") cfg.window_s = as_double(value);
    else if (key == "stride_s") cfg.stride_s = as_double(value);
    else if (key == "aug_jitter_sigma") cfg.augment.time.jitter_sigma_ratio = as_double(value);
    else if (key == "aug_scale_sigma") cfg.augment.time.scale_sigma = as_double(value);
    else if (key == "aug_shift_max_ratio") cfg.augment.time.shift_max_ratio = as_double(value);
    else if (key == "aug_keep_ratio") cfg.augment.time.keep_ratio = as_double(value);
    else if (key == "aug_remove_prob") cfg.augment.freq.remove_prob = as_double(value);
    else if (key == "aug_add_prob") cfg.augment.freq.add_prob = as_double(value);
    else if (key == "aug_add_amp") cfg.augment.freq.add_amp_ratio = as_double(value);
    else if (key == "synth_subjects") cfg.synth.n_subjects = static_cast<int>(as_int(value));
    else if (key == "synth_trials") cfg.synth.trials_per_subject = static_cast<int>(as_int(value));
    else if (key == "synth_channels") cfg.synth.channels = static_cast<int>(as_int(value));
    else if (key == "synth_samples") cfg.synth.segment_len = static_cast<int>(as_int(value));
    else if (key == "synth_segments_per_trial") cfg.synth.segments_per_trial = static_cast<int>(as_int(value));
    else if (key == "synth_seed") cfg.synth.seed = static_cast<std::uint64_t>(as_int(value));
    else if (key == "synth_cue_amp") cfg.synth.cue_amp = as_double(value);
    else if (key == "synth_noise_amp") cfg.synth.noise_amp = as_double(value);
    else if (key == "synth_mix") cfg.synth.mix = as_double(value);
    else throw ConfigError(where() + ": unknown key '" + key + "'");
  }
  return cfg;
}

}  // namespace cascade
