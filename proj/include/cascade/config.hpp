#pragma once

#include <cstdint>
#include <string>

#include "cascade/augment.hpp"
#include "cascade/dataio.hpp"

namespace cascade {

enum class VariantId { full, tt_recon, no_recon, single_time_stream, base_model, tfr_only };

VariantId variant_from_string(const std::string& s);
const char* to_string(VariantId v);

// Run configuration parsed from a flat key-value file. Unknown keys are hard
// errors; unset keys take scheme-dependent defaults.
struct RunConfig {
  Scheme scheme = Scheme::synthetic;
  Dimension dimension = Dimension::arousal;
  std::string dataset;  // path to a dataset descriptor file

  double lambda = 0.1;
  double tau = 0.07;
  double pretrain_lr = 0.0;    // 0 = scheme default (deap 1e-4, dreamer 8e-5, synthetic 1e-3)
  double classifier_lr = 0.0;  // 0 = scheme default (deap/dreamer 1e-5, synthetic 1e-3)
  int batch_size = 128;
  int pretrain_epochs = 40;
  int classifier_epochs = 100;
  std::uint64_t seed = 1;
  int filters = 16;
  double lrelu_slope = 0.01;
  double bn_momentum = 0.1;
  VariantId variant = VariantId::full;
  bool ntxent_mean = false;       // use per-anchor mean instead of the anchor sum
  bool finetune_encoders = false; // default freeze; joint fine-tuning behind this flag
  int jobs = 1;
  bool save_checkpoints = true;
  double window_s = 0.0;  // 0 = scheme default (deap 4/4, dreamer 9/1, synthetic T/rate both)
  double stride_s = 0.0;

  AugmentPolicy augment;

  // synthetic generator knobs (gen-synth)
  SynthParams synth;

  double effective_pretrain_lr() const;
  double effective_classifier_lr() const;
  double effective_window_s() const;
  double effective_stride_s() const;

  void validate() const;

  // Canonical "key = value" serialization (sorted keys) used for hashing.
  std::string canonical_string() const;
  std::string config_hash() const;  // 16 hex chars, FNV-1a over the canonical form
};

RunConfig load_config(const std::string& path);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace cascade
