#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "cascade/config.hpp"
#include "cascade/model.hpp"
#include "cascade/objectives.hpp"

namespace cascade {

// Instrumentation shared by one training run: transform and augmentation call
// counts plus per-subject segment read counts (the LOSO purity evidence).
struct RunCounters {
  std::int64_t fft_calls = 0;
  std::int64_t augment_draws = 0;
  std::map<std::string, std::int64_t> subject_reads;

  std::int64_t reads_of(const std::string& subject) const;
  void merge(const RunCounters& other);
};

// Read-guarded view over a subset of a SegmentBatch. Every segment fetch is
// recorded against its subject, so protocol purity is checkable after the run.
class GuardedSegments {
 public:
  GuardedSegments(const SegmentBatch* data, std::vector<int> indices, RunCounters* counters);

  std::int64_t count() const { return static_cast<std::int64_t>(indices_.size()); }
  Tensor gather(const std::vector<int>& positions) const;  // [B,C,T]
  int label(int position) const;
  const std::string& subject(int position) const;
  int global_index(int position) const;
  const SegmentBatch& data() const { return *data_; }

 private:
  const SegmentBatch* data_;
  std::vector<int> indices_;
  RunCounters* counters_;
};

// One row of the training log (CSV). NaN fields are written empty.
struct LossRecord {
  std::string phase;  // "pretrain" | "finetune"
  int epoch = 0;
  int step = 0;
  LossReport losses;
  double cross_entropy = std::numeric_limits<double>::quiet_NaN();
};

ModelGeometry geometry_for(const SegmentBatch& data, const RunConfig& cfg);
ModelBundle build_model(const SegmentBatch& data, const RunConfig& cfg);
int representation_dim(const ModelGeometry& g, VariantId v);

// Frozen-encoder features per variant for a batch of raw segments.
Tensor extract_representation(const ModelBundle& model, const Tensor& x, VariantId v,
                              std::int64_t* fft_counter = nullptr);

struct PretrainOutput {
  std::vector<LossRecord> log;
  std::int64_t optimizer_steps = 0;
};

// Self-supervised stage. Wires the variant-specific objective; a no-op for
// base_model. Throws NumericError with a batch snapshot on NaN loss.
PretrainOutput pretrain(ModelBundle& model, const GuardedSegments& train, const RunConfig& cfg, std::uint64_t seed,
                        RunCounters& counters);

struct FinetuneOutput {
  std::vector<LossRecord> log;
  double train_accuracy_pct = 0.0;
  std::int64_t optimizer_steps = 0;
};

// Classifier stage on frozen-encoder features (base_model and the
// finetune_encoders flag train end to end instead).
FinetuneOutput finetune(ModelBundle& model, const GuardedSegments& labeled, const RunConfig& cfg, std::uint64_t seed,
                        RunCounters& counters);

double evaluate_accuracy(const ModelBundle& model, const GuardedSegments& segments, VariantId v,
                         RunCounters& counters);

struct SubjectResult {
  std::string subject;
  double accuracy_pct = 0.0;
};

struct LosoReport {
  std::vector<SubjectResult> per_subject;
  double mean_pct = 0.0;
  double std_pct = 0.0;  // population standard deviation
  std::string scheme, dimension, variant, config_hash;
  std::uint64_t seed = 0;
  double fraction = 1.0;  // labeled fraction used by the classifier stage

  void recompute_stats();
};

struct FoldArtifacts {
  std::string held_out;
  double accuracy_pct = 0.0;
  RunCounters train_counters;  // pretrain + finetune reads only
  RunCounters eval_counters;
  std::vector<LossRecord> log;
  Checkpoint checkpoint;
};

struct LosoOutput {
  LosoReport report;
  std::vector<FoldArtifacts> folds;
};

// Full leave-one-subject-out protocol for cfg.variant. Folds run in parallel
// when cfg.jobs > 1; per-fold seeds derive from (cfg.seed, held-out subject),
// so results do not depend on scheduling.
LosoOutput evaluate_loso(const SegmentBatch& data, const RunConfig& cfg);

struct LimitedLabelPoint {
  double fraction = 1.0;
  LosoReport report;
};

// One pretrain per fold, then one classifier per labeled fraction, matching
// the protocol where representation learning always sees all training data.
std::vector<LimitedLabelPoint> run_limited_label(const SegmentBatch& data, const RunConfig& cfg,
                                                 const std::vector<double>& fractions);

struct SeparabilityReport {
  double probe_accuracy_pct = 0.0;  // subject-held-out linear probe, mean over folds
  double silhouette = 0.0;          // mean silhouette over samples, class labels
  double subject_dispersion = 0.0;  // mean pairwise subject-centroid distance / mean spread
};

SeparabilityReport separability_metrics(const Tensor& features, const std::vector<int>& labels,
                                        const std::vector<std::string>& subject_ids);

}  // namespace cascade
