#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/tensor.hpp"

namespace cascade {

enum class Scheme { deap, dreamer, synthetic };
enum class Dimension { arousal, valence };

Scheme scheme_from_string(const std::string& s);
Dimension dimension_from_string(const std::string& s);
const char* to_string(Scheme s);
const char* to_string(Dimension d);

// One trial of one subject at 128 Hz, channels in hemisphere-contiguous order
// (rows 0..C/2-1 one hemisphere, C/2..C-1 the other).
struct Recording {
  std::string subject_id;
  std::string trial_id;
  Tensor samples;  // [C,L]
  int sampling_rate = 128;
  double arousal_raw = 0.0;
  double valence_raw = 0.0;
};

constexpr int kRequiredRate = 128;

// --- portable on-disk format (see docs/FORMATS.md) --------------------------
void write_recording(const Recording& rec, const std::string& path);
Recording read_recording(const std::string& path);

struct DatasetDescriptor {
  Scheme scheme = Scheme::synthetic;
  std::vector<std::string> recording_paths;  // resolved relative to the descriptor
};

void write_descriptor(const DatasetDescriptor& desc, const std::string& path);
DatasetDescriptor read_descriptor(const std::string& path);

// Loads and validates every recording listed by a descriptor file.
// Rejects rate != 128 Hz, non-finite samples, and out-of-scale labels.
std::vector<Recording> ingest(const std::string& descriptor_path);

// --- labels ------------------------------------------------------------------
// deap (and synthetic): raw in [1,9], high iff raw > 5.
// dreamer: raw in [1,5], high iff raw > 3.
int binarize_label(double raw, Scheme scheme);

// --- segmentation -------------------------------------------------------------
struct Segment {
  int offset = 0;  // start sample within the trial
  Tensor values;   // [C,T], z-scored per channel when requested
};

// Windows at offsets 0, stride, 2*stride, ... fully inside the trial.
// Returns empty (with a stderr warning) when the window exceeds the trial.
std::vector<Segment> segment(const Recording& rec, double window_s, double stride_s, bool zscore = true);

struct SegmentBatch {
  Tensor values;  // [N,C,T]
  std::vector<std::string> subject_ids;
  std::vector<std::string> trial_ids;
  std::vector<int> labels;
  Dimension dimension = Dimension::arousal;

  std::int64_t count() const { return static_cast<std::int64_t>(subject_ids.size()); }
  int channels() const { return values.rank() == 3 ? values.dim(1) : 0; }
  int segment_len() const { return values.rank() == 3 ? values.dim(2) : 0; }
  // Copies segment i into dst (C*T doubles).
  void copy_segment(std::int64_t i, double* dst) const;
};

// Segments every recording; output ordered by (subject_id, trial_id, offset).
SegmentBatch build_segments(const std::vector<Recording>& recordings, double window_s, double stride_s,
                            Dimension dimension, Scheme scheme);

// --- LOSO splits ---------------------------------------------------------------
struct LosoSplit {
  std::string held_out_subject;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

// One split per distinct subject, sorted by subject id. Requires >= 2 subjects.
std::vector<LosoSplit> make_loso_splits(const SegmentBatch& batch);

// --- synthetic generator ---------------------------------------------------------
struct SynthParams {
  int n_subjects = 8;
  int trials_per_subject = 6;
  int channels = 8;
  int segment_len = 128;      // T; trials are segments_per_trial * T samples long
  int segments_per_trial = 3;
  std::uint64_t seed = 7;

  // class cue: band-limited oscillations, hemisphere-asymmetric placement
  double cue_amp = 1.2;
  double noise_amp = 1.0;
  double mix = 0.35;                 // subject channel-mixing strength
  double band_low0 = 10.0, band_high0 = 14.0;  // label-0 band (Hz)
  double band_low1 = 4.0, band_high1 = 8.0;    // label-1 band (Hz)
};

// Class-conditional multi-subject EEG-like data: the class cue is which band
// carries elevated oscillatory power (hemisphere-asymmetric placement), while
// each subject confounds raw amplitudes with its own channel mixing matrix,
// per-channel gains, and AR(1) noise floor.
std::vector<Recording> synth_generate(const SynthParams& params);

// --- limited-label subsampling -----------------------------------------------------
// Stratified per (subject, trial): keeps round-half-up(fraction * n) segments,
// at least one per non-empty stratum. Returns sorted indices into `batch`.
std::vector<int> limited_label_subsample(const SegmentBatch& batch, double fraction, std::uint64_t seed);

// Same, restricted to the given candidate indices (e.g. one LOSO train side).
std::vector<int> limited_label_subsample(const SegmentBatch& batch, const std::vector<int>& candidates,
                                         double fraction, std::uint64_t seed);

}  // namespace cascade
