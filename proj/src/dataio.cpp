#include "cascade/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

namespace {

constexpr char kRecordingMagic[4] = {'E', 'E', 'G', 'R'};
constexpr double kTwoPi = 6.283185307179586476925286766559;

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

std::uint16_t read_u16(std::istream& is, const std::string& path, const char* field) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw DataError(path + ": truncated at field '" + field + "'");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const std::string& path, const char* field) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated at field '" + field + "'");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float read_f32(std::istream& is, const std::string& path, const char* field) {
  const std::uint32_t bits = read_u32(is, path, field);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string read_string(std::istream& is, const std::string& path, const char* field) {
  const std::uint16_t len = read_u16(is, path, field);
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw DataError(path + ": truncated at field '" + field + "'");
  return s;
}

void validate_label(double raw, Scheme scheme, const std::string& context) {
  const double lo = 1.0;
  const double hi = (scheme == Scheme::dreamer) ? 5.0 : 9.0;
  if (!(raw >= lo && raw <= hi)) {
    throw DataError(context + ": label " + std::to_string(raw) + " outside [" + std::to_string(lo) + "," +
                    std::to_string(hi) + "] for scheme " + to_string(scheme));
  }
}

}  // namespace

Scheme scheme_from_string(const std::string& s) {
  if (s == "deap") return Scheme::deap;
  if (s == "dreamer") return Scheme::dreamer;
  if (s == "synthetic") return Scheme::synthetic;
  throw ConfigError("unknown scheme: " + s);
}

Dimension dimension_from_string(const std::string& s) {
  if (s == "arousal") return Dimension::arousal;
  if (s == "valence") return Dimension::valence;
  throw ConfigError("unknown dimension: " + s);
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::deap: return "deap";
    case Scheme::dreamer: return "dreamer";
    case Scheme::synthetic: return "synthetic";
  }
  return "?";
}

const char* to_string(Dimension d) { return d == Dimension::arousal ? "arousal" : "valence"; }

void write_recording(const Recording& rec, const std::string& path) {
  if (rec.samples.rank() != 2) throw DataError("write_recording: samples must be [C,L]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(kRecordingMagic, 4);
  write_u32(os, 1);  // version
  write_u16(os, static_cast<std::uint16_t>(rec.subject_id.size()));
  os.write(rec.subject_id.data(), static_cast<std::streamsize>(rec.subject_id.size()));
  write_u16(os, static_cast<std::uint16_t>(rec.trial_id.size()));
  os.write(rec.trial_id.data(), static_cast<std::streamsize>(rec.trial_id.size()));
  write_u32(os, static_cast<std::uint32_t>(rec.samples.dim(0)));
  write_u32(os, static_cast<std::uint32_t>(rec.samples.dim(1)));
  write_u32(os, static_cast<std::uint32_t>(rec.sampling_rate));
  write_f32(os, static_cast<float>(rec.arousal_raw));
  write_f32(os, static_cast<float>(rec.valence_raw));
  for (std::int64_t i = 0; i < rec.samples.size(); ++i) write_f32(os, static_cast<float>(rec.samples[i]));
  if (!os) throw DataError("failed writing recording: " + path);
}

Recording read_recording(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open recording: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kRecordingMagic, 4) != 0) {
    throw DataError(path + ": bad magic in field 'magic'");
  }
  const std::uint32_t version = read_u32(is, path, "version");
  if (version != 1) throw DataError(path + ": unsupported version " + std::to_string(version));
  Recording rec;
  rec.subject_id = read_string(is, path, "subject_id");
  rec.trial_id = read_string(is, path, "trial_id");
  const std::uint32_t c = read_u32(is, path, "channels");
  const std::uint32_t l = read_u32(is, path, "length");
  rec.sampling_rate = static_cast<int>(read_u32(is, path, "rate"));
  rec.arousal_raw = static_cast<double>(read_f32(is, path, "arousal"));
  rec.valence_raw = static_cast<double>(read_f32(is, path, "valence"));
  if (c == 0 || l == 0 || c > 4096) throw DataError(path + ": implausible dimensions in field 'channels/length'");
  rec.samples = Tensor({static_cast<int>(c), static_cast<int>(l)});
  for (std::int64_t i = 0; i < rec.samples.size(); ++i) {
    rec.samples[i] = static_cast<double>(read_f32(is, path, "samples"));
  }
  return rec;
}

void write_descriptor(const DatasetDescriptor& desc, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "format = cascade-dataset\n";
  os << "version = 1\n";
  os << "scheme = " << to_string(desc.scheme) << "\n";
  for (const auto& p : desc.recording_paths) os << "recording = " << p << "\n";
  if (!os) throw DataError("failed writing descriptor: " + path);
}

DatasetDescriptor read_descriptor(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open descriptor: " + path);
  DatasetDescriptor desc;
  bool format_seen = false, scheme_seen = false;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "format") {
      if (value != "cascade-dataset") throw DataError(path + ": unknown format '" + value + "'");
      format_seen = true;
    } else if (key == "version") {
      if (value != "1") throw DataError(path + ": unsupported descriptor version " + value);
    } else if (key == "scheme") {
      desc.scheme = scheme_from_string(value);
      scheme_seen = true;
    } else if (key == "recording") {
      desc.recording_paths.push_back(value);
    } else {
      throw DataError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (!format_seen) throw DataError(path + ": missing 'format' field");
  if (!scheme_seen) throw DataError(path + ": missing 'scheme' field");
  if (desc.recording_paths.empty()) throw DataError(path + ": no recordings listed");
  return desc;
}

std::vector<Recording> ingest(const std::string& descriptor_path) {
  const DatasetDescriptor desc = read_descriptor(descriptor_path);
  const auto base = std::filesystem::path(descriptor_path).parent_path();
  std::vector<Recording> out;
  out.reserve(desc.recording_paths.size());
  for (const auto& rel : desc.recording_paths) {
    const auto full = (base / rel).string();
    Recording rec = read_recording(full);
    if (rec.sampling_rate != kRequiredRate) {
      throw DataError(full + ": field 'rate' is " + std::to_string(rec.sampling_rate) + " Hz; this engine ingests " +
                      std::to_string(kRequiredRate) + " Hz data only");
    }
    if (!rec.samples.all_finite()) throw DataError(full + ": field 'samples' contains non-finite values");
    validate_label(rec.arousal_raw, desc.scheme, full + ": field 'arousal'");
    validate_label(rec.valence_raw, desc.scheme, full + ": field 'valence'");
    out.push_back(std::move(rec));
  }
  return out;
}

int binarize_label(double raw, Scheme scheme) {
  validate_label(raw, scheme, "binarize_label");
  const double threshold = (scheme == Scheme::dreamer) ? 3.0 : 5.0;
  return raw > threshold ? 1 : 0;
}

std::vector<Segment> segment(const Recording& rec, double window_s, double stride_s, bool zscore) {
  const int c = rec.samples.dim(0);
  const int l = rec.samples.dim(1);
  const int w = static_cast<int>(std::lround(window_s * rec.sampling_rate));
  const int s = static_cast<int>(std::lround(stride_s * rec.sampling_rate));
  if (w <= 0 || s <= 0) throw DataError("segment: window and stride must be positive");
  std::vector<Segment> out;
  if (w > l) {
    std::cerr << "warning: window of " << w << " samples exceeds trial " << rec.subject_id << "/" << rec.trial_id
              << " length " << l << "; no segments produced\n";
    return out;
  }
  for (int off = 0; off + w <= l; off += s) {
    Segment seg;
    seg.offset = off;
    seg.values = Tensor({c, w});
    for (int ci = 0; ci < c; ++ci) {
      const double* src = rec.samples.data() + static_cast<std::int64_t>(ci) * l + off;
      double* dst = seg.values.data() + static_cast<std::int64_t>(ci) * w;
      std::copy(src, src + w, dst);
      if (zscore) {
        double mean = 0.0;
        for (int i = 0; i < w; ++i) mean += dst[i];
        mean /= w;
        double var = 0.0;
        for (int i = 0; i < w; ++i) {
          const double d = dst[i] - mean;
          var += d * d;
        }
        const double sd = std::sqrt(var / w);
        if (sd < 1e-12) {
          for (int i = 0; i < w; ++i) dst[i] = 0.0;
        } else {
          for (int i = 0; i < w; ++i) dst[i] = (dst[i] - mean) / sd;
        }
      }
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void SegmentBatch::copy_segment(std::int64_t i, double* dst) const {
  const std::int64_t n = static_cast<std::int64_t>(channels()) * segment_len();
  const double* src = values.data() + i * n;
  std::copy(src, src + n, dst);
}

SegmentBatch build_segments(const std::vector<Recording>& recordings, double window_s, double stride_s,
                            Dimension dimension, Scheme scheme) {
  std::vector<const Recording*> sorted;
  sorted.reserve(recordings.size());
  for (const auto& r : recordings) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const Recording* a, const Recording* b) {
    if (a->subject_id != b->subject_id) return a->subject_id < b->subject_id;
    return a->trial_id < b->trial_id;
  });

  SegmentBatch batch;
  batch.dimension = dimension;
  int c = -1, t = -1;
  std::vector<Tensor> values;
  for (const Recording* rec : sorted) {
    if (c < 0) {
      c = rec->samples.dim(0);
    } else if (rec->samples.dim(0) != c) {
      throw DataError("build_segments: channel count mismatch between recordings (" + std::to_string(c) + " vs " +
                      std::to_string(rec->samples.dim(0)) + ")");
    }
    const double raw = dimension == Dimension::arousal ? rec->arousal_raw : rec->valence_raw;
    const int label = binarize_label(raw, scheme);
    for (auto& seg : segment(*rec, window_s, stride_s)) {
      if (t < 0) t = seg.values.dim(1);
      values.push_back(std::move(seg.values));
      batch.subject_ids.push_back(rec->subject_id);
      batch.trial_ids.push_back(rec->trial_id);
      batch.labels.push_back(label);
    }
  }
  if (values.empty()) throw DataError("build_segments: no segments produced");
  batch.values = Tensor({static_cast<int>(values.size()), c, t});
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::copy(values[i].data(), values[i].data() + values[i].size(),
              batch.values.data() + static_cast<std::int64_t>(i) * c * t);
  }
  return batch;
}

std::vector<LosoSplit> make_loso_splits(const SegmentBatch& batch) {
  std::vector<std::string> subjects;
  for (const auto& s : batch.subject_ids) {
    if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
  }
  std::sort(subjects.begin(), subjects.end());
  if (subjects.size() < 2) {
    throw DataError("make_loso_splits: leave-one-subject-out needs >= 2 subjects, got " +
                    std::to_string(subjects.size()));
  }
  std::vector<LosoSplit> splits;
  for (const auto& subject : subjects) {
    LosoSplit split;
    split.held_out_subject = subject;
    for (int i = 0; i < static_cast<int>(batch.count()); ++i) {
      if (batch.subject_ids[static_cast<std::size_t>(i)] == subject) {
        split.test_indices.push_back(i);
      } else {
        split.train_indices.push_back(i);
      }
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<Recording> synth_generate(const SynthParams& p) {
  if (p.channels % 2 != 0) throw ConfigError("synth_generate: channel count must be even");
  if (p.n_subjects < 1 || p.trials_per_subject < 1) throw ConfigError("synth_generate: empty dataset requested");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int c = p.channels;
  const int l = p.segment_len * p.segments_per_trial;
  const int half = c / 2;
  std::vector<Recording> out;
  out.reserve(static_cast<std::size_t>(p.n_subjects) * p.trials_per_subject);

  for (int s = 0; s < p.n_subjects; ++s) {
    // subject-level confounds
    const double rho = 0.80 + 0.15 * unit(rng);
    std::vector<double> gain(static_cast<std::size_t>(c));
    for (int ci = 0; ci < c; ++ci) gain[static_cast<std::size_t>(ci)] = std::exp(std::log(0.6) + unit(rng) * (std::log(1.6) - std::log(0.6)));
    std::vector<double> mixmat(static_cast<std::size_t>(c) * c, 0.0);
    const double offdiag = p.mix / std::sqrt(static_cast<double>(c));
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) {
        mixmat[static_cast<std::size_t>(i) * c + j] = (i == j ? (1.0 - p.mix) : 0.0) + offdiag * gauss(rng);
      }
    }

    for (int tr = 0; tr < p.trials_per_subject; ++tr) {
      const int label = tr % 2;
      const double flo = label ? p.band_low1 : p.band_low0;
      const double fhi = label ? p.band_high1 : p.band_high0;
      // shared cue waveform: three sinusoids inside the class band
      std::vector<double> cue(static_cast<std::size_t>(l), 0.0);
      for (int j = 0; j < 3; ++j) {
        const double f = flo + (fhi - flo) * unit(rng);
        const double phase = kTwoPi * unit(rng);
        const double amp = 0.7 + 0.6 * unit(rng);
        for (int i = 0; i < l; ++i) {
          cue[static_cast<std::size_t>(i)] += amp * std::sin(kTwoPi * f * i / kRequiredRate + phase);
        }
      }
      // hemisphere-asymmetric placement: label 1 favors the first half of the rows
      std::vector<double> weight(static_cast<std::size_t>(c));
      for (int ci = 0; ci < c; ++ci) {
        const bool strong = label ? (ci < half) : (ci >= half);
        weight[static_cast<std::size_t>(ci)] = (strong ? 1.0 : 0.25) * (0.8 + 0.4 * unit(rng));
      }
      // sources = cue + AR(1) noise floor
      std::vector<double> source(static_cast<std::size_t>(c) * l);
      for (int ci = 0; ci < c; ++ci) {
        double n = 0.0;
        double* row = source.data() + static_cast<std::int64_t>(ci) * l;
        for (int i = 0; i < l; ++i) {
          n = rho * n + gauss(rng);
          row[i] = p.cue_amp * weight[static_cast<std::size_t>(ci)] * cue[static_cast<std::size_t>(i)] +
                   p.noise_amp * n;
        }
      }
      Recording rec;
      rec.subject_id = "s" + std::string(s < 10 ? "0" : "") + std::to_string(s);
      rec.trial_id = "t" + std::string(tr < 10 ? "0" : "") + std::to_string(tr);
      rec.sampling_rate = kRequiredRate;
      rec.arousal_raw = label ? 8.0 : 2.0;
      rec.valence_raw = rec.arousal_raw;
      rec.samples = Tensor({c, l});
      for (int i = 0; i < c; ++i) {
        double* dst = rec.samples.data() + static_cast<std::int64_t>(i) * l;
        for (int j = 0; j < c; ++j) {
          const double m = mixmat[static_cast<std::size_t>(i) * c + j];
          if (m == 0.0) continue;
          const double* src = source.data() + static_cast<std::int64_t>(j) * l;
          for (int k = 0; k < l; ++k) dst[k] += m * src[k];
        }
        for (int k = 0; k < l; ++k) dst[k] *= gain[static_cast<std::size_t>(i)];
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<int> limited_label_subsample(const SegmentBatch& batch, double fraction, std::uint64_t seed) {
  std::vector<int> all(static_cast<std::size_t>(batch.count()));
  for (int i = 0; i < static_cast<int>(batch.count()); ++i) all[static_cast<std::size_t>(i)] = i;
  return limited_label_subsample(batch, all, fraction, seed);
}

std::vector<int> limited_label_subsample(const SegmentBatch& batch, const std::vector<int>& candidates,
                                         double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("limited_label_subsample: fraction must be in (0,1]");
  // strata in first-occurrence order keeps the draw sequence stable
  std::vector<std::pair<std::string, std::string>> strata;
  std::map<std::pair<std::string, std::string>, std::vector<int>> members;
  for (int i : candidates) {
    auto key = std::make_pair(batch.subject_ids[static_cast<std::size_t>(i)],
                              batch.trial_ids[static_cast<std::size_t>(i)]);
    auto it = members.find(key);
    if (it == members.end()) {
      strata.push_back(key);
      members[key] = {i};
    } else {
      it->second.push_back(i);
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<int> selected;
  for (const auto& key : strata) {
    auto idx = members[key];
    const int n = static_cast<int>(idx.size());
    int k = static_cast<int>(std::floor(fraction * n + 0.5));  // round half-up
    k = std::max(1, std::min(k, n));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int i = 0; i < k; ++i) selected.push_back(idx[static_cast<std::size_t>(i)]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace cascade
