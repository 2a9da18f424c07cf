#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "cascade/dataio.hpp"
#include "cascade/error.hpp"
#include "cascade/spectrum.hpp"
#include "oracles.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Recording random_recording(std::mt19937_64& rng, int c = 2, int l = 256) {
  Recording rec;
  rec.subject_id = "s00";
  rec.trial_id = "t00";
  rec.sampling_rate = 128;
  rec.arousal_raw = 7.0;
  rec.valence_raw = 3.0;
  rec.samples = oracles::random_tensor({c, l}, rng, 20.0);
  return rec;
}

}  // namespace

TEST_CASE("recording round-trip is bitwise lossless at 32-bit") {
  std::mt19937_64 rng(71);
  auto dir = temp_dir("cascade_dataio_rt");
  Recording rec = random_recording(rng);
  // quantize to f32 first so the round-trip comparison is exact
  for (std::int64_t i = 0; i < rec.samples.size(); ++i) {
    rec.samples[i] = static_cast<double>(static_cast<float>(rec.samples[i]));
  }
  const auto path = (dir / "rec.eegr").string();
  write_recording(rec, path);
  Recording back = read_recording(path);
  CHECK(back.subject_id == rec.subject_id);
  CHECK(back.trial_id == rec.trial_id);
  CHECK(back.sampling_rate == 128);
  CHECK(back.arousal_raw == rec.arousal_raw);
  CHECK(back.valence_raw == rec.valence_raw);
  REQUIRE(back.samples.same_shape(rec.samples));
  for (std::int64_t i = 0; i < rec.samples.size(); ++i) CHECK(back.samples[i] == rec.samples[i]);
}

TEST_CASE("minimal valid descriptor ingests one recording") {
  std::mt19937_64 rng(72);
  auto dir = temp_dir("cascade_dataio_ok");
  write_recording(random_recording(rng), (dir / "rec.eegr").string());
  DatasetDescriptor desc;
  desc.scheme = Scheme::deap;
  desc.recording_paths = {"rec.eegr"};
  write_descriptor(desc, (dir / "d.desc").string());
  auto recs = ingest((dir / "d.desc").string());
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].samples.dim(0) == 2);
  CHECK(recs[0].samples.dim(1) == 256);
}

TEST_CASE("truncated payload raises an ingestion error naming the file") {
  std::mt19937_64 rng(73);
  auto dir = temp_dir("cascade_dataio_trunc");
  const auto path = (dir / "rec.eegr").string();
  write_recording(random_recording(rng), path);
  const auto size = fs::file_size(path);
  fs::resize_file(path, size - 10);
  DatasetDescriptor desc;
  desc.scheme = Scheme::deap;
  desc.recording_paths = {"rec.eegr"};
  write_descriptor(desc, (dir / "d.desc").string());
  CHECK_THROWS_WITH_AS(ingest((dir / "d.desc").string()), doctest::Contains("rec.eegr"), DataError);
}

TEST_CASE("wrong sampling rate and out-of-scale labels are rejected") {
  std::mt19937_64 rng(74);
  auto dir = temp_dir("cascade_dataio_rate");
  Recording rec = random_recording(rng);
  rec.sampling_rate = 512;
  write_recording(rec, (dir / "rec.eegr").string());
  DatasetDescriptor desc;
  desc.scheme = Scheme::deap;
  desc.recording_paths = {"rec.eegr"};
  write_descriptor(desc, (dir / "d.desc").string());
  CHECK_THROWS_AS(ingest((dir / "d.desc").string()), DataError);

  Recording bad = random_recording(rng);
  bad.arousal_raw = 11.0;
  write_recording(bad, (dir / "rec.eegr").string());
  CHECK_THROWS_WITH_AS(ingest((dir / "d.desc").string()), doctest::Contains("arousal"), DataError);
}

TEST_CASE("label binarization thresholds and monotonicity") {
  CHECK(binarize_label(5.0, Scheme::deap) == 0);
  CHECK(binarize_label(5.01, Scheme::deap) == 1);
  CHECK(binarize_label(9.0, Scheme::deap) == 1);
  CHECK(binarize_label(1.0, Scheme::deap) == 0);
  CHECK(binarize_label(3.0, Scheme::dreamer) == 0);
  CHECK(binarize_label(4.0, Scheme::dreamer) == 1);
  CHECK_THROWS_AS(binarize_label(0.5, Scheme::deap), DataError);
  CHECK_THROWS_AS(binarize_label(6.0, Scheme::dreamer), DataError);
  int prev = 0;
  for (double raw = 1.0; raw <= 9.0; raw += 0.25) {
    const int lab = binarize_label(raw, Scheme::deap);
    CHECK(lab >= prev);
    prev = lab;
  }
}

TEST_CASE("segmentation: window/stride arithmetic") {
  std::mt19937_64 rng(75);
  Recording rec = random_recording(rng, 2, 1024);  // 8 s at 128 Hz
  auto segs = segment(rec, 4.0, 4.0);
  CHECK(segs.size() == 2);
  CHECK(segs[0].offset == 0);
  CHECK(segs[1].offset == 512);

  // shortest DREAMER clip: 63 s, 9 s window, 1 s slide -> 55 segments
  Recording longrec = random_recording(rng, 2, 63 * 128);
  CHECK(segment(longrec, 9.0, 1.0).size() == 55);

  // count formula floor((L-W)/S)+1 across cases
  for (auto [l, w, s] : {std::array<int, 3>{1000, 128, 64}, {777, 128, 128}, {500, 250, 100}}) {
    Recording r2 = random_recording(rng, 1, l);
    const auto got = segment(r2, w / 128.0, s / 128.0).size();
    CHECK(static_cast<int>(got) == (l - w) / s + 1);
  }

  // window longer than trial: empty with warning
  Recording tiny = random_recording(rng, 2, 100);
  CHECK(segment(tiny, 4.0, 4.0).empty());
}

TEST_CASE("segmentation applies per-segment per-channel z-score") {
  std::mt19937_64 rng(76);
  Recording rec = random_recording(rng, 3, 512);
  for (auto& seg : segment(rec, 1.0, 1.0)) {
    const int t = seg.values.dim(1);
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0, var = 0.0;
      for (int i = 0; i < t; ++i) mean += seg.values[static_cast<std::int64_t>(c) * t + i];
      mean /= t;
      for (int i = 0; i < t; ++i) {
        const double d = seg.values[static_cast<std::int64_t>(c) * t + i] - mean;
        var += d * d;
      }
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::sqrt(var / t) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("LOSO splits partition the data once per subject") {
  SynthParams p;
  p.n_subjects = 3;
  p.trials_per_subject = 2;
  p.channels = 4;
  p.segment_len = 32;
  p.segments_per_trial = 2;
  auto recs = synth_generate(p);
  auto batch = build_segments(recs, 0.25, 0.25, Dimension::arousal, Scheme::synthetic);
  auto splits = make_loso_splits(batch);
  REQUIRE(splits.size() == 3);
  std::set<int> all_test;
  for (const auto& split : splits) {
    for (int i : split.test_indices) {
      CHECK(batch.subject_ids[static_cast<std::size_t>(i)] == split.held_out_subject);
      CHECK(all_test.insert(i).second);  // each segment tested exactly once
    }
    for (int i : split.train_indices) {
      CHECK(batch.subject_ids[static_cast<std::size_t>(i)] != split.held_out_subject);
    }
    CHECK(split.train_indices.size() + split.test_indices.size() == static_cast<std::size_t>(batch.count()));
  }
  CHECK(static_cast<std::int64_t>(all_test.size()) == batch.count());

  // single subject: protocol error
  SynthParams solo = p;
  solo.n_subjects = 1;
  auto solo_batch = build_segments(synth_generate(solo), 0.25, 0.25, Dimension::arousal, Scheme::synthetic);
  CHECK_THROWS_AS(make_loso_splits(solo_batch), DataError);

  // one split per subject at benchmark scale (32 subjects)
  SynthParams wide = p;
  wide.n_subjects = 32;
  wide.trials_per_subject = 1;
  wide.channels = 2;
  wide.segment_len = 16;
  wide.segments_per_trial = 1;
  auto wide_batch = build_segments(synth_generate(wide), 0.125, 0.125, Dimension::arousal, Scheme::synthetic);
  CHECK(make_loso_splits(wide_batch).size() == 32);
}

TEST_CASE("synthetic generator: determinism and per-subject label balance") {
  SynthParams p;
  p.n_subjects = 4;
  p.trials_per_subject = 5;
  p.channels = 6;
  p.segment_len = 64;
  p.seed = 123;
  auto a = synth_generate(p);
  auto b = synth_generate(p);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].subject_id == b[i].subject_id);
    CHECK(oracles::max_abs_diff(a[i].samples, b[i].samples) == 0.0);
  }
  std::map<std::string, std::pair<int, int>> balance;
  for (const auto& rec : a) {
    auto& [lo, hi] = balance[rec.subject_id];
    (binarize_label(rec.arousal_raw, Scheme::synthetic) ? hi : lo) += 1;
  }
  for (const auto& [subj, counts] : balance) {
    CHECK(std::abs(counts.first - counts.second) <= 1);
  }
}

TEST_CASE("synthetic cue is spectral: band-power probe beats raw probe across subjects") {
  SynthParams p;
  p.n_subjects = 6;
  p.trials_per_subject = 6;
  p.channels = 8;
  p.segment_len = 128;
  p.segments_per_trial = 2;
  p.seed = 7;
  auto recs = synth_generate(p);
  auto batch = build_segments(recs, 1.0, 1.0, Dimension::arousal, Scheme::synthetic);
  const int n = static_cast<int>(batch.count());
  const int c = batch.channels(), t = batch.segment_len();

  // oracle band-power features: per-channel mean magnitude in the two class bands
  auto subject_of = [&](int i) { return batch.subject_ids[static_cast<std::size_t>(i)]; };
  Tensor band_feats({n, 2 * c});
  Tensor raw_feats({n, c * t});
  for (int i = 0; i < n; ++i) {
    Tensor seg({c, t});
    batch.copy_segment(i, seg.data());
    std::copy(seg.data(), seg.data() + seg.size(), raw_feats.data() + static_cast<std::int64_t>(i) * c * t);
    auto spec = compute_spectrum(seg);
    for (int ci = 0; ci < c; ++ci) {
      double band0 = 0.0, band1 = 0.0;
      for (int k = 1; k <= t / 2; ++k) {
        const double hz = 128.0 * k / t;
        const double v = spec[static_cast<std::int64_t>(ci) * t + k];
        if (hz >= 10.0 && hz <= 14.0) band0 += v;
        if (hz >= 4.0 && hz <= 8.0) band1 += v;
      }
      band_feats[static_cast<std::int64_t>(i) * 2 * c + ci] = band0;
      band_feats[static_cast<std::int64_t>(i) * 2 * c + c + ci] = band1;
    }
  }

  // nearest-centroid probe per held-out subject (simple, deterministic)
  auto probe = [&](const Tensor& feats) {
    int correct = 0, total = 0;
    const int d = feats.dim(1);
    std::set<std::string> subjects(batch.subject_ids.begin(), batch.subject_ids.end());
    for (const auto& held : subjects) {
      std::vector<double> mu0(static_cast<std::size_t>(d), 0.0), mu1(static_cast<std::size_t>(d), 0.0);
      int n0 = 0, n1 = 0;
      for (int i = 0; i < n; ++i) {
        if (subject_of(i) == held) continue;
        const double* row = feats.data() + static_cast<std::int64_t>(i) * d;
        if (batch.labels[static_cast<std::size_t>(i)] == 0) {
          for (int j = 0; j < d; ++j) mu0[static_cast<std::size_t>(j)] += row[j];
          ++n0;
        } else {
          for (int j = 0; j < d; ++j) mu1[static_cast<std::size_t>(j)] += row[j];
          ++n1;
        }
      }
      for (int j = 0; j < d; ++j) {
        mu0[static_cast<std::size_t>(j)] /= std::max(1, n0);
        mu1[static_cast<std::size_t>(j)] /= std::max(1, n1);
      }
      for (int i = 0; i < n; ++i) {
        if (subject_of(i) != held) continue;
        const double* row = feats.data() + static_cast<std::int64_t>(i) * d;
        double d0 = 0.0, d1 = 0.0;
        for (int j = 0; j < d; ++j) {
          d0 += (row[j] - mu0[static_cast<std::size_t>(j)]) * (row[j] - mu0[static_cast<std::size_t>(j)]);
          d1 += (row[j] - mu1[static_cast<std::size_t>(j)]) * (row[j] - mu1[static_cast<std::size_t>(j)]);
        }
        const int pred = d1 < d0 ? 1 : 0;
        correct += pred == batch.labels[static_cast<std::size_t>(i)] ? 1 : 0;
        ++total;
      }
    }
    return 100.0 * correct / total;
  };

  const double raw_acc = probe(raw_feats);
  const double band_acc = probe(band_feats);
  CHECK(band_acc > raw_acc);
  CHECK(band_acc > 75.0);  // the spectral cue is strong
}

TEST_CASE("limited-label subsampling is stratified per (subject, trial)") {
  SynthParams p;
  p.n_subjects = 3;
  p.trials_per_subject = 4;
  p.channels = 4;
  p.segment_len = 32;
  p.segments_per_trial = 10;
  auto batch = build_segments(synth_generate(p), 0.25, 0.25, Dimension::arousal, Scheme::synthetic);

  auto all = limited_label_subsample(batch, 1.0, 5);
  CHECK(static_cast<std::int64_t>(all.size()) == batch.count());

  for (double fraction : {0.2, 0.4, 0.6, 0.8}) {
    auto keep = limited_label_subsample(batch, fraction, 5);
    std::map<std::pair<std::string, std::string>, std::pair<int, int>> strata;  // kept, total
    for (int i = 0; i < static_cast<int>(batch.count()); ++i) {
      auto key = std::make_pair(batch.subject_ids[static_cast<std::size_t>(i)],
                                batch.trial_ids[static_cast<std::size_t>(i)]);
      strata[key].second += 1;
    }
    for (int i : keep) {
      auto key = std::make_pair(batch.subject_ids[static_cast<std::size_t>(i)],
                                batch.trial_ids[static_cast<std::size_t>(i)]);
      strata[key].first += 1;
    }
    for (const auto& [key, counts] : strata) {
      CHECK(std::abs(counts.first - fraction * counts.second) <= 1.0);
      CHECK(counts.first >= 1);
    }
  }

  // 10 segments per stratum at 0.2 -> exactly 2 kept
  auto keep2 = limited_label_subsample(batch, 0.2, 9);
  CHECK(keep2.size() == 3 * 4 * 2);

  CHECK_THROWS_AS(limited_label_subsample(batch, 0.0, 1), ConfigError);
}

TEST_CASE("build_segments orders by subject, trial, offset and binarizes labels") {
  SynthParams p;
  p.n_subjects = 2;
  p.trials_per_subject = 2;
  p.channels = 4;
  p.segment_len = 32;
  p.segments_per_trial = 2;
  auto batch = build_segments(synth_generate(p), 0.25, 0.25, Dimension::valence, Scheme::synthetic);
  CHECK(batch.count() == 8);
  for (std::int64_t i = 1; i < batch.count(); ++i) {
    const auto a = std::make_pair(batch.subject_ids[static_cast<std::size_t>(i - 1)],
                                  batch.trial_ids[static_cast<std::size_t>(i - 1)]);
    const auto b = std::make_pair(batch.subject_ids[static_cast<std::size_t>(i)],
                                  batch.trial_ids[static_cast<std::size_t>(i)]);
    CHECK(a <= b);
  }
  for (int lab : batch.labels) CHECK((lab == 0 || lab == 1));
}
