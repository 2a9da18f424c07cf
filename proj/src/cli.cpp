#include "cascade/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "cascade/error.hpp"
#include "cascade/pipeline.hpp"
#include "cascade/validate.hpp"

namespace cascade::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fraction_suffix(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_f%.2f", fraction);
  return buf;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << content;
  if (!os) throw DataError("failed writing: " + path);
}

ordered_json report_to_json(const LosoReport& report) {
  ordered_json j;
  j["config_hash"] = report.config_hash;
  j["scheme"] = report.scheme;
  j["dimension"] = report.dimension;
  j["variant"] = report.variant;
  j["seed"] = report.seed;
  j["fraction"] = report.fraction;
  j["n_subjects"] = report.per_subject.size();
  ordered_json subjects = ordered_json::array();
  for (const auto& s : report.per_subject) {
    subjects.push_back({{"subject", s.subject}, {"accuracy_pct", s.accuracy_pct}});
  }
  j["per_subject"] = subjects;
  j["mean_accuracy_pct"] = report.mean_pct;
  j["std_accuracy_pct"] = report.std_pct;
  return j;
}

std::string per_subject_csv(const LosoReport& report) {
  std::string csv = "subject,accuracy_pct\n";
  for (const auto& s : report.per_subject) csv += s.subject + "," + num(s.accuracy_pct) + "\n";
  return csv;
}

std::string loss_log_csv(const std::vector<FoldArtifacts>& folds) {
  std::string csv = "fold,phase,epoch,step,l_recon,l_con_t,l_con_f,l_con_t_mean,l_con_f_mean,joint,cross_entropy\n";
  auto cell = [](double v) { return std::isnan(v) ? std::string() : std::string(num(v)); };
  for (const auto& fold : folds) {
    for (const auto& r : fold.log) {
      const bool pre = r.phase == "pretrain";
      csv += fold.held_out + "," + r.phase + "," + std::to_string(r.epoch) + "," + std::to_string(r.step) + ",";
      csv += (pre ? cell(r.losses.l_recon) : "") + ",";
      csv += (pre ? cell(r.losses.l_con_t) : "") + ",";
      csv += (pre ? cell(r.losses.l_con_f) : "") + ",";
      csv += (pre ? cell(r.losses.l_con_t_mean) : "") + ",";
      csv += (pre ? cell(r.losses.l_con_f_mean) : "") + ",";
      csv += (pre ? cell(r.losses.joint) : "") + ",";
      csv += cell(r.cross_entropy) + "\n";
    }
  }
  return csv;
}

void write_run_meta(const std::string& out_dir, const RunConfig& cfg, const std::vector<std::string>& args) {
  ordered_json meta;
  meta["config_hash"] = cfg.config_hash();
  meta["command"] = args;
  const auto now = std::chrono::system_clock::now();
  meta["timestamp_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  write_text(out_dir + "/run_meta.json", meta.dump(2) + "\n");
}

void write_loso_outputs(const std::string& out_dir, const LosoOutput& out, const RunConfig& cfg,
                        const std::string& suffix = "") {
  ensure_dir(out_dir);
  const std::string hash = cfg.config_hash();
  write_text(out_dir + "/report_" + hash + suffix + ".json", report_to_json(out.report).dump(2) + "\n");
  write_text(out_dir + "/per_subject_" + hash + suffix + ".csv", per_subject_csv(out.report));
  write_text(out_dir + "/loss_log_" + hash + suffix + ".csv", loss_log_csv(out.folds));
  if (cfg.save_checkpoints) {
    for (const auto& fold : out.folds) {
      save_checkpoint(fold.checkpoint, out_dir + "/model_" + hash + "_" + fold.held_out + ".ckpt");
    }
  }
}

SegmentBatch load_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is required for this command");
  auto recordings = ingest(cfg.dataset);
  return build_segments(recordings, cfg.effective_window_s(), cfg.effective_stride_s(), cfg.dimension, cfg.scheme);
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int jobs = 0;
};

RunConfig resolve_config(const CommonArgs& common) {
  RunConfig cfg = load_config(common.config_path);
  if (common.seed >= 0) cfg.seed = static_cast<std::uint64_t>(common.seed);
  if (common.jobs > 0) cfg.jobs = common.jobs;
  cfg.validate();
  return cfg;
}

int cmd_gen_synth(const CommonArgs& common, const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  const auto recordings = synth_generate(cfg.synth);
  DatasetDescriptor desc;
  desc.scheme = Scheme::synthetic;
  for (const auto& rec : recordings) {
    const std::string name = "rec_" + rec.subject_id + "_" + rec.trial_id + ".eegr";
    write_recording(rec, common.out_dir + "/" + name);
    desc.recording_paths.push_back(name);
  }
  write_descriptor(desc, common.out_dir + "/dataset.desc");
  write_run_meta(common.out_dir, cfg, args);
  std::cout << "wrote " << recordings.size() << " recordings (" << cfg.synth.n_subjects << " subjects x "
            << cfg.synth.trials_per_subject << " trials, C=" << cfg.synth.channels << ", T=" << cfg.synth.segment_len
            << ") to " << common.out_dir << "\n";
  return 0;
}

int cmd_ingest_check(const CommonArgs& common) {
  RunConfig cfg = resolve_config(common);
  const auto recordings = ingest(cfg.dataset);
  std::vector<std::string> subjects;
  for (const auto& r : recordings) {
    if (std::find(subjects.begin(), subjects.end(), r.subject_id) == subjects.end()) subjects.push_back(r.subject_id);
  }
  const auto batch = build_segments(recordings, cfg.effective_window_s(), cfg.effective_stride_s(), cfg.dimension,
                                    cfg.scheme);
  std::cout << "ok: " << recordings.size() << " recordings, " << subjects.size() << " subjects, " << batch.count()
            << " segments of [" << batch.channels() << "x" << batch.segment_len() << "] (" << to_string(cfg.dimension)
            << ")\n";
  return 0;
}

int cmd_pretrain(const CommonArgs& common, const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  const SegmentBatch data = load_dataset(cfg);
  ensure_dir(common.out_dir);
  ModelBundle model = build_model(data, cfg);
  model.init(cfg.seed);
  RunCounters counters;
  std::vector<int> all(static_cast<std::size_t>(data.count()));
  std::iota(all.begin(), all.end(), 0);
  GuardedSegments view(&data, all, &counters);
  PretrainOutput out = pretrain(model, view, cfg, cfg.seed, counters);
  const std::string hash = cfg.config_hash();
  save_checkpoint(model.to_checkpoint(), common.out_dir + "/checkpoint_" + hash + ".ckpt");
  std::vector<FoldArtifacts> pseudo(1);
  pseudo[0].held_out = "none";
  pseudo[0].log = out.log;
  write_text(common.out_dir + "/loss_log_" + hash + ".csv", loss_log_csv(pseudo));
  write_run_meta(common.out_dir, cfg, args);
  std::cout << "pretrained " << to_string(cfg.variant) << " for " << cfg.pretrain_epochs << " epochs ("
            << out.optimizer_steps << " steps) on " << data.count() << " segments\n";
  return 0;
}

int cmd_finetune(const CommonArgs& common, const std::string& checkpoint_path, double fraction,
                 const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  const SegmentBatch data = load_dataset(cfg);
  ensure_dir(common.out_dir);
  ModelBundle model = ModelBundle::from_checkpoint(load_checkpoint(checkpoint_path));
  if (model.geometry.channels != data.channels() || model.geometry.samples != data.segment_len()) {
    throw DataError("checkpoint geometry does not match the dataset");
  }
  if (model.classifier.input_dim() != representation_dim(model.geometry, cfg.variant)) {
    throw DataError("checkpoint classifier width does not match variant " + std::string(to_string(cfg.variant)));
  }
  RunCounters counters;
  std::vector<int> labeled(static_cast<std::size_t>(data.count()));
  std::iota(labeled.begin(), labeled.end(), 0);
  if (fraction < 1.0) labeled = limited_label_subsample(data, labeled, fraction, cfg.seed);
  GuardedSegments view(&data, labeled, &counters);
  FinetuneOutput out = finetune(model, view, cfg, cfg.seed, counters);
  const std::string hash = cfg.config_hash();
  save_checkpoint(model.to_checkpoint(), common.out_dir + "/checkpoint_" + hash + ".ckpt");
  std::vector<FoldArtifacts> pseudo(1);
  pseudo[0].held_out = "none";
  pseudo[0].log = out.log;
  write_text(common.out_dir + "/loss_log_" + hash + ".csv", loss_log_csv(pseudo));
  ordered_json j;
  j["config_hash"] = hash;
  j["fraction"] = fraction;
  j["labeled_segments"] = labeled.size();
  j["train_accuracy_pct"] = out.train_accuracy_pct;
  write_text(common.out_dir + "/finetune_" + hash + ".json", j.dump(2) + "\n");
  write_run_meta(common.out_dir, cfg, args);
  std::cout << "finetuned classifier on " << labeled.size() << " segments; train accuracy "
            << num(out.train_accuracy_pct) << "%\n";
  return 0;
}

int cmd_eval_loso(const CommonArgs& common, const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  const SegmentBatch data = load_dataset(cfg);
  LosoOutput out = evaluate_loso(data, cfg);
  write_loso_outputs(common.out_dir, out, cfg);
  write_run_meta(common.out_dir, cfg, args);
  std::cout << "LOSO " << to_string(cfg.variant) << ": mean " << num(out.report.mean_pct) << "% +- "
            << num(out.report.std_pct) << "% over " << out.report.per_subject.size() << " subjects\n";
  return 0;
}

int cmd_limited_label(const CommonArgs& common, double fraction, const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  const SegmentBatch data = load_dataset(cfg);
  std::vector<double> fractions;
  if (fraction > 0.0) {
    fractions.push_back(fraction);
  } else {
    fractions = {0.2, 0.4, 0.6, 0.8, 1.0};
  }
  const auto points = run_limited_label(data, cfg, fractions);
  ensure_dir(common.out_dir);
  const std::string hash = cfg.config_hash();
  std::string curve = "fraction,mean_accuracy_pct,std_accuracy_pct\n";
  for (const auto& p : points) {
    const std::string suffix = fraction_suffix(p.fraction);
    write_text(common.out_dir + "/report_" + hash + suffix + ".json", report_to_json(p.report).dump(2) + "\n");
    write_text(common.out_dir + "/per_subject_" + hash + suffix + ".csv", per_subject_csv(p.report));
    curve += num(p.fraction) + "," + num(p.report.mean_pct) + "," + num(p.report.std_pct) + "\n";
    std::cout << "fraction " << num(p.fraction) << ": mean " << num(p.report.mean_pct) << "% +- "
              << num(p.report.std_pct) << "%\n";
  }
  write_text(common.out_dir + "/curve_" + hash + ".csv", curve);
  write_run_meta(common.out_dir, cfg, args);
  return 0;
}

int cmd_gradcheck(const CommonArgs& common, int channels, int samples, int filters, int batch, double h,
                  int per_tensor) {
  RunConfig cfg = resolve_config(common);
  ModelGeometry g;
  g.channels = channels;
  g.samples = samples;
  g.filters = filters;
  g.lrelu_slope = cfg.lrelu_slope;
  g.bn_momentum = cfg.bn_momentum;
  const auto report = run_model_gradcheck(g, batch, h, per_tensor, cfg.seed, cfg.lambda, cfg.tau);
  for (const auto& c : report.checks) {
    std::printf("%-14s %-12s max_rel_error=%.3e (%lld entries)\n", c.loss.c_str(), c.group.c_str(), c.max_rel_error,
                static_cast<long long>(c.entries));
  }
  std::printf("worst: %.3e\n", report.worst);
  if (!(report.worst < 1e-4)) {
    std::cerr << "gradient check failed: worst relative error " << report.worst << " >= 1e-4\n";
    return 3;
  }
  return 0;
}

int cmd_ablate(const CommonArgs& common, const std::string& variant, const std::vector<std::string>& args) {
  RunConfig cfg = resolve_config(common);
  cfg.variant = variant_from_string(variant);
  const SegmentBatch data = load_dataset(cfg);
  LosoOutput out = evaluate_loso(data, cfg);
  write_loso_outputs(common.out_dir, out, cfg);
  write_run_meta(common.out_dir, cfg, args);
  std::cout << "LOSO " << variant << ": mean " << num(out.report.mean_pct) << "% +- " << num(out.report.std_pct)
            << "% over " << out.report.per_subject.size() << " subjects\n";
  return 0;
}

std::string svg_bar_chart(const std::vector<std::pair<std::string, double>>& rows) {
  const int bar_h = 24, gap = 8, left = 180, width = 640, top = 20;
  const int height = top * 2 + static_cast<int>(rows.size()) * (bar_h + gap);
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\">\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = top + static_cast<int>(i) * (bar_h + gap);
    const double w = (width - left - 80) * std::min(100.0, std::max(0.0, rows[i].second)) / 100.0;
    svg += "<text x=\"8\" y=\"" + std::to_string(y + bar_h - 7) + "\" font-size=\"13\">" + rows[i].first + "</text>\n";
    svg += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(y) + "\" width=\"" + num(w) +
           "\" height=\"" + std::to_string(bar_h) + "\" fill=\"#4878b0\"/>\n";
    svg += "<text x=\"" + num(left + w + 6) + "\" y=\"" + std::to_string(y + bar_h - 7) + "\" font-size=\"13\">" +
           num(rows[i].second) + "%</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir, bool svg) {
  if (run_dirs.empty()) throw ConfigError("report: at least one run directory is required");
  struct Row {
    std::string dir, variant, hash;
    double fraction;
    std::uint64_t seed;
    double mean, stddev;
    std::size_t n;
    ordered_json per_subject;
  };
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    std::vector<std::string> reports;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json") {
          reports.push_back(entry.path().string());
        }
      }
    }
    if (reports.empty()) {
      throw DataError("report: run directory '" + dir + "' is incomplete: no report_<hash>.json found");
    }
    std::sort(reports.begin(), reports.end());
    for (const auto& path : reports) {
      std::ifstream is(path);
      ordered_json j;
      try {
        is >> j;
      } catch (const std::exception& e) {
        throw DataError("report: cannot parse " + path + ": " + e.what());
      }
      Row row;
      row.dir = dir;
      row.variant = j.value("variant", "?");
      row.hash = j.value("config_hash", "?");
      row.fraction = j.value("fraction", 1.0);
      row.seed = j.value("seed", 0ULL);
      row.mean = j.value("mean_accuracy_pct", 0.0);
      row.stddev = j.value("std_accuracy_pct", 0.0);
      row.per_subject = j.value("per_subject", ordered_json::array());
      row.n = row.per_subject.size();
      rows.push_back(std::move(row));
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.mean > b.mean; });
  ensure_dir(out_dir);
  std::string summary = "variant,fraction,seed,mean_accuracy_pct,std_accuracy_pct,n_subjects,config_hash,run_dir\n";
  std::string merged = "variant,fraction,seed,subject,accuracy_pct\n";
  std::vector<std::pair<std::string, double>> chart_rows;
  for (const auto& r : rows) {
    summary += r.variant + "," + num(r.fraction) + "," + std::to_string(r.seed) + "," + num(r.mean) + "," +
               num(r.stddev) + "," + std::to_string(r.n) + "," + r.hash + "," + r.dir + "\n";
    for (const auto& s : r.per_subject) {
      merged += r.variant + "," + num(r.fraction) + "," + std::to_string(r.seed) + "," +
                s.value("subject", std::string("?")) + "," + num(s.value("accuracy_pct", 0.0)) + "\n";
    }
    std::string label = r.variant;
    if (r.fraction < 1.0) label += fraction_suffix(r.fraction);
    chart_rows.push_back({label, r.mean});
  }
  write_text(out_dir + "/summary.csv", summary);
  write_text(out_dir + "/per_subject_merged.csv", merged);
  if (svg) write_text(out_dir + "/chart.svg", svg_bar_chart(chart_rows));
  std::cout << "merged " << rows.size() << " runs into " << out_dir << "/summary.csv\n";
  return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"cascaded self-supervised EEG emotion recognition engine"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string variant_flag, checkpoint_path;
  double fraction = -1.0;
  int gc_channels = 4, gc_samples = 32, gc_filters = 4, gc_batch = 4, gc_per_tensor = 12;
  double gc_h = 1e-5;
  std::vector<std::string> report_dirs;
  bool report_svg = false;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", common.config_path, "run configuration file")->required();
    auto* out = sub->add_option("--out", common.out_dir, "output directory");
    if (needs_out) out->required();
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--jobs", common.jobs, "parallel LOSO folds");
  };

  auto* gen = app.add_subcommand("gen-synth", "generate the synthetic multi-subject dataset");
  add_common(gen, true);
  auto* chk = app.add_subcommand("ingest-check", "validate a dataset descriptor and its payloads");
  add_common(chk, false);
  auto* pre = app.add_subcommand("pretrain", "self-supervised pretraining on the whole dataset");
  add_common(pre, true);
  auto* fin = app.add_subcommand("finetune", "train the classifier on top of a pretrained checkpoint");
  add_common(fin, true);
  fin->add_option("--checkpoint", checkpoint_path, "pretrained checkpoint file")->required();
  fin->add_option("--fraction", fraction, "labeled fraction in (0,1]");
  auto* loso = app.add_subcommand("eval-loso", "leave-one-subject-out evaluation");
  add_common(loso, true);
  auto* abl = app.add_subcommand("ablate", "LOSO evaluation of one architecture variant");
  add_common(abl, true);
  abl->add_option("--variant", variant_flag, "full|tt_recon|no_recon|single_time_stream|base_model|tfr_only")
      ->required();
  auto* lim = app.add_subcommand("limited-label", "LOSO with a reduced labeled fraction");
  add_common(lim, true);
  lim->add_option("--fraction", fraction, "labeled fraction in (0,1]; default runs 0.2,0.4,0.6,0.8,1.0");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference validation of the full model");
  add_common(gc, false);
  gc->add_option("--channels", gc_channels, "C (default 4)");
  gc->add_option("--samples", gc_samples, "T (default 32)");
  gc->add_option("--filters", gc_filters, "F (default 4)");
  gc->add_option("--batch", gc_batch, "batch size (default 4)");
  gc->add_option("--step", gc_h, "finite-difference step (default 1e-5)");
  gc->add_option("--per-tensor", gc_per_tensor, "entries probed per parameter tensor");
  auto* rep = app.add_subcommand("report", "merge completed runs into a comparison table");
  rep->add_option("dirs", report_dirs, "run directories")->required();
  rep->add_option("--out", common.out_dir, "output directory")->required();
  rep->add_flag("--svg", report_svg, "also write a bar chart");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_synth(common, args);
    if (chk->parsed()) return cmd_ingest_check(common);
    if (pre->parsed()) return cmd_pretrain(common, args);
    if (fin->parsed()) return cmd_finetune(common, checkpoint_path, fraction > 0 ? fraction : 1.0, args);
    if (loso->parsed()) return cmd_eval_loso(common, args);
    if (abl->parsed()) return cmd_ablate(common, variant_flag, args);
    if (lim->parsed()) return cmd_limited_label(common, fraction, args);
    if (gc->parsed()) return cmd_gradcheck(common, gc_channels, gc_samples, gc_filters, gc_batch, gc_h, gc_per_tensor);
    if (rep->parsed()) return cmd_report(report_dirs, common.out_dir, report_svg);
    std::cerr << "no command given\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cascade::cli
