#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "flynet/cardio.hpp"
#include "flynet/checkpoint.hpp"
#include "flynet/dataset.hpp"
#include "flynet/gradcheck.hpp"
#include "flynet/synth.hpp"
#include "flynet/trainer.hpp"

namespace flynet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kVerificationFailure = 1, kUsageError = 2, kDivergence = 3 };

struct Options {
  std::string manifest;
  std::string out;
  std::string checkpoint;
  std::string masks;
  std::string truth;
  std::string dataset;
  std::string config;

  std::uint64_t seed = 1;
  std::string arch = "flynet";
  std::size_t base_width = TrainConfig{}.base_width;
  std::size_t input_size = TrainConfig{}.input_size;
  std::size_t batch_size = TrainConfig{}.batch_size;
  double lr = AdamHyper{}.lr;
  std::size_t epochs = TrainConfig{}.max_epochs;
  std::size_t patience = TrainConfig{}.patience;
  double min_delta = TrainConfig{}.min_delta;
  double threshold = TrainConfig{}.binarize_threshold;
  bool augment = true;
  std::size_t epoch_samples = 0;
  std::size_t k = 10;
  std::size_t round = 0;

  std::size_t datasets_per_stage = 10;
  std::size_t frames = 60;
  double fps = 20.0;
  double gap_prob = 0.15;
  std::optional<double> period;

  std::optional<double> analyze_fps;
  std::size_t smooth_window = 5;
  double prominence = 0.10;
  std::string diameter_mode = "vertical_chord";

  std::string precision = "double";
  std::size_t seeds = 3;
  std::string inject_fault;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (ec || !out) throw DataError(path.string() + ": cannot open for writing");
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

inline TrainConfig train_config(const Options& o) {
  TrainConfig c;
  c.arch = arch_from_string(o.arch);
  c.base_width = o.base_width;
  c.input_size = o.input_size;
  c.batch_size = o.batch_size;
  c.adam.lr = o.lr;
  c.max_epochs = o.epochs;
  c.patience = o.patience;
  c.min_delta = o.min_delta;
  c.seed = o.seed;
  c.binarize_threshold = o.threshold;
  c.augment = o.augment;
  c.epoch_samples = o.epoch_samples;
  validate(c);
  return c;
}

inline std::string history_csv(const TrainHistory& h) {
  std::string s = "epoch,train_loss,val_iou,best\n";
  for (const auto& e : h.epochs)
    s += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.val_iou) + "," +
         (e.epoch == h.best_epoch ? "1" : "0") + "\n";
  return s;
}

inline std::string join(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + v[i];
  return s;
}

inline EpochObserver epoch_logger(std::ostream& log, std::string prefix) {
  auto start = std::chrono::steady_clock::now();
  return [&log, prefix, start](const EpochRecord& e) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << prefix << "epoch " << e.epoch << " train_loss " << num(e.train_loss) << " val_iou " << num(e.val_iou)
        << " (" << num(t) << " s)" << std::endl;
  };
}

// Per-round checkpoints and histories plus crossval.csv / crossval.json under `dir`.
inline void write_crossval(const fs::path& dir, const CrossValResult& cv) {
  std::string csv = "round,test_iou,best_epoch,epochs_run,best_val_iou,test_datasets\n";
  json rounds = json::array();
  for (const auto& r : cv.rounds) {
    const auto& h = r.trained.history;
    csv += std::to_string(r.round) + "," + num(r.test_iou) + "," + std::to_string(h.best_epoch) + "," +
           std::to_string(h.epochs.size()) + "," + num(h.best_val_iou()) + "," + join(r.plan.test, ';') + "\n";
    json per_dataset = json::object();
    for (std::size_t i = 0; i < r.plan.test.size(); ++i) per_dataset[r.plan.test[i]] = r.dataset_ious[i];
    rounds.push_back({{"round", r.round},
                      {"test_iou", r.test_iou},
                      {"best_epoch", h.best_epoch},
                      {"train", r.plan.train},
                      {"val", r.plan.val},
                      {"test", r.plan.test},
                      {"dataset_iou", per_dataset}});
  }
  csv += "summary," + num(cv.mean_iou) + ",,,,std=" + num(cv.std_iou) + ";min=" + num(cv.min_iou) +
         ";max=" + num(cv.max_iou) + "\n";
  write_text(dir / "crossval.csv", csv);
  write_text(dir / "crossval.json", json{{"rounds", rounds},
                                         {"mean_iou", cv.mean_iou},
                                         {"std_iou", cv.std_iou},
                                         {"min_iou", cv.min_iou},
                                         {"max_iou", cv.max_iou}}
                                        .dump(2) +
                                        "\n");
}

inline RoundObserver round_writer(const fs::path& dir, std::ostream& log, const std::string& tag) {
  return [dir, &log, tag](const RoundResult& r) {
    char name[32];
    std::snprintf(name, sizeof name, "round_%02zu", r.round);
    write_text(dir / name / "history.csv", history_csv(r.trained.history));
    save_checkpoint(r.trained.checkpoint, dir / name / "checkpoint.flyn");
    log << tag << "round " << r.round << " test_iou " << num(r.test_iou) << " [" << join(r.plan.test, ' ') << "]"
        << std::endl;
  };
}

inline CrossValResult run_crossval(const TrainConfig& config, const Corpus& corpus, std::size_t k,
                                   const fs::path& dir, std::ostream& log, const std::string& tag) {
  std::size_t current = 0;
  auto on_epoch = epoch_logger(log, tag);
  auto write_round = round_writer(dir, log, tag);
  auto cv = cross_validate(
      config, corpus, k,
      [&](const RoundResult& r) {
        write_round(r);
        current = r.round + 1;
      },
      [&](const EpochRecord& e) {
        log << "[round " << current << "] ";
        on_epoch(e);
      });
  write_crossval(dir, cv);
  return cv;
}

inline const FlyDataset& pick_dataset(const Corpus& corpus, const std::string& id) {
  if (id.empty()) {
    if (corpus.size() != 1)
      throw std::invalid_argument("manifest holds " + std::to_string(corpus.size()) +
                                  " datasets; choose one with --dataset");
    return corpus.front();
  }
  for (const auto& d : corpus)
    if (d.id == id) return d;
  throw std::invalid_argument("dataset '" + id + "' not in manifest");
}

inline void check_input_size(const NetworkSpec& spec, const FlyDataset& ds) {
  if (ds.frames.empty()) return;
  const auto& m = ds.frames.front().mask;
  if (m.h != spec.input_size || m.w != spec.input_size)
    throw std::invalid_argument("checkpoint expects " + std::to_string(spec.input_size) + "x" +
                                std::to_string(spec.input_size) + " frames but dataset '" + ds.id + "' has " +
                                std::to_string(m.w) + "x" + std::to_string(m.h));
}

inline std::vector<BinaryMask> segment_dataset(const Checkpoint& ck, const FlyDataset& ds, double threshold,
                                               std::size_t batch_size, std::vector<Tensor4<float>>* probs_out = nullptr) {
  check_input_size(ck.spec, ds);
  auto probs = predict(ck.spec, ck.params, ds.frames, batch_size);
  std::vector<BinaryMask> masks;
  masks.reserve(probs.size());
  for (const auto& p : probs) masks.push_back(binarize(p, threshold).front());
  if (probs_out) *probs_out = std::move(probs);
  return masks;
}

}  // namespace detail

inline int cmd_synth(const Options& o, std::ostream& out, std::ostream&) {
  SynthCorpusOptions so;
  so.datasets_per_stage = o.datasets_per_stage;
  so.n_frames = o.frames;
  so.resolution = o.input_size;
  so.fps = o.fps;
  so.boundary_gap_prob = o.gap_prob;
  so.period_s = o.period;
  so.seed = o.seed;
  const Corpus corpus = synth_corpus(so);
  const fs::path manifest = save_corpus(corpus, o.out);
  out << "wrote " << corpus.size() << " datasets x " << o.frames << " frames to " << manifest.string() << "\n";
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& log) {
  const TrainConfig config = detail::train_config(o);
  const Corpus corpus = load_corpus(o.manifest);
  const FoldPlan plan = kfold_split(corpus, o.k, o.round, o.seed);
  const auto train_frames = gather_frames(corpus, plan.train);
  const auto val_frames = gather_frames(corpus, plan.val);
  log << "train " << train_frames.size() << " frames [" << detail::join(plan.train, ' ') << "], val "
      << val_frames.size() << " frames [" << detail::join(plan.val, ' ') << "]" << std::endl;
  const auto result = train(config, train_frames, val_frames, detail::epoch_logger(log, ""));
  const fs::path dir = o.out;
  detail::write_text(dir / "history.csv", detail::history_csv(result.history));
  save_checkpoint(result.checkpoint, dir / "checkpoint.flyn");
  const auto& ck = result.checkpoint;
  const auto test_ious = evaluate_iou(ck.spec, ck.params, gather_frames(corpus, plan.test), config.binarize_threshold);
  const double test_iou = mean(test_ious);
  detail::write_text(dir / "summary.json", json{{"best_epoch", result.history.best_epoch},
                                                {"best_val_iou", result.history.best_val_iou()},
                                                {"epochs_run", result.history.epochs.size()},
                                                {"test_iou", test_iou},
                                                {"train", plan.train},
                                                {"val", plan.val},
                                                {"test", plan.test}}
                                               .dump(2) +
                                               "\n");
  out << "best epoch " << result.history.best_epoch << " val_iou " << detail::num(result.history.best_val_iou())
      << " test_iou " << detail::num(test_iou) << "\n";
  return kOk;
}

inline int cmd_crossval(const Options& o, std::ostream& out, std::ostream& log) {
  const TrainConfig config = detail::train_config(o);
  const Corpus corpus = load_corpus(o.manifest);
  const auto cv = detail::run_crossval(config, corpus, o.k, o.out, log, "");
  out << o.arch << " " << o.k << "-fold test IOU mean " << detail::num(cv.mean_iou) << " std "
      << detail::num(cv.std_iou) << " min " << detail::num(cv.min_iou) << " max " << detail::num(cv.max_iou) << "\n";
  return kOk;
}

// FlyNet and the FCN baseline cross-validated on one corpus with identical budgets.
inline int cmd_bench(const Options& o, std::ostream& out, std::ostream& log) {
  Corpus corpus;
  if (o.manifest.empty()) {
    SynthCorpusOptions so;
    so.datasets_per_stage = o.datasets_per_stage;
    so.n_frames = o.frames;
    so.resolution = o.input_size;
    so.fps = o.fps;
    so.boundary_gap_prob = o.gap_prob;
    so.period_s = o.period;
    so.seed = o.seed;
    corpus = synth_corpus(so);
    log << "generated synthetic corpus: " << corpus.size() << " datasets x " << o.frames << " frames" << std::endl;
  } else {
    corpus = load_corpus(o.manifest);
  }
  TrainConfig config = detail::train_config(o);
  std::string csv = "arch,mean_iou,std_iou,min_iou,max_iou\n";
  json summary = json::object();
  std::vector<double> means;
  for (Arch arch : {Arch::flynet, Arch::fcn}) {
    config.arch = arch;
    const std::string name(to_string(arch));
    const auto cv = detail::run_crossval(config, corpus, o.k, fs::path(o.out) / name, log, "[" + name + "] ");
    csv += name + "," + detail::num(cv.mean_iou) + "," + detail::num(cv.std_iou) + "," + detail::num(cv.min_iou) +
           "," + detail::num(cv.max_iou) + "\n";
    summary[name] = {{"mean_iou", cv.mean_iou}, {"std_iou", cv.std_iou}, {"scores", cv.scores()}};
    means.push_back(cv.mean_iou);
    out << name << " mean test IOU " << detail::num(cv.mean_iou) << " (std " << detail::num(cv.std_iou) << ")\n";
  }
  summary["flynet_minus_fcn"] = means[0] - means[1];
  detail::write_text(fs::path(o.out) / "bench.csv", csv);
  detail::write_text(fs::path(o.out) / "bench.json", summary.dump(2) + "\n");
  out << "flynet - fcn = " << detail::num(means[0] - means[1]) << "\n";
  return kOk;
}

inline int cmd_segment(const Options& o, std::ostream& out, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  Corpus corpus = load_corpus(o.manifest);
  for (const auto& ds : corpus) detail::check_input_size(ck.spec, ds);
  const fs::path dir = o.out;
  std::size_t total = 0;
  double seconds = 0.0;
  json per_dataset = json::object();
  Corpus predicted;
  for (const auto& ds : corpus) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Tensor4<float>> probs;
    const auto masks = detail::segment_dataset(ck, ds, o.threshold, o.batch_size, &probs);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    total += masks.size();

    std::string csv = "frame_index,stem,mean_prob,max_prob,foreground_px,iou\n";
    std::vector<double> ious;
    FlyDataset pred{ds.id, ds.stage, ds.fps, {}};
    for (std::size_t i = 0; i < masks.size(); ++i) {
      const auto& f = ds.frames[i];
      const double iou = hard_iou(masks[i], f.mask);
      ious.push_back(iou);
      const auto p = probs[i].data();
      double sum = 0.0;
      float hi = 0.0f;
      for (float v : p) {
        sum += v;
        hi = std::max(hi, v);
      }
      csv += std::to_string(f.frame_index) + "," + frame_stem(f) + "," + detail::num(sum / static_cast<double>(p.size())) +
             "," + detail::num(hi) + "," + std::to_string(masks[i].count()) + "," + detail::num(iou) + "\n";
      pred.frames.push_back({f.image, masks[i], f.frame_index, frame_stem(f)});
    }
    detail::write_text(dir / ds.id / "probabilities.csv", csv);
    per_dataset[ds.id] = mean(ious);
    predicted.push_back(std::move(pred));
  }
  // Predicted masks laid out as a corpus, so `analyze --manifest` can consume them.
  save_corpus(predicted, dir);
  detail::write_text(dir / "segment.json", json{{"threshold", o.threshold}, {"dataset_iou", per_dataset}}.dump(2) + "\n");
  log << "segmented " << total << " frames in " << detail::num(seconds) << " s ("
      << detail::num(seconds > 0 ? static_cast<double>(total) / seconds : 0.0) << " frames/s)" << std::endl;
  out << "wrote masks for " << corpus.size() << " datasets to " << dir.string() << "\n";
  return kOk;
}

inline int cmd_analyze(const Options& o, std::ostream& out, std::ostream&) {
  std::vector<BinaryMask> masks;
  std::vector<BinaryMask> truth;
  std::vector<std::int64_t> indices;
  double fps = 0.0;
  std::string source;
  if (!o.masks.empty()) {
    if (!o.analyze_fps) throw std::invalid_argument("--fps is required with --masks (frame rate is never inferred)");
    fps = *o.analyze_fps;
    const auto files = flynet::detail::list_pgm(o.masks);
    indices = flynet::detail::frame_indices(files);
    for (const auto& f : files) masks.push_back(mask_from_gray(read_pgm(f)));
    if (!o.truth.empty()) {
      const auto tfiles = flynet::detail::list_pgm(o.truth);
      if (tfiles.size() != files.size())
        throw DataError("--truth holds " + std::to_string(tfiles.size()) + " masks, --masks holds " +
                        std::to_string(files.size()));
      for (const auto& f : tfiles) truth.push_back(mask_from_gray(read_pgm(f)));
    }
    source = "masks:" + o.masks;
  } else if (!o.manifest.empty()) {
    const Corpus corpus = load_corpus(o.manifest);
    const FlyDataset& ds = detail::pick_dataset(corpus, o.dataset);
    fps = o.analyze_fps.value_or(ds.fps);
    for (const auto& f : ds.frames) {
      indices.push_back(f.frame_index);
      truth.push_back(f.mask);
    }
    if (o.checkpoint.empty()) {
      masks = truth;
      source = "manifest:" + ds.id;
    } else {
      masks = detail::segment_dataset(load_checkpoint(o.checkpoint), ds, o.threshold, o.batch_size);
      source = "checkpoint:" + ds.id;
    }
  } else {
    throw std::invalid_argument("analyze needs --masks DIR or --manifest FILE");
  }
  if (!(fps > 0.0)) throw std::invalid_argument("--fps must be positive");
  if (masks.empty()) throw DataError("no masks to analyze");
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i].h != masks[i].h || truth[i].w != masks[i].w)
      throw DataError("shape mismatch between prediction and ground truth at frame " + std::to_string(indices[i]));

  const DiameterMode mode = diameter_mode_from_string(o.diameter_mode);
  Trace diameter{fps, {}};
  std::string csv = "frame_index,time_s,area_px2,diameter_px,iou\n";
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const double d = mask_diameter(masks[i], mode);
    diameter.samples.push_back({indices[i], d});
    csv += std::to_string(indices[i]) + "," + detail::num(static_cast<double>(indices[i]) / fps) + "," +
           detail::num(mask_area(masks[i])) + "," + detail::num(d) + "," +
           (truth.empty() ? "" : detail::num(hard_iou(masks[i], truth[i]))) + "\n";
  }
  const CardiacReport r = cardiac_params(diameter, o.smooth_window, o.prominence);
  json summary{{"edd_px", r.edd_px},
               {"esd_px", r.esd_px},
               {"fs", r.fs},
               {"hr_bpm", r.hr_bpm ? json(*r.hr_bpm) : json(nullptr)},
               {"n_cycles", r.n_cycles},
               {"peaks", r.peaks},
               {"troughs", r.troughs},
               {"settings",
                {{"fps", fps},
                 {"smooth_window", o.smooth_window},
                 {"prominence", o.prominence},
                 {"diameter_mode", o.diameter_mode},
                 {"threshold", o.threshold},
                 {"source", source}}}};
  if (!r.hr_bpm) summary["hr_absent_reason"] = r.hr_absent_reason;
  const fs::path dir = o.out;
  detail::write_text(dir / "trace.csv", csv);
  detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
  out << "EDD " << detail::num(r.edd_px) << " px, ESD " << detail::num(r.esd_px) << " px, FS " << detail::num(r.fs)
      << ", HR " << (r.hr_bpm ? detail::num(*r.hr_bpm) + " bpm" : "absent (" + r.hr_absent_reason + ")") << "\n";
  return kOk;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out, std::ostream&) {
  GradcheckOptions g;
  g.precision = o.precision == "single" ? Precision::single_precision : Precision::double_precision;
  g.seeds = o.seeds;
  g.seed = o.seed;
  if (!o.inject_fault.empty()) g.fault = layer_kind_from_string(o.inject_fault);
  const auto report = run_gradcheck(g);
  std::vector<std::string> failed;
  char line[160];
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof line, "%-20s max_rel_err %.3e  threshold %.0e  checked %5zu  skipped %4zu  %s\n",
                  e.name.c_str(), e.max_rel_error, e.threshold, e.checked, e.skipped, e.passed() ? "ok" : "FAIL");
    out << line;
    if (!e.passed()) failed.push_back(e.name);
  }
  if (!failed.empty()) {
    out << "gradient check failed: " << detail::join(failed, ' ') << "\n";
    return kVerificationFailure;
  }
  out << "all gradients match (" << o.precision << " precision)\n";
  return kOk;
}

namespace detail {

// Flat JSON object -> "--key value" tokens, spliced in ahead of the command-line flags.
inline std::vector<std::string> config_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw DataError(path.string() + ": config must be a flat JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : doc.items()) {
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
    else if (value.is_number()) text = value.dump();
    else throw DataError(path.string() + ": config key '" + key + "' must be a string, number or boolean");
    tokens.push_back("--" + key);
    tokens.push_back(text);
  }
  return tokens;
}

inline json resolved_config(const CLI::App& sub) {
  json j = json::object();
  j["command"] = sub.get_name();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string name = opt->get_lnames().front();
    if (opt->count() > 0) j[name] = opt->results().back();
    else if (!opt->get_default_str().empty()) j[name] = opt->get_default_str();
  }
  return j;
}

}  // namespace detail

// Parses argv-style arguments (args[0] is the program name) and runs one command.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  Options o;
  CLI::App app{"flynet: heart segmentation and cardiac analysis for OCM image sequences"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");

  auto add_io = [&](CLI::App* c) {
    c->add_option("--config", o.config, "Flat JSON file of flag values (flags override)");
    c->add_option("--out", o.out, "Output directory")->required();
  };
  auto add_train = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    c->add_option("--arch", o.arch, "Network architecture")->check(CLI::IsMember({"flynet", "fcn"}))->capture_default_str();
    c->add_option("--base-width", o.base_width, "Channels of the first encoder block")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--input-size", o.input_size, "Frame side length")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--patience", o.patience)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--min-delta", o.min_delta)->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--threshold", o.threshold, "Mask binarization threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    c->add_option("--augment", o.augment, "8-fold shift/rotation augmentation")->capture_default_str();
    c->add_option("--epoch-samples", o.epoch_samples, "Augmented samples per epoch (0 = all)")->capture_default_str();
    c->add_option("--k", o.k, "Folds")->check(CLI::Range(3, 1000))->capture_default_str();
  };
  auto add_synth = [&](CLI::App* c, bool with_size) {
    c->add_option("--datasets-per-stage", o.datasets_per_stage)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--frames", o.frames, "Frames per dataset")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--fps", o.fps)->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--gap-prob", o.gap_prob, "Probability of a wall gap per frame")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    c->add_option("--period", o.period, "Heart period in seconds for every dataset")->check(CLI::PositiveNumber);
    if (with_size) {
      c->add_option("--seed", o.seed, "Master seed")->capture_default_str();
      c->add_option("--input-size", o.input_size, "Frame side length")->check(CLI::Range(8, 4096))->capture_default_str();
    }
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic beating-heart corpus");
  add_io(synth);
  add_synth(synth, true);

  auto* train_cmd = app.add_subcommand("train", "Train one model on a k-fold round's train/val split");
  add_io(train_cmd);
  train_cmd->add_option("--manifest", o.manifest)->required();
  add_train(train_cmd);
  train_cmd->add_option("--round", o.round, "Fold round supplying the splits")->capture_default_str();

  auto* crossval = app.add_subcommand("crossval", "Grouped k-fold cross-validation");
  add_io(crossval);
  crossval->add_option("--manifest", o.manifest)->required();
  add_train(crossval);

  auto* bench = app.add_subcommand("bench", "Paired FlyNet vs FCN cross-validation");
  add_io(bench);
  bench->add_option("--manifest", o.manifest, "Corpus manifest (default: generate a synthetic corpus)");
  add_train(bench);
  add_synth(bench, false);

  auto* segment = app.add_subcommand("segment", "Predict masks for every frame of a corpus");
  add_io(segment);
  segment->add_option("--checkpoint", o.checkpoint)->required();
  segment->add_option("--manifest", o.manifest)->required();
  segment->add_option("--threshold", o.threshold)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  segment->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber)->capture_default_str();

  auto* analyze = app.add_subcommand("analyze", "Area/diameter traces and EDD, ESD, FS, HR");
  add_io(analyze);
  analyze->add_option("--masks", o.masks, "Directory of predicted mask PGMs");
  analyze->add_option("--truth", o.truth, "Directory of ground-truth mask PGMs (fills the iou column)");
  analyze->add_option("--manifest", o.manifest, "Corpus manifest (ground truth, or frames with --checkpoint)");
  analyze->add_option("--dataset", o.dataset, "Dataset id within the manifest");
  analyze->add_option("--checkpoint", o.checkpoint, "Segment the manifest frames with this model");
  analyze->add_option("--fps", o.analyze_fps, "Frame rate (required with --masks)")->check(CLI::PositiveNumber);
  analyze->add_option("--smooth-window", o.smooth_window)->check(CLI::PositiveNumber)->capture_default_str();
  analyze->add_option("--prominence", o.prominence)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  analyze->add_option("--diameter-mode", o.diameter_mode)
      ->check(CLI::IsMember({"vertical_chord", "equivalent_circle"}))
      ->capture_default_str();
  analyze->add_option("--threshold", o.threshold)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  analyze->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber)->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gradcheck->add_option("--config", o.config);
  gradcheck->add_option("--precision", o.precision)->check(CLI::IsMember({"single", "double"}))->capture_default_str();
  gradcheck->add_option("--seed", o.seed)->capture_default_str();
  gradcheck->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::Range(1, 100))->capture_default_str();
  gradcheck->add_option("--inject-fault", o.inject_fault, "Sign-flip the weight gradient of a layer kind (detector test)")
      ->check(CLI::IsMember({"conv3x3", "conv1x1", "tconv2"}));

  // Splice --config contents in right after the command name.
  for (std::size_t i = 1; i + 1 < args.size(); ++i) {
    if (args[i] == "--config" || args[i].rfind("--config=", 0) == 0) {
      const std::string path = args[i] == "--config" ? args[i + 1] : args[i].substr(9);
      try {
        auto tokens = detail::config_tokens(path);
        args.insert(args.begin() + 2, tokens.begin(), tokens.end());
      } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return kUsageError;
      }
      break;
    }
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    log << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsageError;
  }

  CLI::App* cmd = app.get_subcommands().front();
  const json resolved = detail::resolved_config(*cmd);
  log << "resolved config: " << resolved.dump() << std::endl;
  try {
    if (!o.out.empty()) detail::write_text(fs::path(o.out) / "config.json", resolved.dump(2) + "\n");
    if (cmd == synth) return cmd_synth(o, out, log);
    if (cmd == train_cmd) return cmd_train(o, out, log);
    if (cmd == crossval) return cmd_crossval(o, out, log);
    if (cmd == bench) return cmd_bench(o, out, log);
    if (cmd == segment) return cmd_segment(o, out, log);
    if (cmd == analyze) return cmd_analyze(o, out, log);
    return cmd_gradcheck(o, out, log);
  } catch (const DivergenceError& e) {
    log << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kUsageError;
  }
}

}  // namespace flynet::cli
