// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero on any failure.
// Optional arguments select criteria by number, e.g. `acceptance 1 2 9`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flynet/augment.hpp"
#include "flynet/cardio.hpp"
#include "flynet/checkpoint.hpp"
#include "flynet/gradcheck.hpp"
#include "flynet/kfold.hpp"
#include "flynet/synth.hpp"
#include "flynet/trainer.hpp"
#include "oracles.hpp"

using namespace flynet;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

BinaryMask random_mask(std::size_t h, std::size_t w, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution d(density);
  BinaryMask m(h, w);
  for (auto& v : m.data) v = d(rng) ? 1 : 0;
  return m;
}

double soft_iou_oracle(const Tensor4<float>& p, const BinaryMask& g) {
  double inter = 0, uni = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    inter += p[i] * g.data[i];
    uni += p[i] + g.data[i] - p[i] * g.data[i];
  }
  return inter / uni;
}

Trace diameter_trace(const std::vector<BinaryMask>& masks, const std::vector<std::int64_t>& frames, double fps) {
  Trace t{fps, {}};
  for (std::size_t i = 0; i < masks.size(); ++i)
    t.samples.push_back({frames[i], mask_diameter(masks[i], DiameterMode::vertical_chord)});
  return t;
}

// 1. Finite-difference gradient check.
void gradients(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opts;  // double precision, step 1e-4, 3 seeds
  const auto report = run_gradcheck(opts);
  const double elapsed = seconds_since(t0);
  double worst_layer = 0, worst_net = 0;
  for (const auto& e : report.entries) {
    const bool network = e.name.find("end-to-end") != std::string::npos;
    o.require(e.checked > 0, e.name + " checked nothing");
    o.require(e.max_rel_error < (network ? 1e-3 : 1e-4), e.name + " error " + std::to_string(e.max_rel_error));
    (network ? worst_net : worst_layer) = std::max(network ? worst_net : worst_layer, e.max_rel_error);
  }
  o.require(report.entries.size() == 11, "expected 8 layer kinds + loss + 2 networks");
  GradcheckOptions faulty;
  faulty.seeds = 1;
  faulty.fault = LayerKind::conv3x3;
  o.require(!run_gradcheck(faulty).passed(), "sign-flipped conv not detected");
  o.require(elapsed < 60.0, "runtime over 60 s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "max layer rel err %.2e, max end-to-end rel err %.2e, %zu seeds, %.1f s", worst_layer,
                worst_net, opts.seeds, elapsed);
  o.detail << buf;
}

// 2. FlyNet shape, range, bottleneck and parameter count.
void architecture(Outcome& o) {
  std::mt19937_64 rng(2);
  const auto [spec, params] = build_flynet<float>(128, 64, rng);
  Tensor4<float> x({1, 1, 128, 128});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : x.data()) v = u(rng);
  const auto [y, cache] = forward(spec, params, x);
  o.require(y.shape() == Shape{1, 1, 128, 128}, "output shape " + y.shape().str());
  bool in_range = true;
  for (float v : y.data()) in_range = in_range && v > 0.0f && v < 1.0f;
  o.require(in_range, "output outside (0,1)");
  const Shape b = cache.outputs[static_cast<std::size_t>(spec.bottleneck)].shape();
  o.require(b.h == 8 && b.w == 8, "bottleneck " + b.str());
  std::size_t counted = 0;
  for (const auto& [id, p] : params) counted += p.weights.size() + p.bias.size();
  const std::size_t expected = oracle::flynet_params(64);
  o.require(spec.param_count() == expected && counted == expected, "parameter count differs from oracle");
  for (std::size_t bw : {1U, 2U, 8U, 32U})
    o.require(make_flynet_spec(128, bw).param_count() == oracle::flynet_params(bw), "oracle mismatch at bw " + std::to_string(bw));
  o.detail << "output " << y.shape().str() << ", bottleneck " << b.h << "x" << b.w << ", " << counted
           << " parameters (oracle " << expected << ")";
}

// 3. Memorize eight frames.
void overfit(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthParams p;
  p.n_frames = 8;
  p.seed = 3;
  const auto ds = synth_generate(p);
  TrainConfig c;
  c.base_width = 8;
  c.input_size = 64;
  c.batch_size = 8;
  c.augment = false;
  c.max_epochs = 300;
  c.patience = 300;
  c.seed = 5;
  const auto r = train(c, ds.frames, ds.frames);
  const std::size_t steps = r.history.epochs.size();  // one batch per epoch
  const auto probs = predict(r.checkpoint.spec, r.checkpoint.params, ds.frames);
  double soft = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) soft += soft_iou_oracle(probs[i], ds.frames[i].mask);
  soft /= static_cast<double>(probs.size());
  const double elapsed = seconds_since(t0);
  o.require(steps <= 300, "more than 300 steps");
  o.require(r.history.epochs.back().train_loss < r.history.epochs.front().train_loss, "loss did not fall");
  o.require(soft >= 0.95, "soft IOU below 0.95");
  o.require(elapsed < 300.0, "runtime over 5 min");
  char buf[160];
  std::snprintf(buf, sizeof buf, "train soft IOU %.4f after %zu Adam steps (loss %.4f -> %.4f), %.1f s", soft, steps,
                r.history.epochs.front().train_loss, r.history.epochs.back().train_loss, elapsed);
  o.detail << buf;
}

// 4. FlyNet vs FCN, 10-fold grouped cross-validation on 30 synthetic datasets.
void benchmark(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthCorpusOptions so;
  so.datasets_per_stage = 10;
  so.n_frames = 60;
  so.resolution = 64;
  so.boundary_gap_prob = 0.15;
  so.seed = 1;
  const Corpus corpus = synth_corpus(so);
  TrainConfig c;
  c.base_width = 8;
  c.input_size = 64;
  c.batch_size = 8;
  c.max_epochs = 12;
  c.patience = 5;
  c.epoch_samples = 640;
  c.seed = 1;
  std::map<Arch, CrossValResult> cv;
  for (Arch arch : {Arch::flynet, Arch::fcn}) {
    c.arch = arch;
    cv[arch] = cross_validate(c, corpus, 10, [&](const RoundResult& r) {
      std::printf("  [%s] round %zu test IOU %.4f (best epoch %zu of %zu) %.0f s\n", std::string(to_string(arch)).c_str(),
                  r.round, r.test_iou, r.trained.history.best_epoch, r.trained.history.epochs.size(), seconds_since(t0));
      std::fflush(stdout);
    });
  }
  const double fly = cv[Arch::flynet].mean_iou;
  const double fcn = cv[Arch::fcn].mean_iou;
  const double elapsed = seconds_since(t0);
  o.require(fly >= 0.85, "FlyNet mean below 0.85");
  o.require(fly - fcn >= 0.05, "FlyNet margin over FCN below 0.05");
  o.require(elapsed < 7200.0, "runtime over 2 h");
  char buf[200];
  std::snprintf(buf, sizeof buf, "FlyNet mean IOU %.4f (std %.4f), FCN %.4f (std %.4f), margin %.4f, %.0f s", fly,
                cv[Arch::flynet].std_iou, fcn, cv[Arch::fcn].std_iou, fly - fcn, elapsed);
  o.detail << buf;
}

// 5. Augmentation count and joint image/mask geometry.
void augmentation(Outcome& o) {
  std::mt19937_64 rng(5);
  const std::size_t n = 128;
  const std::size_t y0 = 60, x0 = 63;
  FramePair delta{Tensor4<float>({1, 1, n, n}), BinaryMask(n, n), 0, "delta"};
  delta.image.at(0, 0, y0, x0) = 1.0f;
  delta.mask.at(y0, x0) = 1;
  std::size_t bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto shifts = draw_shifts(rng);
    // independent geometry: shifts move (y, x); a quarter turn CCW maps (y, x) -> (n-1-x, y)
    std::vector<std::pair<std::size_t, std::size_t>> where{
        {y0, x0}, {y0 + shifts[0], x0}, {y0 - shifts[1], x0}, {y0, x0 + shifts[2]}, {y0, x0 - shifts[3]}};
    auto turn = [&](std::pair<std::size_t, std::size_t> p) { return std::pair{n - 1 - p.second, p.first}; };
    where.push_back(turn(where[0]));
    where.push_back(turn(where[5]));
    where.push_back(turn(where[6]));
    for (std::size_t v = 0; v < kAugmentCopies; ++v) {
      const auto out = augment_variant(delta, static_cast<AugmentVariant>(v), shifts);
      const auto [y, x] = where[v];
      const bool ok = out.image.at(0, 0, y, x) == 1.0f && out.mask.at(y, x) == 1 && out.mask.count() == 1 &&
                      out.image.data().size() == n * n;
      double total = 0;
      for (float f : out.image.data()) total += f;
      bad += ok && total == 1.0 ? 0 : 1;
    }
  }
  o.require(bad == 0, std::to_string(bad) + " delta placements wrong");
  std::size_t mismatched = 0;
  std::size_t pairs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    FramePair f{Tensor4<float>({1, 1, 64, 64}), random_mask(64, 64, 0.3, rng), 0, "r"};
    for (std::size_t i = 0; i < f.mask.size(); ++i) f.image[i] = static_cast<float>(f.mask.data[i]);
    const auto out = augment(f, rng);
    pairs = out.size();
    o.require(out.size() == 8, "augment did not return 8 pairs");
    for (const auto& p : out) mismatched += BinaryMask::from_tensor(p.image) == p.mask ? 0 : 1;
  }
  o.require(mismatched == 0, "mask transform differs from image transform");
  const std::size_t total = 23000 * pairs;
  o.require(total == 184000, "23,000 frames do not yield 184,000 pairs");
  o.detail << pairs << " pairs per frame, 400 delta placements and 160 random-mask pairs consistent, 23000 x " << pairs
           << " = " << total;
}

// 6. Fold hygiene over randomized corpora.
void folds(Outcome& o) {
  std::mt19937_64 rng(6);
  std::size_t corpora = 0, rounds = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = trial == 0 ? 10 : 3 + rng() % 10;
    Corpus corpus;
    std::map<std::string, Stage> stage_of;
    for (Stage st : kAllStages) {
      const std::size_t count = trial == 0 ? 10 : (trial % 2 ? k : 3 + rng() % 15);
      for (std::size_t i = 0; i < count; ++i) {
        const std::string id = std::string(to_string(st)) + "-" + std::to_string(rng() % 1000000) + "-" + std::to_string(i);
        corpus.push_back({id, st, 10.0, {}});
        stage_of[id] = st;
      }
    }
    std::shuffle(corpus.begin(), corpus.end(), rng);
    const bool full_rotation = trial == 0 || trial % 2;
    const std::uint64_t seed = rng();
    std::map<std::string, int> tested;
    for (std::size_t r = 0; r < k; ++r, ++rounds) {
      const auto plan = kfold_split(corpus, k, r, seed);
      std::map<std::string, int> seen;
      for (const auto* split : {&plan.train, &plan.val, &plan.test})
        for (const auto& id : *split) ++seen[id];
      bool disjoint = seen.size() == corpus.size();
      for (const auto& [id, c] : seen) disjoint = disjoint && c == 1;
      o.require(disjoint, "an id spans splits");
      for (const auto* split : {&plan.val, &plan.test}) {
        std::set<Stage> stages;
        for (const auto& id : *split) stages.insert(stage_of.at(id));
        o.require(stages.size() == 3, "a val/test split lacks a stage");
      }
      for (const auto& id : plan.test) ++tested[id];
    }
    if (full_rotation) {
      bool once = tested.size() == corpus.size();
      for (const auto& [id, c] : tested) once = once && c == 1;
      o.require(once, "a dataset is not tested exactly once");
    }
    ++corpora;
    if (!o.pass) break;
  }
  o.detail << corpora << " randomized corpora, " << rounds << " rounds";
}

// 7. IOU identities.
void metrics(Outcome& o) {
  std::mt19937_64 rng(7);
  double worst_soft = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t h = 1 + rng() % 32, w = 1 + rng() % 32;
    const double da = (rng() % 101) / 100.0, db = (rng() % 101) / 100.0;
    auto a = random_mask(h, w, da, rng);
    const auto b = random_mask(h, w, db, rng);
    const double ab = hard_iou(a, b);
    o.require(ab == hard_iou(b, a), "hard IOU not symmetric");
    o.require(ab >= 0.0 && ab <= 1.0, "hard IOU outside [0,1]");
    o.require(ab == oracle::iou(a, b), "hard IOU differs from pixel counting");
    if (a.count() + b.count() == 0) a.data[0] = 1;  // soft IOU needs a non-empty union
    const std::vector<BinaryMask> truth{b};
    const double soft = 1.0 - soft_iou_loss(a.to_tensor<double>(), std::span<const BinaryMask>(truth)).loss;
    worst_soft = std::max(worst_soft, std::abs(soft - hard_iou(a, b)));
  }
  o.require(worst_soft < 1e-5, "soft IOU differs from hard IOU");
  char buf[120];
  std::snprintf(buf, sizeof buf, "1000 random pairs match the oracle; max |soft - hard| = %.2e", worst_soft);
  o.detail << buf;
}

// 8. Cardiac readouts, analytic and end to end.
void cardiac(Outcome& o) {
  Trace t{100.0, {}};
  for (std::int64_t i = 0; i < 1000; ++i)
    t.samples.push_back({i, 10.0 + 3.0 * std::sin(2 * std::numbers::pi * 2.0 * static_cast<double>(i) / 100.0)});
  const auto r = cardiac_params(t, 5, 0.10);
  const double hr = r.hr_bpm.value_or(0.0);
  auto within = [](double v, double target, double frac) { return std::abs(v - target) <= frac * std::abs(target); };
  o.require(within(r.edd_px, 13.0, 0.02), "EDD");
  o.require(within(r.esd_px, 7.0, 0.02), "ESD");
  o.require(within(r.fs, 6.0 / 13.0, 0.02), "FS");
  o.require(within(hr, 120.0, 0.02), "HR");

  // predicted masks of an unseen dataset beating at 0.5 s
  SynthCorpusOptions so;
  so.datasets_per_stage = 3;
  so.n_frames = 40;
  so.seed = 8;
  const Corpus corpus = synth_corpus(so);
  std::vector<FramePair> train_frames, val_frames;
  for (const auto& ds : corpus) {
    auto& dst = ds.id.ends_with("_02") ? val_frames : train_frames;
    dst.insert(dst.end(), ds.frames.begin(), ds.frames.end());
  }
  TrainConfig c;
  c.base_width = 8;
  c.input_size = 64;
  c.batch_size = 8;
  c.max_epochs = 8;
  c.epoch_samples = 480;
  c.seed = 8;
  const auto trained = train(c, train_frames, val_frames);
  SynthParams p = stage_regime(Stage::pupa, 64);
  p.id = "heldout";
  p.n_frames = 120;
  p.fps = 20.0;
  p.period_s = 0.5;
  p.boundary_gap_prob = 0.15;
  p.seed = 99;
  const auto heldout = synth_generate(p);
  const auto probs = predict(trained.checkpoint.spec, trained.checkpoint.params, heldout.frames);
  std::vector<BinaryMask> masks;
  std::vector<std::int64_t> frames;
  std::vector<double> ious;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    masks.push_back(binarize(probs[i], 0.5).front());
    frames.push_back(heldout.frames[i].frame_index);
    ious.push_back(hard_iou(masks.back(), heldout.frames[i].mask));
  }
  const auto e2e = cardiac_params(diameter_trace(masks, frames, p.fps), 5, 0.10);
  const double e2e_hr = e2e.hr_bpm.value_or(0.0);
  o.require(within(e2e_hr, 120.0, 0.05), "end-to-end HR");
  char buf[240];
  std::snprintf(buf, sizeof buf,
                "sinusoid EDD %.3f ESD %.3f FS %.4f HR %.2f bpm; predicted masks (IOU %.3f) HR %.2f bpm vs 120", r.edd_px,
                r.esd_px, r.fs, hr, mean(ious), e2e_hr);
  o.detail << buf;
}

// 9. Reproducibility and checkpoint integrity.
void persistence(Outcome& o) {
  SynthCorpusOptions so;
  so.datasets_per_stage = 1;
  so.n_frames = 6;
  const Corpus corpus = synth_corpus(so);
  TrainConfig c;
  c.base_width = 4;
  c.input_size = 64;
  c.batch_size = 4;
  c.max_epochs = 3;
  c.epoch_samples = 16;
  c.seed = 9;
  const auto a = train(c, corpus[0].frames, corpus[1].frames);
  const auto b = train(c, corpus[0].frames, corpus[1].frames);
  o.require(a.history == b.history, "histories differ");
  o.require(a.checkpoint == b.checkpoint, "checkpoints differ");
  const auto pa = predict(a.checkpoint.spec, a.checkpoint.params, corpus[2].frames);
  const auto pb = predict(b.checkpoint.spec, b.checkpoint.params, corpus[2].frames);
  o.require(pa == pb, "predictions differ");

  const std::string bytes = encode_checkpoint(a.checkpoint);
  o.require(encode_checkpoint(b.checkpoint) == bytes, "checkpoint bytes differ");
  const auto path = std::filesystem::temp_directory_path() / "flynet_acceptance.flyn";
  save_checkpoint(a.checkpoint, path);
  const auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  o.require(loaded == a.checkpoint, "loaded checkpoint differs");
  o.require(encode_checkpoint(loaded) == bytes, "re-encoded bytes differ");

  auto code_of = [](const std::string& data) -> std::string {
    try {
      decode_checkpoint(data);
    } catch (const CheckpointError& e) {
      return std::to_string(static_cast<int>(e.code())) + ":" + std::string(e.what()).substr(0, 12);
    }
    return "accepted";
  };
  std::string magic = bytes, version = bytes;
  magic[0] = 'G';
  version[4] = 9;
  const std::vector<std::string> outcomes{code_of(magic), code_of(version), code_of(bytes.substr(0, 14)),
                                          code_of(bytes.substr(0, bytes.size() - 4)), code_of(bytes + "xxxx")};
  const std::set<std::string> distinct(outcomes.begin(), outcomes.end());
  o.require(!distinct.contains("accepted") && distinct.size() == outcomes.size(), "corruptions not distinguished");
  o.detail << "two runs bit-identical (" << a.history.epochs.size() << " epochs), " << bytes.size()
           << "-byte checkpoint round-trips, 5 corruptions give 5 distinct errors";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient correctness", gradients}, {"architecture contract", architecture}, {"overfit", overfit},
      {"synthetic benchmark", benchmark},  {"augmentation", augmentation},          {"fold hygiene", folds},
      {"metric identities", metrics},      {"cardiac analysis", cardiac},           {"determinism & persistence", persistence}};
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.contains(i + 1)) continue;
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    all_pass = all_pass && o.pass;
    std::printf("criterion %zu (%s): %s - %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
