#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flynet/adam.hpp"
#include "flynet/augment.hpp"
#include "flynet/dataset.hpp"
#include "flynet/error.hpp"
#include "flynet/kfold.hpp"
#include "flynet/loss.hpp"
#include "flynet/network.hpp"
#include "flynet/random.hpp"

namespace flynet {

struct TrainConfig {
  Arch arch = Arch::flynet;
  std::size_t base_width = 64;
  std::size_t input_size = 128;
  std::size_t batch_size = 16;
  AdamHyper adam;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double min_delta = 0.001;
  std::uint64_t seed = 0;
  double binarize_threshold = 0.5;
  bool augment = true;
  // Samples drawn from the shuffled (augmented) pool per epoch; 0 = all of them.
  std::size_t epoch_samples = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  detail::require(c.batch_size >= 1, "train config: batch_size must be >= 1");
  detail::require(c.patience >= 1, "train config: patience must be >= 1");
  detail::require(c.min_delta >= 0.0, "train config: min_delta must be >= 0");
  detail::require(c.max_epochs >= 1, "train config: max_epochs must be >= 1");
  detail::require(c.binarize_threshold > 0.0 && c.binarize_threshold < 1.0,
                  "train config: threshold must lie in (0,1)");
  detail::require(c.adam.lr > 0.0 && c.adam.epsilon > 0.0 && c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 &&
                      c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0,
                  "train config: invalid Adam hyperparameters");
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_iou = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // epoch number of the highest validation IOU, earliest on ties

  double best_val_iou() const {
    for (const auto& e : epochs)
      if (e.epoch == best_epoch) return e.val_iou;
    return 0.0;
  }

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct Checkpoint {
  NetworkSpec spec;
  ParamSet<float> params;
  AdamState<float> adam;
  TrainConfig config;
  TrainHistory history;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// True once the last `patience` epochs each failed to beat the running best
// validation IOU by more than min_delta (the best only moves on such a gain).
inline bool early_stop_check(const TrainHistory& history, std::size_t patience, double min_delta) {
  detail::require(!history.epochs.empty(), "early_stop_check: empty history");
  double best = history.epochs.front().val_iou;
  std::size_t wait = 0;
  for (std::size_t i = 1; i < history.epochs.size(); ++i) {
    const double v = history.epochs[i].val_iou;
    if (v > best + min_delta) {
      best = v;
      wait = 0;
    } else {
      ++wait;
    }
  }
  return wait >= patience;
}

// ---------------------------------------------------------------------------
// Inference helpers
// ---------------------------------------------------------------------------

inline Tensor4<float> stack_images(std::span<const FramePair* const> frames) {
  const Shape s = frames.front()->image.shape();
  Tensor4<float> batch({frames.size(), 1, s.h, s.w});
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto src = frames[i]->image.data();
    std::copy(src.begin(), src.end(), batch.item(i).begin());
  }
  return batch;
}

// Per-frame probability maps, evaluated in batches.
inline std::vector<Tensor4<float>> predict(const NetworkSpec& spec, const ParamSet<float>& params,
                                           std::span<const FramePair> frames, std::size_t batch_size = 16) {
  std::vector<Tensor4<float>> out;
  out.reserve(frames.size());
  std::vector<const FramePair*> ptrs;
  for (std::size_t start = 0; start < frames.size(); start += batch_size) {
    ptrs.clear();
    for (std::size_t i = start; i < std::min(frames.size(), start + batch_size); ++i) ptrs.push_back(&frames[i]);
    const auto probs = forward(spec, params, stack_images(ptrs)).first;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      Tensor4<float> one({1, 1, spec.input_size, spec.input_size});
      auto src = probs.item(i);
      std::copy(src.begin(), src.end(), one.raw());
      out.push_back(std::move(one));
    }
  }
  return out;
}

inline std::vector<double> evaluate_iou(const NetworkSpec& spec, const ParamSet<float>& params,
                                        std::span<const FramePair> frames, double threshold,
                                        std::size_t batch_size = 16) {
  std::vector<double> ious;
  ious.reserve(frames.size());
  const auto probs = predict(spec, params, frames, batch_size);
  for (std::size_t i = 0; i < frames.size(); ++i)
    ious.push_back(hard_iou(binarize(probs[i], threshold).front(), frames[i].mask));
  return ious;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  Checkpoint checkpoint;  // best-validation weights
  TrainHistory history;
};

using EpochObserver = std::function<void(const EpochRecord&)>;

inline TrainResult train(const TrainConfig& config, std::span<const FramePair> train_set,
                         std::span<const FramePair> val_set, const EpochObserver& observer = {}) {
  validate(config);
  detail::require(!train_set.empty(), "train: empty training split");
  detail::require(!val_set.empty(), "train: empty validation split");
  for (auto set : {train_set, val_set})
    for (const auto& f : set)
      detail::require(f.image.shape() == Shape{1, 1, config.input_size, config.input_size} &&
                          f.mask.h == config.input_size && f.mask.w == config.input_size,
                      "train: frame " + std::to_string(f.frame_index) + " does not match input_size " +
                          std::to_string(config.input_size));
  if (config.augment) check_augmentable(train_set.front());

  auto init_rng = derive_rng(config.seed, 1);
  const NetworkSpec spec = make_spec(config.arch, config.input_size, config.base_width);
  ParamSet<float> params = init_network<float>(spec, init_rng);
  AdamState<float> adam = adam_init(params);

  // One shift draw per raw frame, from a stream keyed by its position.
  const std::uint64_t aug_seed = derive_seed(config.seed, 2);
  std::vector<ShiftMagnitudes> shifts(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) {
    auto r = derive_rng(aug_seed, i);
    shifts[i] = draw_shifts(r);
  }
  const std::size_t variants = config.augment ? kAugmentCopies : 1;
  std::vector<std::uint32_t> pool(train_set.size() * variants);
  std::iota(pool.begin(), pool.end(), 0U);
  auto shuffle_rng = derive_rng(config.seed, 3);
  const std::size_t per_epoch =
      config.epoch_samples == 0 ? pool.size() : std::min(config.epoch_samples, pool.size());

  TrainResult result;
  ParamSet<float> best_params = params;
  AdamState<float> best_adam = adam;
  double best_iou = -1.0;
  std::vector<FramePair> batch_frames;
  std::vector<const FramePair*> ptrs;
  std::vector<BinaryMask> masks;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t step = 0;
    for (std::size_t start = 0; start < per_epoch; start += config.batch_size, ++step) {
      const std::size_t end = std::min(per_epoch, start + config.batch_size);
      batch_frames.clear();
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t frame = pool[i] / variants;
        const auto variant = static_cast<AugmentVariant>(pool[i] % variants);
        batch_frames.push_back(augment_variant(train_set[frame], variant, shifts[frame]));
      }
      ptrs.clear();
      masks.clear();
      for (const auto& f : batch_frames) {
        ptrs.push_back(&f);
        masks.push_back(f.mask);
      }
      const Tensor4<float> batch = stack_images(ptrs);
      auto [probs, cache] = forward(spec, params, batch);
      const auto loss = soft_iou_loss(probs, std::span<const BinaryMask>(masks));
      if (!std::isfinite(loss.loss)) throw DivergenceError(epoch, step);
      const auto grads = backward(spec, params, cache, loss.dprobs);
      adam_step(params, grads.params, adam, config.adam);
      loss_sum += loss.loss * static_cast<double>(end - start);
    }
    const auto ious = evaluate_iou(spec, params, val_set, config.binarize_threshold);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(per_epoch), mean(ious)};
    result.history.epochs.push_back(rec);
    if (rec.val_iou > best_iou) {
      best_iou = rec.val_iou;
      result.history.best_epoch = epoch;
      best_params = params;
      best_adam = adam;
    }
    if (observer) observer(rec);
    if (early_stop_check(result.history, config.patience, config.min_delta)) break;
  }
  result.checkpoint = Checkpoint{spec, std::move(best_params), std::move(best_adam), config, result.history};
  return result;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct RoundResult {
  std::size_t round = 0;
  FoldPlan plan;
  double test_iou = 0.0;
  std::vector<double> dataset_ious;  // mean test IOU per test dataset, in plan.test order
  TrainResult trained;
};

struct CrossValResult {
  std::vector<RoundResult> rounds;
  double mean_iou = 0.0;
  double std_iou = 0.0;
  double min_iou = 0.0;
  double max_iou = 0.0;

  std::vector<double> scores() const {
    std::vector<double> s;
    for (const auto& r : rounds) s.push_back(r.test_iou);
    return s;
  }
};

inline std::vector<FramePair> gather_frames(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<FramePair> out;
  for (const auto& id : ids) {
    const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const FlyDataset& d) { return d.id == id; });
    detail::require(it != corpus.end(), "unknown dataset id '" + id + "'");
    out.insert(out.end(), it->frames.begin(), it->frames.end());
  }
  return out;
}

// Config for a round: fresh initialization from a round-specific seed.
inline TrainConfig round_config(const TrainConfig& base, std::size_t round) {
  TrainConfig c = base;
  c.seed = derive_seed(base.seed, 1000 + round);
  return c;
}

// Trains on plan.train, early-stops on plan.val, then scores plan.test once.
inline RoundResult run_round(const TrainConfig& config, const Corpus& corpus, const FoldPlan& plan,
                             const EpochObserver& observer = {}) {
  RoundResult r;
  r.round = plan.round;
  r.plan = plan;
  const auto train_frames = gather_frames(corpus, plan.train);
  const auto val_frames = gather_frames(corpus, plan.val);
  r.trained = train(round_config(config, plan.round), train_frames, val_frames, observer);
  const auto& ck = r.trained.checkpoint;
  std::vector<double> all;
  for (const auto& id : plan.test) {
    const auto frames = gather_frames(corpus, {id});
    const auto ious = evaluate_iou(ck.spec, ck.params, frames, config.binarize_threshold);
    r.dataset_ious.push_back(mean(ious));
    all.insert(all.end(), ious.begin(), ious.end());
  }
  r.test_iou = mean(all);
  return r;
}

using RoundObserver = std::function<void(const RoundResult&)>;

inline CrossValResult cross_validate(const TrainConfig& config, const Corpus& corpus, std::size_t k,
                                     const RoundObserver& on_round = {}, const EpochObserver& on_epoch = {}) {
  CrossValResult cv;
  for (std::size_t round = 0; round < k; ++round) {
    const FoldPlan plan = kfold_split(corpus, k, round, config.seed);
    cv.rounds.push_back(run_round(config, corpus, plan, on_epoch));
    if (on_round) on_round(cv.rounds.back());
  }
  const auto s = cv.scores();
  cv.mean_iou = mean(s);
  cv.std_iou = stddev(s);
  cv.min_iou = s.empty() ? 0.0 : *std::min_element(s.begin(), s.end());
  cv.max_iou = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
  return cv;
}

// ---------------------------------------------------------------------------
// JSON forms (checkpoint header, logs)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"arch", to_string(c.arch)},     {"base_width", c.base_width},
                     {"input_size", c.input_size},    {"batch_size", c.batch_size},
                     {"lr", c.adam.lr},               {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},         {"epsilon", c.adam.epsilon},
                     {"max_epochs", c.max_epochs},    {"patience", c.patience},
                     {"min_delta", c.min_delta},      {"seed", c.seed},
                     {"threshold", c.binarize_threshold}, {"augment", c.augment},
                     {"epoch_samples", c.epoch_samples}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.base_width = j.at("base_width").get<std::size_t>();
  c.input_size = j.at("input_size").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.adam.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.epsilon = j.at("epsilon").get<double>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.min_delta = j.at("min_delta").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.binarize_threshold = j.at("threshold").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.epoch_samples = j.at("epoch_samples").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_iou", e.val_iou}});
  j = nlohmann::json{{"best_epoch", h.best_epoch}, {"epochs", std::move(epochs)}};
}

inline void from_json(const nlohmann::json& j, TrainHistory& h) {
  h.best_epoch = j.at("best_epoch").get<std::size_t>();
  h.epochs.clear();
  for (const auto& e : j.at("epochs"))
    h.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                        e.at("val_iou").get<double>()});
}

}  // namespace flynet
