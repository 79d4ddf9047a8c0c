// Synthesize a small corpus, train a narrow FlyNet on one fold, then read
// cardiac parameters off the predicted masks of a held-out dataset.
#include <cstdio>

#include "flynet/cardio.hpp"
#include "flynet/synth.hpp"
#include "flynet/trainer.hpp"

int main() {
  using namespace flynet;

  SynthCorpusOptions so;
  so.datasets_per_stage = 3;
  so.n_frames = 40;
  so.resolution = 64;
  so.period_s = 0.5;
  const Corpus corpus = synth_corpus(so);

  TrainConfig config;
  config.base_width = 8;
  config.input_size = 64;
  config.batch_size = 8;
  config.max_epochs = 6;
  config.epoch_samples = 320;
  config.seed = 3;

  const FoldPlan plan = kfold_split(corpus, 3, 0, config.seed);
  const auto result = train(config, gather_frames(corpus, plan.train), gather_frames(corpus, plan.val),
                            [](const EpochRecord& e) {
                              std::printf("epoch %zu  loss %.4f  val IOU %.4f\n", e.epoch, e.train_loss, e.val_iou);
                            });

  const auto& ck = result.checkpoint;
  const auto test = gather_frames(corpus, {plan.test.front()});
  const auto probs = predict(ck.spec, ck.params, test);
  Trace diameter{so.fps, {}};
  double iou = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const BinaryMask m = binarize(probs[i], 0.5).front();
    iou += hard_iou(m, test[i].mask);
    diameter.samples.push_back({test[i].frame_index, mask_diameter(m, DiameterMode::vertical_chord)});
  }
  const CardiacReport r = cardiac_params(diameter, 5, 0.10);
  char hr[64];
  if (r.hr_bpm) std::snprintf(hr, sizeof hr, "%.1f bpm", *r.hr_bpm);
  std::printf("%s: IOU %.3f  EDD %.1f px  ESD %.1f px  FS %.3f  HR %s\n", plan.test.front().c_str(),
              iou / static_cast<double>(test.size()), r.edd_px, r.esd_px, r.fs,
              r.hr_bpm ? hr : r.hr_absent_reason.c_str());
}
